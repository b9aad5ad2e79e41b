/** Explorer wiring: latent scatter + draggable cursor, condition controls,
 * debounced decoding, audition, topology slice overlay and A/B compare.
 * All numbers shown come straight from service responses. */

import {
  ApiClient,
  DESCRIPTOR_NAMES,
  type DecodeResponse,
  type DescriptorSet,
  type EmbedPoint,
  type ModelInfo,
  type TopologyResponse,
} from "./api.js";
import { base64ToBytes, checksum, Player } from "./audio.js";
import { debounce, LatestOnly } from "./debounce.js";
import { gridExtent, nearestPlane, sliceGrid, valueToColor } from "./heatmap.js";
import {
  INSTRUMENT_PALETTE,
  PITCH_PALETTE,
  project,
  screenDeltaToLatent,
  type View,
} from "./scatter.js";
import { spectrogramPixels } from "./spectrogram.js";
import {
  type AbSlot,
  decodeStateFromUrl,
  defaultState,
  descriptorDeltas,
  encodeStateToUrl,
  type ExplorerState,
  sameState,
  sanitizeState,
} from "./state.js";

const DEBOUNCE_MS = 100; // matches the service's decode latency budget

class ExplorerApp {
  private api: ApiClient;
  private info!: ModelInfo;
  private points: EmbedPoint[] = [];
  private state: ExplorerState = defaultState();
  private view: View = { yaw: 0.6, pitch: 0.35, scale: 60, cx: 0, cy: 0 };
  private decoder = new LatestOnly<DecodeResponse>();
  private player = new Player();
  private topo: TopologyResponse | undefined;
  private colorBy: "instrument" | "pitch" = "instrument";
  private slots: (AbSlot & { descriptors?: DescriptorSet; wav?: Uint8Array })[] = [];
  private lastDecode?: DecodeResponse;

  private scatterCanvas = document.getElementById("scatter") as HTMLCanvasElement;
  private specCanvas = document.getElementById("spectrogram") as HTMLCanvasElement;
  private banner = document.getElementById("banner") as HTMLElement;

  constructor(baseUrl: string) {
    this.api = new ApiClient(baseUrl);
  }

  async start(): Promise<void> {
    try {
      this.info = await this.api.modelInfo();
      this.points = await this.api.embedTestset();
    } catch (err) {
      this.showBanner(`service unreachable: ${err}`, true);
      return;
    }
    this.state = sanitizeState(decodeStateFromUrl(location.hash), this.info);
    this.buildControls();
    this.bindCursorDrag();
    this.renderScatter();
    void this.refreshTopology();
    this.requestDecode();
    window.addEventListener("hashchange", () => {
      this.state = sanitizeState(decodeStateFromUrl(location.hash), this.info);
      this.syncControls();
      this.renderScatter();
      this.requestDecode();
    });
  }

  private showBanner(message: string, disable = false): void {
    this.banner.textContent = message;
    this.banner.style.display = message ? "block" : "none";
    if (disable) {
      document
        .querySelectorAll("button, select, input")
        .forEach((el) => ((el as HTMLButtonElement).disabled = true));
    }
  }

  private toast(message: string): void {
    this.banner.textContent = message;
    this.banner.style.display = "block";
    setTimeout(() => (this.banner.style.display = "none"), 4000);
  }

  private pushUrl(): void {
    history.replaceState(null, "", encodeStateToUrl(this.state));
  }

  // --- controls -------------------------------------------------------------

  private buildControls(): void {
    const cond = document.getElementById("condition")!;
    cond.innerHTML = "";
    const mkSelect = (id: string, count: number, names?: string[]) => {
      const sel = document.createElement("select");
      sel.id = id;
      for (let i = 0; i < count; i++) {
        const opt = document.createElement("option");
        opt.value = String(i);
        opt.textContent = names ? names[i] : String(i);
        sel.appendChild(opt);
      }
      cond.appendChild(sel);
      sel.addEventListener("change", () => {
        this.readControls();
        this.pushUrl();
        this.renderScatter();
        void this.refreshTopology();
        this.requestDecode();
      });
      return sel;
    };
    mkSelect("sel-pitch", this.info.pitch_classes);
    mkSelect("sel-octave", this.info.octaves);
    mkSelect("sel-instrument", this.info.instruments.length, this.info.instruments);
    const overlay = document.createElement("select");
    overlay.id = "sel-overlay";
    for (const name of DESCRIPTOR_NAMES) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      overlay.appendChild(opt);
    }
    cond.appendChild(overlay);
    overlay.addEventListener("change", () => {
      this.state.overlay = overlay.value as ExplorerState["overlay"];
      this.pushUrl();
      this.renderScatter();
    });
    const colorToggle = document.getElementById("color-toggle") as HTMLButtonElement;
    colorToggle.addEventListener("click", () => {
      this.colorBy = this.colorBy === "instrument" ? "pitch" : "instrument";
      this.renderScatter();
    });
    document
      .getElementById("audition")!
      .addEventListener("click", () => void this.audition());
    document
      .getElementById("slot-a")!
      .addEventListener("click", () => void this.saveSlot(0));
    document
      .getElementById("slot-b")!
      .addEventListener("click", () => void this.saveSlot(1));
    this.renderLegend();
    this.syncControls();
  }

  private syncControls(): void {
    (document.getElementById("sel-pitch") as HTMLSelectElement).value = String(
      this.state.condition.pitch_class,
    );
    (document.getElementById("sel-octave") as HTMLSelectElement).value = String(
      this.state.condition.octave,
    );
    (document.getElementById("sel-instrument") as HTMLSelectElement).value = String(
      this.state.condition.instrument,
    );
    (document.getElementById("sel-overlay") as HTMLSelectElement).value =
      this.state.overlay;
  }

  private readControls(): void {
    this.state.condition = {
      pitch_class: Number((document.getElementById("sel-pitch") as HTMLSelectElement).value),
      octave: Number((document.getElementById("sel-octave") as HTMLSelectElement).value),
      instrument: Number(
        (document.getElementById("sel-instrument") as HTMLSelectElement).value,
      ),
    };
  }

  private renderLegend(): void {
    const legend = document.getElementById("legend")!;
    legend.innerHTML = "";
    this.info.instruments.forEach((name, i) => {
      const item = document.createElement("span");
      item.className = "legend-item";
      item.innerHTML = `<span class="swatch" style="background:${INSTRUMENT_PALETTE[i % INSTRUMENT_PALETTE.length]}"></span>${name}`;
      legend.appendChild(item);
    });
  }

  // --- latent view ------------------------------------------------------------

  private bindCursorDrag(): void {
    let dragging = false;
    let last: [number, number] = [0, 0];
    this.scatterCanvas.addEventListener("pointerdown", (e) => {
      dragging = true;
      last = [e.offsetX, e.offsetY];
      this.scatterCanvas.setPointerCapture(e.pointerId);
    });
    this.scatterCanvas.addEventListener("pointermove", (e) => {
      if (!dragging) return;
      const delta = screenDeltaToLatent(e.offsetX - last[0], e.offsetY - last[1], this.view);
      last = [e.offsetX, e.offsetY];
      const [lo, hi] = this.state.box;
      this.state.cursor = this.state.cursor.map((v, i) =>
        Math.min(hi, Math.max(lo, v + delta[i])),
      ) as [number, number, number];
      this.player.stop(); // never talk over a moving cursor
      this.pushUrl();
      this.renderScatter();
      this.requestDecode();
    });
    this.scatterCanvas.addEventListener("pointerup", () => (dragging = false));
    this.scatterCanvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.view.yaw += e.deltaX * 0.005;
      this.view.pitch += e.deltaY * 0.005;
      this.renderScatter();
    });
  }

  private renderScatter(): void {
    const ctx = this.scatterCanvas.getContext("2d")!;
    const { width, height } = this.scatterCanvas;
    this.view.cx = width / 2;
    this.view.cy = height / 2;
    ctx.clearRect(0, 0, width, height);

    if (this.topo) this.renderSliceHeat(ctx);

    const projected = this.points
      .map((p) => ({ p, s: project(p.z, this.view) }))
      .sort((a, b) => a.s.depth - b.s.depth);
    for (const { p, s } of projected) {
      ctx.fillStyle =
        this.colorBy === "instrument"
          ? INSTRUMENT_PALETTE[p.label.instrument % INSTRUMENT_PALETTE.length]
          : PITCH_PALETTE[p.label.pitch_class];
      ctx.globalAlpha = 0.8;
      ctx.beginPath();
      ctx.arc(s.x, s.y, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.globalAlpha = 1.0;
    const c = project(this.state.cursor, this.view);
    ctx.strokeStyle = "#111";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(c.x, c.y, 7, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(c.x - 11, c.y);
    ctx.lineTo(c.x + 11, c.y);
    ctx.moveTo(c.x, c.y - 11);
    ctx.lineTo(c.x, c.y + 11);
    ctx.stroke();
  }

  private renderSliceHeat(ctx: CanvasRenderingContext2D): void {
    const topo = this.topo!;
    const axis = this.state.sliceAxis;
    const plane = nearestPlane(this.state.cursor[axis], topo.lo, topo.hi, topo.n);
    const grid = sliceGrid(topo.points, topo.n, axis, plane, this.state.overlay);
    const [lo, hi] = gridExtent(grid);
    const cell = (topo.hi - topo.lo) / (topo.n - 1);
    const axes = [0, 1, 2].filter((a) => a !== axis) as [number, number];
    for (let a = 0; a < topo.n; a++) {
      for (let b = 0; b < topo.n; b++) {
        const z: [number, number, number] = [...this.state.cursor];
        z[axis] = topo.lo + plane * cell;
        z[axes[0]] = topo.lo + a * cell;
        z[axes[1]] = topo.lo + b * cell;
        const s = project(z, this.view);
        const [r, g, bl] = valueToColor(grid[a][b], lo, hi);
        ctx.fillStyle = `rgba(${r},${g},${bl},0.25)`;
        ctx.fillRect(s.x - 4, s.y - 4, 8, 8);
      }
    }
  }

  private async refreshTopology(): Promise<void> {
    try {
      this.topo = await this.api.topology(this.state.condition, 9, ...this.state.box);
      this.renderScatter();
    } catch (err) {
      this.toast(`topology unavailable: ${err}`);
    }
  }

  // --- decoding ----------------------------------------------------------------

  private requestDecode = debounce(() => {
    this.decoder.run(
      () =>
        this.api.decode({
          z: [...this.state.cursor],
          ...this.state.condition,
        }),
      (resp) => this.showDecode(resp),
      (err) => this.toast(`decode failed: ${err}`),
    );
  }, DEBOUNCE_MS);

  private showDecode(resp: DecodeResponse): void {
    this.lastDecode = resp;
    const { width, height, rgba } = spectrogramPixels(resp.spectrogram);
    const ctx = this.specCanvas.getContext("2d")!;
    const img = new ImageData(rgba, width, height);
    createImageBitmap(img).then((bmp) => {
      ctx.imageSmoothingEnabled = false;
      ctx.clearRect(0, 0, this.specCanvas.width, this.specCanvas.height);
      ctx.drawImage(bmp, 0, 0, this.specCanvas.width, this.specCanvas.height);
    });
    const readout = document.getElementById("descriptors")!;
    readout.innerHTML = DESCRIPTOR_NAMES.map(
      (k) => `<div>${k}: ${resp.descriptors.mean[k].toFixed(3)}</div>`,
    ).join("");
  }

  private async audition(): Promise<void> {
    try {
      const resp = await this.api.decode({
        z: [...this.state.cursor],
        ...this.state.condition,
        render_audio: true,
      });
      this.showDecode(resp); // readouts update together with the playback
      const wav = base64ToBytes(resp.wav_base64!);
      document.getElementById("checksum")!.textContent =
        `audio checksum ${checksum(wav).toString(16)}`;
      await this.player.play(wav);
    } catch (err) {
      this.toast(`audition failed: ${err}`);
    }
  }

  // --- A/B compare ----------------------------------------------------------------

  private async saveSlot(index: 0 | 1): Promise<void> {
    try {
      const resp = await this.api.decode({
        z: [...this.state.cursor],
        ...this.state.condition,
        render_audio: true,
      });
      this.slots[index] = {
        z: [...this.state.cursor],
        condition: { ...this.state.condition },
        descriptors: resp.descriptors.mean,
        wav: base64ToBytes(resp.wav_base64!),
      };
      this.renderAb();
    } catch (err) {
      this.toast(`slot save failed: ${err}`);
    }
  }

  private renderAb(): void {
    const panel = document.getElementById("ab-panel")!;
    const [a, b] = this.slots;
    const play = document.getElementById("ab-play") as HTMLButtonElement;
    play.disabled = !(a && b);
    if (!a || !b) {
      panel.textContent = "fill both slots to compare";
      return;
    }
    const deltas = descriptorDeltas(a.descriptors!, b.descriptors!);
    const fmt = (c: AbSlot) =>
      `z=[${c.z.map((v) => v.toFixed(2)).join(", ")}] pc=${c.condition.pitch_class} oct=${c.condition.octave} inst=${c.condition.instrument}`;
    panel.innerHTML =
      `<div>A: ${fmt(a)}</div><div>B: ${fmt(b)}</div>` +
      DESCRIPTOR_NAMES.map((k) => `<div>d ${k}: ${deltas[k].toFixed(4)}</div>`).join("") +
      (sameState(a, b) ? "<div>identical states</div>" : "");
    play.onclick = async () => {
      await this.player.play(a.wav!);
      setTimeout(() => void this.player.play(b.wav!), 900);
    };
  }
}

export function boot(): void {
  const baseUrl =
    new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8080";
  void new ExplorerApp(baseUrl).start();
}

if (typeof document !== "undefined" && document.getElementById("scatter")) {
  boot();
}
