/** Typed client for the timbre-transfer service. The UI holds no model
 * logic: every displayed number is a field of one of these responses. */

export interface Condition {
  pitch_class: number;
  octave: number;
  instrument: number;
}

export interface ModelInfo {
  variant: string;
  latent_dim: number;
  instruments: string[];
  pitch_classes: number;
  octaves: number;
  n_bins: number;
  t_chunk: number;
}

export interface DescriptorSet {
  flatness: number;
  centroid: number;
  rolloff: number;
  loudness: number;
}

export const DESCRIPTOR_NAMES: (keyof DescriptorSet)[] = [
  "flatness",
  "centroid",
  "rolloff",
  "loudness",
];

export interface DecodeRequest {
  z: number[];
  pitch_class: number;
  octave: number;
  instrument: number;
  render_audio?: boolean;
  gl_iters?: number;
}

export interface DecodeResponse {
  spectrogram: number[][];
  descriptors: { mean: DescriptorSet; per_frame: Record<string, number[]> };
  wav_base64?: string;
}

export interface EmbedPoint {
  z: [number, number, number];
  label: Condition;
  note_id: string;
}

export interface TopologyPoint extends DescriptorSet {
  z: [number, number, number];
}

export interface TopologyResponse {
  condition: Condition;
  n: number;
  lo: number;
  hi: number;
  points: TopologyPoint[];
}

export interface TransferRequestBody {
  wav_base64?: string;
  note_id?: string;
  source_instrument: number;
  target_instrument: number;
  pitch_class?: number;
  octave?: number;
  gl_iters?: number;
}

export interface TransferResponse {
  wav_base64: string;
  descriptor_summary: DescriptorSet;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceError(0, "unreachable", `service unreachable: ${err}`);
    }
    if (!resp.ok) {
      let code = "http_error";
      let message = `HTTP ${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.code === "string") {
          code = body.code;
          message = body.message ?? message;
        }
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  modelInfo(): Promise<ModelInfo> {
    return this.request<ModelInfo>("/model/info");
  }

  embedTestset(instrument?: number | string): Promise<EmbedPoint[]> {
    return this.post<EmbedPoint[]>("/embed-testset", {
      instrument: instrument ?? null,
    });
  }

  decode(req: DecodeRequest): Promise<DecodeResponse> {
    return this.post<DecodeResponse>("/decode", req);
  }

  transfer(req: TransferRequestBody): Promise<TransferResponse> {
    return this.post<TransferResponse>("/transfer", req);
  }

  topology(
    condition: Condition,
    n: number,
    lo: number,
    hi: number,
  ): Promise<TopologyResponse> {
    const params = new URLSearchParams({
      instrument: String(condition.instrument),
      pitch: String(condition.pitch_class),
      octave: String(condition.octave),
      n: String(n),
      lo: String(lo),
      hi: String(hi),
    });
    return this.request<TopologyResponse>(`/topology?${params}`);
  }
}
