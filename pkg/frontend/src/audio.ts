/** WAV playback with a stop-previous contract, plus payload checksums used
 * to verify that identical states audition identical audio. */

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node (tests)
  return new Uint8Array(Buffer.from(b64, "base64"));
}

/** FNV-1a 32-bit checksum. */
export function checksum(bytes: Uint8Array): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

export class Player {
  private ctx: AudioContext | undefined;
  private current: AudioBufferSourceNode | undefined;

  private ensureContext(): AudioContext {
    if (!this.ctx) this.ctx = new AudioContext();
    return this.ctx;
  }

  /** Decode and play; any previous playback stops first. */
  async play(wavBytes: Uint8Array): Promise<void> {
    this.stop();
    const ctx = this.ensureContext();
    const buf = await ctx.decodeAudioData(
      wavBytes.buffer.slice(wavBytes.byteOffset, wavBytes.byteOffset + wavBytes.byteLength) as ArrayBuffer,
    );
    const src = ctx.createBufferSource();
    src.buffer = buf;
    src.connect(ctx.destination);
    src.start();
    this.current = src;
  }

  stop(): void {
    if (this.current) {
      try {
        this.current.stop();
      } catch {
        /* already stopped */
      }
      this.current = undefined;
    }
  }
}
