import { describe, expect, it, vi } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as typeof fetch;
}

describe("api client", () => {
  it("requests model info from the right path", async () => {
    const fetchImpl = mockFetch(200, { variant: "move_fpod", latent_dim: 3 });
    const api = new ApiClient("http://x:1/", fetchImpl);
    const info = await api.modelInfo();
    expect(info.latent_dim).toBe(3);
    expect(fetchImpl).toHaveBeenCalledWith("http://x:1/model/info", undefined);
  });

  it("posts decode requests as JSON", async () => {
    const fetchImpl = mockFetch(200, { spectrogram: [[0]], descriptors: { mean: {}, per_frame: {} } });
    const api = new ApiClient("http://x:1", fetchImpl);
    await api.decode({ z: [0, 0, 0], pitch_class: 1, octave: 2, instrument: 0 });
    const [url, init] = (fetchImpl as any).mock.calls[0];
    expect(url).toBe("http://x:1/decode");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body).z).toEqual([0, 0, 0]);
  });

  it("builds topology query strings", async () => {
    const fetchImpl = mockFetch(200, { points: [] });
    const api = new ApiClient("http://x:1", fetchImpl);
    await api.topology({ pitch_class: 4, octave: 3, instrument: 1 }, 9, -3, 3);
    const [url] = (fetchImpl as any).mock.calls[0];
    expect(url).toContain("/topology?");
    expect(url).toContain("instrument=1");
    expect(url).toContain("pitch=4");
    expect(url).toContain("n=9");
  });

  it("surfaces structured service errors", async () => {
    const api = new ApiClient("http://x:1", mockFetch(413, { code: "audio_too_long", message: "too long" }));
    await expect(
      api.transfer({ note_id: "n", source_instrument: 0, target_instrument: 1 }),
    ).rejects.toMatchObject({ status: 413, code: "audio_too_long" });
  });

  it("wraps network failures as unreachable", async () => {
    const failing = vi.fn(async () => {
      throw new Error("ECONNREFUSED");
    }) as unknown as typeof fetch;
    const api = new ApiClient("http://x:1", failing);
    await expect(api.modelInfo()).rejects.toBeInstanceOf(ServiceError);
    await expect(api.modelInfo()).rejects.toMatchObject({ code: "unreachable" });
  });
});
