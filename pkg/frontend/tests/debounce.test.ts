import { describe, expect, it, vi } from "vitest";

import { debounce, LatestOnly, SequenceGate } from "../src/debounce.js";

describe("debounce", () => {
  it("fires once per quiet period with the latest arguments", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 100);
    fn(1);
    fn(2);
    fn(3);
    vi.advanceTimersByTime(99);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
    vi.useRealTimers();
  });

  it("caps the request rate at 1 per interval (<= 10 req/s at 100 ms)", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 100);
    // simulate a 1-second continuous drag emitting every 10 ms
    for (let t = 0; t < 1000; t += 10) {
      fn(t);
      vi.advanceTimersByTime(10);
    }
    vi.advanceTimersByTime(100);
    expect(calls.length).toBeLessThanOrEqual(10);
    expect(calls[calls.length - 1]).toBe(990);
    vi.useRealTimers();
  });

  it("cancel drops the pending call", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 50);
    fn(1);
    fn.cancel();
    vi.advanceTimersByTime(100);
    expect(calls).toEqual([]);
    vi.useRealTimers();
  });
});

describe("stale response handling", () => {
  it("sequence gate rejects superseded responses", () => {
    const gate = new SequenceGate();
    const a = gate.next();
    const b = gate.next();
    expect(gate.accept(b)).toBe(true);
    expect(gate.accept(a)).toBe(false); // older response arrives late
  });

  it("LatestOnly only surfaces the newest task's result", async () => {
    const results: string[] = [];
    const runner = new LatestOnly<string>();
    let resolveSlow!: (v: string) => void;
    const slow = new Promise<string>((res) => (resolveSlow = res));
    runner.run(() => slow, (v) => results.push(v));
    runner.run(() => Promise.resolve("new"), (v) => results.push(v));
    await Promise.resolve();
    resolveSlow("stale");
    await slow;
    await new Promise((r) => setTimeout(r, 0));
    expect(results).toEqual(["new"]);
  });
});
