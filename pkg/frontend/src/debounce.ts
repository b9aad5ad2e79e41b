/** Rate limiting and stale-response handling for cursor-driven requests. */

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): void;
}

/** Trailing-edge debounce; at most one call per `ms` of quiet. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout,
    clear: clearTimeout,
  },
): Debounced<A> {
  let handle: ReturnType<typeof setTimeout> | undefined;
  let pending: A | undefined;
  const wrapped = (...args: A) => {
    pending = args;
    if (handle !== undefined) timers.clear(handle);
    handle = timers.set(() => {
      handle = undefined;
      const args2 = pending!;
      pending = undefined;
      fn(...args2);
    }, ms);
  };
  wrapped.cancel = () => {
    if (handle !== undefined) timers.clear(handle);
    handle = undefined;
    pending = undefined;
  };
  wrapped.flush = () => {
    if (handle !== undefined) {
      timers.clear(handle);
      handle = undefined;
      const args2 = pending!;
      pending = undefined;
      fn(...args2);
    }
  };
  return wrapped;
}

/** Monotone sequence numbers; responses for superseded requests are
 * discarded instead of racing the display. */
export class SequenceGate {
  private issued = 0;
  private latestAccepted = 0;

  next(): number {
    return ++this.issued;
  }

  /** True iff this response is newer than anything already shown. */
  accept(seq: number): boolean {
    if (seq <= this.latestAccepted) return false;
    this.latestAccepted = seq;
    return true;
  }
}

/** Runs async tasks; only the newest task's result reaches the callback. */
export class LatestOnly<T> {
  private gate = new SequenceGate();

  run(task: () => Promise<T>, onResult: (value: T) => void, onError?: (e: unknown) => void): void {
    const seq = this.gate.next();
    task().then(
      (value) => {
        if (this.gate.accept(seq)) onResult(value);
      },
      (err) => {
        if (this.gate.accept(seq) && onError) onError(err);
      },
    );
  }
}
