/** Server-authoritative countdown for test phases.
 *
 * The client never derives its own deadline: it displays the epoch-seconds
 * deadline the server returned from phase/start, so clock skew cannot
 * create disputes about when submissions close.
 */

export interface CountdownView {
  /** "mm:ss" (or "h:mm:ss" beyond an hour), never negative */
  display: string;
  remainingSeconds: number;
  expired: boolean;
  /** submit controls are disabled once expired */
  submitEnabled: boolean;
  /** true for untimed (learning) phases: no countdown rendered */
  untimed: boolean;
}

export function countdownView(deadline: number | null, nowSeconds: number): CountdownView {
  if (deadline === null) {
    return {
      display: "",
      remainingSeconds: Infinity,
      expired: false,
      submitEnabled: true,
      untimed: true,
    };
  }
  const remaining = Math.max(0, Math.floor(deadline - nowSeconds));
  const expired = nowSeconds > deadline;
  return {
    display: formatSeconds(remaining),
    remainingSeconds: remaining,
    expired,
    submitEnabled: !expired,
    untimed: false,
  };
}

export function formatSeconds(total: number): string {
  if (!Number.isFinite(total) || total < 0) throw new Error("seconds must be >= 0");
  const s = Math.floor(total);
  const hours = Math.floor(s / 3600);
  const minutes = Math.floor((s % 3600) / 60);
  const seconds = s % 60;
  const mm = String(minutes).padStart(2, "0");
  const ss = String(seconds).padStart(2, "0");
  return hours > 0 ? `${hours}:${mm}:${ss}` : `${mm}:${ss}`;
}

/** Elapsed-time stopwatch for per-case timing reported with submissions. */
export class CaseStopwatch {
  private startedAt: number | null = null;

  start(nowSeconds: number): void {
    this.startedAt = nowSeconds;
  }

  elapsed(nowSeconds: number): number {
    if (this.startedAt === null) throw new Error("stopwatch not started");
    return Math.max(0, nowSeconds - this.startedAt);
  }
}
