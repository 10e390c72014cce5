import { ApiError, StaleTokenError, SteeringApi } from "./api.js";
import type { ProgressPoint, SessionConfig, SessionView, TrajectoryDoc } from "./types.js";

export type Phase = "idle" | "loading" | "choosing" | "submitting" | "done" | "error";

export interface ControllerState {
  phase: Phase;
  sessionId: string | null;
  view: SessionView | null;
  /** Local selection; not sent anywhere until submit. */
  selected: Set<number>;
  progress: ProgressPoint[];
  trajectory: TrajectoryDoc | null;
  error: string | null;
}

function euclidean(a: number[], b: number[]): number {
  let sum = 0;
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    const d = (a[i] ?? 0) - (b[i] ?? 0);
    sum += d * d;
  }
  return Math.sqrt(sum);
}

/**
 * Drives one steering session: holds the current view, the local selection,
 * and the progress history. All state shown to the user comes from service
 * responses; the controller only adds the local (unsubmitted) selection and
 * the optional distance-to-target metric derived from served previews.
 *
 * At most one request is in flight at any time; a stale-token rejection
 * triggers a refetch of the current round instead of surfacing an error.
 */
export class SteeringController {
  readonly state: ControllerState = {
    phase: "idle",
    sessionId: null,
    view: null,
    selected: new Set(),
    progress: [],
    trajectory: null,
    error: null,
  };
  private inFlight = false;
  private pollHandle: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: SteeringApi,
    private readonly config: SessionConfig,
    private readonly target: number[] | null = null,
    private readonly onChange: (state: ControllerState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  private recordProgress(view: SessionView): void {
    const point: ProgressPoint = { step: view.step, t: view.t };
    if (this.target && view.candidates.length > 0) {
      point.metric = Math.min(
        ...view.candidates.map((c) => euclidean(c.preview, this.target as number[])),
      );
    } else if (this.target && view.final_state) {
      point.metric = euclidean(view.final_state, this.target);
    }
    this.progressPush(point);
  }

  private progressPush(point: ProgressPoint): void {
    const last = this.state.progress[this.state.progress.length - 1];
    if (last && last.step === point.step) {
      this.state.progress[this.state.progress.length - 1] = point;
    } else {
      this.state.progress.push(point);
    }
  }

  private async applyView(view: SessionView): Promise<void> {
    this.state.view = view;
    this.state.error = null;
    this.state.selected = new Set();
    this.recordProgress(view);
    if (view.status === "done") {
      this.state.phase = "done";
      if (this.state.sessionId) {
        this.state.trajectory = await this.api.getTrajectory(this.state.sessionId);
      }
    } else {
      this.state.phase = "choosing";
    }
    this.emit();
  }

  async start(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.state.phase = "loading";
    this.state.error = null;
    this.emit();
    try {
      const created = await this.api.createSession(this.config);
      this.state.sessionId = created.id;
      await this.applyView(created.state);
    } catch (err) {
      this.fail(err);
    } finally {
      this.inFlight = false;
    }
  }

  /** Toggle a candidate locally; nothing is sent until submit. */
  toggle(index: number): void {
    if (this.state.phase !== "choosing") return;
    if (this.state.selected.has(index)) {
      this.state.selected.delete(index);
    } else {
      this.state.selected.add(index);
    }
    this.emit();
  }

  /** Submit the current selection (empty means "no preference"). */
  async submit(): Promise<void> {
    if (this.inFlight || this.state.phase !== "choosing") return;
    const view = this.state.view;
    const sessionId = this.state.sessionId;
    if (!view || !sessionId) return;
    this.inFlight = true;
    this.state.phase = "submitting";
    this.emit();
    try {
      const next = await this.api.submitChoice(sessionId, view.token, [...this.state.selected]);
      await this.applyView(next);
    } catch (err) {
      if (err instanceof StaleTokenError) {
        // someone already advanced this round: re-sync and re-render it
        try {
          await this.applyView(await this.api.getView(sessionId));
        } catch (refetchErr) {
          this.fail(refetchErr);
        }
      } else {
        this.fail(err);
      }
    } finally {
      this.inFlight = false;
    }
  }

  /** Complete the remaining rounds without stating further preferences. */
  async finishEarly(): Promise<void> {
    if (this.inFlight || this.state.phase !== "choosing") return;
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    this.inFlight = true;
    this.state.phase = "submitting";
    this.emit();
    try {
      await this.applyView(await this.api.finishEarly(sessionId));
    } catch (err) {
      this.fail(err);
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-sync with the service; used by polling and the error-banner retry. */
  async refresh(): Promise<void> {
    if (this.inFlight) return;
    const sessionId = this.state.sessionId;
    if (!sessionId) {
      await this.start();
      return;
    }
    this.inFlight = true;
    try {
      const view = await this.api.getView(sessionId);
      const keep = this.state.selected;
      await this.applyView(view);
      // refreshing must not wipe an unsubmitted selection for the same round
      if (this.state.view && this.state.view.token === view.token) {
        this.state.selected = keep;
        this.emit();
      }
    } catch (err) {
      this.fail(err);
    } finally {
      this.inFlight = false;
    }
  }

  startPolling(intervalMs = 1000): void {
    this.stopPolling();
    this.pollHandle = setInterval(() => {
      if (!this.inFlight && this.state.phase === "choosing") {
        void this.refresh();
      }
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.pollHandle !== null) {
      clearInterval(this.pollHandle);
      this.pollHandle = null;
    }
  }

  private fail(err: unknown): void {
    this.state.phase = "error";
    this.state.error =
      err instanceof ApiError ? err.message : `unexpected failure: ${String(err)}`;
    this.emit();
  }
}
