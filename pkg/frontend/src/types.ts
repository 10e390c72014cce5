/** Wire types of the steering service; field names match the HTTP API. */

export interface Candidate {
  index: number;
  /** Clean-completion coordinates of this candidate (length = model dim). */
  preview: number[];
}

export type SessionStatus = "awaiting_choice" | "running" | "done";

export interface SessionView {
  status: SessionStatus;
  step: number;
  t: number;
  token: string;
  candidates: Candidate[];
  /** Present only once the session is done. */
  final_state?: number[];
}

export interface SessionConfig {
  model: string;
  demon: "selection";
  K: number;
  T: number;
  beta: number;
  seed: number;
  ode_steps?: number;
}

export interface CreateResponse {
  id: string;
  state: SessionView;
}

export interface TrajectoryStep {
  t: number;
  delta: number;
  estimates: number[];
  weights: number[];
  tau: number | null;
  mu_hat: number | null;
  z_star_norm: number;
}

export interface TrajectoryDoc {
  steps: TrajectoryStep[];
  final_state: number[];
  final_reward: number | null;
  reward_queries: number;
  wall_time_ms: number | null;
  choices: number[][];
}

/** One progress point per completed round, for the chart. */
export interface ProgressPoint {
  step: number;
  t: number;
  /** Distance of the best preview to the reference target, when configured. */
  metric?: number;
}
