import type { CreateResponse, SessionConfig, SessionView, TrajectoryDoc } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** The submitted step token no longer matches the session's current round. */
export class StaleTokenError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the steering service endpoints. */
export class SteeringApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (response.status === 409) {
      throw new StaleTokenError(await response.text());
    }
    if (!response.ok) {
      throw new ApiError(response.status, `${init?.method ?? "GET"} ${path}: ${response.status}`);
    }
    return (await response.json()) as T;
  }

  createSession(config: SessionConfig): Promise<CreateResponse> {
    return this.request<CreateResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  getView(sessionId: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${sessionId}`);
  }

  submitChoice(sessionId: string, token: string, chosen: number[]): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${sessionId}/choice`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ token, chosen }),
    });
  }

  finishEarly(sessionId: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${sessionId}/finish`, { method: "POST" });
  }

  getTrajectory(sessionId: string): Promise<TrajectoryDoc> {
    return this.request<TrajectoryDoc>(`/sessions/${sessionId}/trajectory`);
  }
}
