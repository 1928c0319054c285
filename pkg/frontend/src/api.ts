/** Thin client for the /api/v1 HTTP interface.
 *
 * At most one submission is in flight at a time, and the UI only advances
 * on a server acknowledgment (no optimistic updates). Failed submits are
 * queued with a visible retry state so a flaky connection never loses work.
 */

import type {
  LocalizeCasePayload,
  LocalizeSubmitRequest,
  ReportCasePayload,
  ReportSubmitRequest,
  SessionState,
  SubmitResponse,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface QueuedSubmit {
  endpoint: string;
  body: LocalizeSubmitRequest | ReportSubmitRequest;
  attempts: number;
  lastError: string;
}

export class ApiClient {
  private inFlight = false;
  /** visible retry state for offline submits */
  readonly pending: QueuedSubmit[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly fetchFn: FetchLike,
    private token: string | null = null,
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await res.json()) as Record<string, unknown>;
    if (!res.ok) {
      const detail = payload["detail"] as { code?: string; message?: string } | undefined;
      throw new ApiError(
        res.status,
        detail?.code ?? "http_error",
        detail?.message ?? `request failed with ${res.status}`,
      );
    }
    return payload as T;
  }

  getSession(): Promise<SessionState> {
    return this.request("GET", `/api/v1/session/${this.sessionId}`);
  }

  startPhase(phase: string): Promise<{ phase: string; deadline: number | null }> {
    return this.request("POST", `/api/v1/session/${this.sessionId}/phase/start`, { phase });
  }

  nextCase(): Promise<LocalizeCasePayload | ReportCasePayload> {
    return this.request("GET", `/api/v1/session/${this.sessionId}/case/next`);
  }

  advance(): Promise<{ phase: string }> {
    return this.request("POST", `/api/v1/session/${this.sessionId}/advance`);
  }

  getFeedback(caseId: string): Promise<{ case_id: string; feedback: unknown[] }> {
    return this.request("GET", `/api/v1/session/${this.sessionId}/feedback/${caseId}`);
  }

  submitLocalize(body: LocalizeSubmitRequest): Promise<SubmitResponse> {
    return this.submit(`/api/v1/session/${this.sessionId}/submit/localize`, body);
  }

  submitReport(body: ReportSubmitRequest): Promise<SubmitResponse> {
    // verbatim aside from trailing whitespace
    const trimmed = { ...body, candidate_text: body.candidate_text.replace(/\s+$/, "") };
    return this.submit(`/api/v1/session/${this.sessionId}/submit/report`, trimmed);
  }

  private async submit(
    endpoint: string,
    body: LocalizeSubmitRequest | ReportSubmitRequest,
  ): Promise<SubmitResponse> {
    if (this.inFlight) throw new Error("a submission is already in flight");
    this.inFlight = true;
    try {
      const response = await this.request<SubmitResponse>("POST", endpoint, body);
      return response;
    } catch (err) {
      if (err instanceof ApiError) throw err; // server rejected: do not queue
      this.pending.push({
        endpoint,
        body,
        attempts: 1,
        lastError: err instanceof Error ? err.message : String(err),
      });
      throw err;
    } finally {
      this.inFlight = false;
    }
  }

  /** Retry the oldest queued submit; resolves when the queue head clears. */
  async retryPending(): Promise<SubmitResponse | null> {
    const head = this.pending[0];
    if (!head) return null;
    try {
      const response = await this.request<SubmitResponse>("POST", head.endpoint, head.body);
      this.pending.shift();
      return response;
    } catch (err) {
      if (err instanceof ApiError && err.code === "wrong_case") {
        // a duplicate means the original landed; drop it
        this.pending.shift();
        return null;
      }
      head.attempts += 1;
      head.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    }
  }
}
