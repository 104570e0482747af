// Thin typed client over the session service endpoints. The fetch function
// is injectable so contract tests can capture exact request bodies.

import type { BatchPayload, LabelSubmission, SessionStatus } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export class SessionApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body = await resp.text();
    if (!resp.ok) {
      let detail = body;
      try {
        detail = JSON.parse(body).error ?? body;
      } catch {
        // non-JSON error body: report as-is
      }
      throw new ApiError(detail, resp.status);
    }
    return JSON.parse(body) as T;
  }

  getSession(): Promise<SessionStatus> {
    return this.request<SessionStatus>("/session");
  }

  getBatch(): Promise<BatchPayload> {
    return this.request<BatchPayload>("/session/batch");
  }

  postLabels(labels: LabelSubmission[]): Promise<{ status: string; iteration: number }> {
    return this.request("/session/labels", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(labels),
    });
  }

  postFinish(): Promise<{ status: string; iteration: number }> {
    return this.request("/session/finish", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
  }
}
