/** Thin registry client. Errors surface inline; there is no silent retry. */

import type { CaseRequest, CaseResponse } from "./types.js";

export class AuthError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "AuthError";
  }
}

export class ApiError extends Error {
  readonly code: string;
  constructor(code: string, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.code = code;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class RegistryClient {
  constructor(
    private readonly address: string,
    private token: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request(path: string, init: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.address}${path}`, {
        ...init,
        headers: {
          Authorization: `Bearer ${this.token}`,
          "Content-Type": "application/json",
          ...(init.headers ?? {}),
        },
      });
    } catch (error) {
      throw new ApiError("network", `registry unreachable: ${String(error)}`);
    }
    if (response.status === 401) {
      throw new AuthError("token rejected by the registry");
    }
    if (!response.ok) {
      let code = `http_${response.status}`;
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { error?: { code: string; detail: string } };
        if (body.error) {
          code = body.error.code;
          detail = body.error.detail;
        }
      } catch {
        // keep the HTTP status as the code
      }
      throw new ApiError(code, detail);
    }
    return response.json();
  }

  async submitCase(request: CaseRequest, signal?: AbortSignal): Promise<CaseResponse> {
    return (await this.request("/case", {
      method: "POST",
      body: JSON.stringify(request),
      signal,
    })) as CaseResponse;
  }

  async getReport(traceId: string, signal?: AbortSignal): Promise<CaseResponse> {
    return (await this.request(`/report/${traceId}`, { method: "GET", signal })) as CaseResponse;
  }
}
