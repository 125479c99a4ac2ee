/** Thin typed client over the gateway HTTP API. fetch is injected so tests
 * can substitute a fake transport. */

import {
  AuditPage,
  AuditRecord,
  CaseDetail,
  CaseSummary,
  GroupMetrics,
  Health,
  ResolutionResponse,
  parseAuditPage,
  parseAuditRecord,
  parseCaseDetail,
  parseCaseList,
  parseGroupMetrics,
  parseHealth,
  parseResolutionResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The API answered with a non-2xx status. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string, readonly body?: unknown) {
    super(message);
    this.name = "ApiError";
  }
}

/** 401: the bearer token is missing or wrong. */
export class AuthError extends ApiError {
  constructor(message: string) {
    super(401, message);
    this.name = "AuthError";
  }
}

/** 409: someone else resolved the case first; carries their record. */
export class ConflictError extends ApiError {
  constructor(message: string, readonly record: AuditRecord | null) {
    super(409, message);
    this.name = "ConflictError";
  }
}

/** The request never reached the API (network down, server gone). */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`API unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "OfflineError";
  }
}

function messageFrom(body: unknown, fallback: string): string {
  if (typeof body === "object" && body !== null) {
    const record = body as Record<string, unknown>;
    if (typeof record.error === "string") return record.error;
    if (typeof record.detail === "string") return record.detail;
  }
  return fallback;
}

export class ApiClient {
  token: string | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  private async request(
    method: string,
    path: string,
    options: { auth?: boolean; body?: unknown } = {},
  ): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (options.auth && this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const init: RequestInit = { method, headers };
    if (options.body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(options.body);
    }

    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (cause) {
      throw new OfflineError(cause);
    }

    let body: unknown;
    try {
      body = await response.json();
    } catch {
      body = undefined;
    }

    if (response.status === 401) {
      throw new AuthError(messageFrom(body, "authentication required"));
    }
    if (response.status === 409) {
      let record: AuditRecord | null = null;
      const raw = (body as Record<string, unknown> | undefined)?.record;
      if (raw !== undefined) record = parseAuditRecord(raw);
      throw new ConflictError(messageFrom(body, "already resolved"), record);
    }
    if (!response.ok) {
      throw new ApiError(response.status, messageFrom(body, `HTTP ${response.status}`), body);
    }
    return body;
  }

  async health(): Promise<Health> {
    return parseHealth(await this.request("GET", "/v1/health"));
  }

  async listCases(limit = 100): Promise<CaseSummary[]> {
    return parseCaseList(await this.request("GET", `/v1/cases?limit=${limit}`, { auth: true }));
  }

  async caseDetail(caseId: string): Promise<CaseDetail> {
    return parseCaseDetail(
      await this.request("GET", `/v1/cases/${encodeURIComponent(caseId)}`, { auth: true }),
    );
  }

  async resolveCase(
    caseId: string,
    reviewerId: string,
    verdict: "accept" | "override",
    rationale?: string,
  ): Promise<ResolutionResponse> {
    const body: Record<string, unknown> = { reviewer_id: reviewerId, verdict };
    if (rationale) body.rationale = rationale;
    return parseResolutionResponse(
      await this.request("POST", `/v1/cases/${encodeURIComponent(caseId)}/resolution`, {
        auth: true,
        body,
      }),
    );
  }

  async auditPage(fromSeq = 1, limit = 50): Promise<AuditPage> {
    return parseAuditPage(
      await this.request("GET", `/v1/audit?from=${fromSeq}&limit=${limit}`, { auth: true }),
    );
  }

  async groupMetrics(feature: string): Promise<GroupMetrics> {
    return parseGroupMetrics(
      await this.request("GET", `/v1/metrics/groups?feature=${encodeURIComponent(feature)}`),
    );
  }
}
