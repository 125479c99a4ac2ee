/**
 * Application controller: owns the state, talks to the API client, and
 * re-renders after every transition. The document, root element, and clock
 * are injected so the whole controller runs unchanged under jsdom.
 */

import { ApiClient, AuthError, ConflictError, OfflineError } from "./api.js";
import { render, RenderState } from "./render.js";
import {
  toAuditRow,
  toCaseViewModel,
  toMetricsView,
  toQueueRow,
} from "./viewmodel.js";

export interface AppOptions {
  client: ApiClient;
  document: Document;
  root: HTMLElement;
  pollIntervalMs?: number;
  now?: () => number;
}

const AUDIT_PAGE_SIZE = 50;

export class ConsoleApp {
  readonly state: RenderState;
  private readonly client: ApiClient;
  private readonly doc: Document;
  private readonly root: HTMLElement;
  private readonly pollIntervalMs: number;
  private readonly now: () => number;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(opts: AppOptions) {
    this.client = opts.client;
    this.doc = opts.document;
    this.root = opts.root;
    this.pollIntervalMs = opts.pollIntervalMs ?? 5000;
    this.now = opts.now ?? Date.now;
    this.state = {
      tokenSet: false,
      reviewerId: "",
      authError: null,
      offline: false,
      loadError: null,
      view: "queue",
      modelId: null,
      queue: null,
      detail: null,
      confirmation: null,
      conflict: null,
      submitError: null,
      audit: null,
      metrics: null,
      metricsError: null,
    };
  }

  async start(): Promise<void> {
    try {
      const health = await this.client.health();
      this.state.modelId = health.model_id;
      this.state.offline = false;
    } catch (e) {
      if (e instanceof OfflineError) this.state.offline = true;
    }
    this.render();
    // Polling keeps the queue fresh; the detail view is left alone so a
    // half-typed rationale never gets wiped by a re-render.
    this.timer = setInterval(() => {
      if (this.state.tokenSet && !this.state.authError && this.state.view === "queue") {
        void this.refresh();
      }
    }, this.pollIntervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async setSession(token: string, reviewerId: string): Promise<void> {
    if (!token || !reviewerId) {
      this.state.authError = "both a token and a reviewer id are required";
      this.render();
      return;
    }
    this.client.token = token;
    this.state.tokenSet = true;
    this.state.reviewerId = reviewerId;
    this.state.authError = null;
    await this.refresh();
  }

  /** Reload whatever the current view shows. */
  async refresh(): Promise<void> {
    if (this.state.view === "detail" && this.state.detail) {
      await this.openCase(this.state.detail.caseId);
    } else if (this.state.view === "audit") {
      await this.loadAuditFirstPage();
    } else {
      await this.loadQueue();
    }
  }

  async openCase(caseId: string): Promise<void> {
    try {
      const detail = await this.client.caseDetail(caseId);
      this.state.detail = toCaseViewModel(detail, this.now());
      this.state.view = "detail";
      this.state.confirmation = null;
      this.state.conflict = null;
      this.state.submitError = null;
      this.markOnline();
    } catch (e) {
      this.routeError(e, `could not load case ${caseId}`);
    }
    this.render();
  }

  async backToQueue(): Promise<void> {
    this.state.view = "queue";
    this.state.detail = null;
    this.state.confirmation = null;
    this.state.conflict = null;
    this.state.submitError = null;
    await this.loadQueue();
  }

  async openAudit(): Promise<void> {
    this.state.view = "audit";
    await this.loadAuditFirstPage();
  }

  async loadMoreAudit(): Promise<void> {
    const audit = this.state.audit;
    if (!audit || audit.nextFrom === null) return;
    try {
      const page = await this.client.auditPage(audit.nextFrom, AUDIT_PAGE_SIZE);
      audit.rows = audit.rows.concat(page.records.map(toAuditRow));
      audit.nextFrom = page.next_from;
      this.markOnline();
    } catch (e) {
      this.routeError(e, "could not load more audit records");
    }
    this.render();
  }

  setOutcomeFilter(outcome: string): void {
    if (this.state.audit) this.state.audit.filter = outcome;
    this.render();
  }

  async loadMetrics(feature: string): Promise<void> {
    if (!feature) {
      this.state.metricsError = "enter a protected feature name";
      this.render();
      return;
    }
    try {
      const metrics = await this.client.groupMetrics(feature);
      this.state.metrics = toMetricsView(metrics);
      this.state.metricsError = null;
      this.markOnline();
    } catch (e) {
      if (e instanceof OfflineError) {
        this.state.offline = true;
        this.state.metricsError = "API unreachable";
      } else {
        this.state.metricsError = e instanceof Error ? e.message : String(e);
      }
    }
    this.render();
  }

  async submitResolution(verdict: "accept" | "override", rationale: string): Promise<void> {
    const detail = this.state.detail;
    if (!detail) return;
    try {
      const resp = await this.client.resolveCase(
        detail.caseId,
        this.state.reviewerId,
        verdict,
        rationale || undefined,
      );
      this.state.confirmation = { finalLabel: resp.final_label, verdict };
      this.state.submitError = null;
      this.markOnline();
    } catch (e) {
      if (e instanceof ConflictError) {
        // Someone got there first; show their resolution, not a retry form.
        this.state.conflict = {
          reviewerId: e.record?.reviewer_id ?? "another reviewer",
          finalLabel: e.record?.final_label ?? "unknown",
        };
        this.state.submitError = null;
      } else if (e instanceof OfflineError) {
        // Keep the form on screen so the reviewer can retry by hand.
        this.state.offline = true;
        this.state.submitError = "submission failed: API unreachable";
      } else if (e instanceof AuthError) {
        this.state.authError = e.message;
      } else {
        this.state.submitError = e instanceof Error ? e.message : String(e);
      }
    }
    this.render();
  }

  async dismissConfirmation(): Promise<void> {
    this.state.confirmation = null;
    await this.backToQueue();
  }

  private async loadQueue(): Promise<void> {
    try {
      const cases = await this.client.listCases();
      const nowMs = this.now();
      this.state.queue = cases.map((c) => toQueueRow(c, nowMs));
      this.markOnline();
    } catch (e) {
      this.routeError(e, "could not load the review queue");
    }
    this.render();
  }

  private async loadAuditFirstPage(): Promise<void> {
    const filter = this.state.audit?.filter ?? "all";
    try {
      const page = await this.client.auditPage(1, AUDIT_PAGE_SIZE);
      this.state.audit = {
        rows: page.records.map(toAuditRow),
        nextFrom: page.next_from,
        filter,
      };
      this.markOnline();
    } catch (e) {
      this.routeError(e, "could not load the audit log");
    }
    this.render();
  }

  private markOnline(): void {
    this.state.offline = false;
    this.state.loadError = null;
  }

  private routeError(e: unknown, context: string): void {
    if (e instanceof AuthError) {
      this.state.authError = e.message;
    } else if (e instanceof OfflineError) {
      this.state.offline = true;
    } else {
      const msg = e instanceof Error ? e.message : String(e);
      this.state.loadError = `${context}: ${msg}`;
    }
  }

  render(): void {
    render(this.doc, this.root, this.state, {
      setSession: (token, reviewerId) => void this.setSession(token, reviewerId),
      refresh: () => void this.refresh(),
      openCase: (caseId) => void this.openCase(caseId),
      backToQueue: () => void this.backToQueue(),
      openAudit: () => void this.openAudit(),
      submitResolution: (verdict, rationale) => void this.submitResolution(verdict, rationale),
      dismissConfirmation: () => void this.dismissConfirmation(),
      loadMoreAudit: () => void this.loadMoreAudit(),
      setOutcomeFilter: (outcome) => this.setOutcomeFilter(outcome),
      loadMetrics: (feature) => void this.loadMetrics(feature),
    });
  }
}
