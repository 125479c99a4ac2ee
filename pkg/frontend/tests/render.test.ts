/** DOM output for each screen state, rendered into jsdom. */

import { beforeEach, describe, expect, it } from "vitest";
import { Handlers, render, RenderState } from "../src/render.js";
import { parseCaseDetail, parseCaseList, parseAuditPage, parseGroupMetrics } from "../src/types.js";
import { toAuditRow, toCaseViewModel, toMetricsView, toQueueRow } from "../src/viewmodel.js";
import { loadFixture, makeDom, TestDom } from "./helpers.js";

const NOW = Date.parse("2026-08-23T19:00:00Z");
const queueRows = parseCaseList(loadFixture("queue.json")).map((c) => toQueueRow(c, NOW));
const pendingVm = toCaseViewModel(parseCaseDetail(loadFixture("case_detail.json")), NOW);
const resolvedVm = toCaseViewModel(parseCaseDetail(loadFixture("case_detail_resolved.json")), NOW);
const mixedVm = toCaseViewModel(parseCaseDetail(loadFixture("case_detail_mixed.json")), NOW);
const auditRows = parseAuditPage(loadFixture("audit_page.json")).records.map(toAuditRow);
const metricsView = toMetricsView(parseGroupMetrics(loadFixture("metrics.json")));

function baseState(overrides: Partial<RenderState> = {}): RenderState {
  return {
    tokenSet: true,
    reviewerId: "alice",
    authError: null,
    offline: false,
    loadError: null,
    view: "queue",
    modelId: "loan_gender_linear",
    queue: queueRows,
    detail: null,
    confirmation: null,
    conflict: null,
    submitError: null,
    audit: null,
    metrics: null,
    metricsError: null,
    ...overrides,
  };
}

function recorder() {
  const calls: [string, ...unknown[]][] = [];
  const log =
    (name: string) =>
    (...args: unknown[]) =>
      void calls.push([name, ...args]);
  const handlers: Handlers = {
    setSession: log("setSession"),
    refresh: log("refresh"),
    openCase: log("openCase"),
    backToQueue: log("backToQueue"),
    openAudit: log("openAudit"),
    submitResolution: log("submitResolution"),
    dismissConfirmation: log("dismissConfirmation"),
    loadMoreAudit: log("loadMoreAudit"),
    setOutcomeFilter: log("setOutcomeFilter"),
    loadMetrics: log("loadMetrics"),
  };
  return { calls, handlers };
}

let t: TestDom;
beforeEach(() => {
  t = makeDom();
});

function draw(state: RenderState) {
  const { calls, handlers } = recorder();
  render(t.document, t.root, state, handlers);
  return { calls };
}

function all(selector: string): Element[] {
  return Array.from(t.root.querySelectorAll(selector));
}

function one(selector: string): HTMLElement {
  const found = t.root.querySelector(selector);
  if (!found) throw new Error(`expected ${selector} in rendered output`);
  return found as HTMLElement;
}

describe("session gate", () => {
  it("asks for a token before showing any data", () => {
    draw(baseState({ tokenSet: false, reviewerId: "" }));
    expect(one(".session-form")).toBeTruthy();
    expect(all(".queue-table")).toHaveLength(0);
  });

  it("re-prompts with the server message after an auth failure", () => {
    draw(baseState({ authError: "invalid or missing token" }));
    expect(one(".auth-error").textContent).toContain("invalid or missing token");
    expect(all(".queue-table")).toHaveLength(0);
  });

  it("submits trimmed token and reviewer id", () => {
    const { calls } = draw(baseState({ tokenSet: false, reviewerId: "" }));
    (one(".token-input") as HTMLInputElement).value = "  tok  ";
    (one(".reviewer-input") as HTMLInputElement).value = " alice ";
    one(".session-submit").click();
    expect(calls).toEqual([["setSession", "tok", "alice"]]);
  });
});

describe("status banners", () => {
  it("shows the offline banner on top of any view", () => {
    draw(baseState({ offline: true }));
    expect(one(".offline-banner")).toBeTruthy();
    expect(one(".queue-table")).toBeTruthy();
  });

  it("surfaces load errors without hiding the view", () => {
    draw(baseState({ loadError: "could not load the review queue: HTTP 500" }));
    expect(one(".load-error").textContent).toContain("HTTP 500");
  });
});

describe("queue view", () => {
  it("renders every pending case in served order", () => {
    draw(baseState());
    const rows = all(".queue-row");
    expect(rows).toHaveLength(4);
    expect(rows.map((r) => (r as HTMLElement).dataset.caseId)).toEqual(
      queueRows.map((r) => r.caseId),
    );
    expect(rows[0]!.textContent).toContain("0.6225");
    expect(rows[0]!.textContent).toContain("0.6");
  });

  it("says so when the queue is empty", () => {
    draw(baseState({ queue: [] }));
    expect(one(".empty-queue")).toBeTruthy();
    expect(all(".queue-row")).toHaveLength(0);
  });

  it("opens a case on row click", () => {
    const { calls } = draw(baseState());
    (all(".queue-row")[2] as HTMLElement).click();
    expect(calls).toEqual([["openCase", queueRows[2]!.caseId]]);
  });

  it("wires refresh and audit navigation", () => {
    const { calls } = draw(baseState());
    one(".refresh-button").click();
    one(".audit-nav").click();
    expect(calls).toEqual([["refresh"], ["openAudit"]]);
  });
});

describe("case detail", () => {
  it("shows the original next to all variants, flips marked", () => {
    draw(baseState({ view: "detail", detail: pendingVm }));
    expect(one(".original-panel").textContent).toContain("0.6225");
    expect(all(".variant-row")).toHaveLength(5);
    expect(all(".variant-row.flipped")).toHaveLength(3);
    expect(all(".flipped-badge").length).toBeGreaterThanOrEqual(3);
    expect(all(".feature-row.protected")).toHaveLength(2);
    expect(all(".assignment-cell.changed").length).toBeGreaterThan(0);
  });

  it("omits the truncation warning for complete enumerations", () => {
    draw(baseState({ view: "detail", detail: pendingVm }));
    expect(all(".truncation-warning")).toHaveLength(0);
  });

  it("warns when the variant list was cut off", () => {
    draw(baseState({ view: "detail", detail: { ...pendingVm, truncated: true } }));
    expect(one(".truncation-warning").textContent).toContain("truncated");
  });

  it("renders unavailable explanation parts as labelled gaps", () => {
    draw(baseState({ view: "detail", detail: pendingVm }));
    expect(one(".nearest-panel .unavailable").textContent).toContain(
      "no candidate attaining the target label was found",
    );
    expect(all(".omission-note")).toHaveLength(1);
  });

  it("renders the nearest counterfactual when present", () => {
    draw(baseState({ view: "detail", detail: mixedVm }));
    expect(one(".nearest-change").textContent).toBe("income: 58000 → 31000");
    expect(one(".nearest-score").textContent).toContain("0.4959");
    expect(all(".sensitivity-row")).toHaveLength(3);
    expect(all(".unavailable")).toHaveLength(0);
  });

  it("submits a verdict with the typed rationale", () => {
    const { calls } = draw(baseState({ view: "detail", detail: pendingVm }));
    (one(".rationale-input") as HTMLTextAreaElement).value = " gender-driven flip ";
    one(".override-button").click();
    expect(calls).toEqual([["submitResolution", "override", "gender-driven flip"]]);
  });

  it("keeps the form on screen after a failed submit", () => {
    draw(
      baseState({
        view: "detail",
        detail: pendingVm,
        submitError: "submission failed: API unreachable",
      }),
    );
    expect(one(".submit-error").textContent).toContain("try again");
    expect(one(".resolve-form")).toBeTruthy();
    expect(one(".accept-button")).toBeTruthy();
  });

  it("renders resolved cases read-only with the terminal facts", () => {
    draw(baseState({ view: "detail", detail: resolvedVm }));
    const panel = one(".terminal-panel");
    expect(panel.textContent).toContain("override");
    expect(panel.textContent).toContain("negative");
    expect(panel.textContent).toContain("fixture-reviewer");
    expect(panel.textContent).toContain("score driven by a protected attribute");
    expect(all(".resolve-form")).toHaveLength(0);
    expect(all(".accept-button")).toHaveLength(0);
  });

  it("confirms a resolution with the final label", () => {
    const { calls } = draw(
      baseState({
        view: "detail",
        detail: pendingVm,
        confirmation: { finalLabel: "negative", verdict: "override" },
      }),
    );
    expect(one(".confirmation").textContent).toContain("negative");
    expect(all(".resolve-form")).toHaveLength(0);
    one(".confirmation-dismiss").click();
    expect(calls).toEqual([["dismissConfirmation"]]);
  });

  it("reports a lost race with the winning reviewer", () => {
    draw(
      baseState({
        view: "detail",
        detail: pendingVm,
        conflict: { reviewerId: "bob", finalLabel: "positive" },
      }),
    );
    expect(one(".conflict").textContent).toContain("Already resolved by bob");
    expect(all(".resolve-form")).toHaveLength(0);
  });
});

describe("audit browser", () => {
  const auditState = () =>
    baseState({
      view: "audit",
      audit: { rows: auditRows, nextFrom: 8, filter: "all" },
      metrics: metricsView,
    });

  it("lists records with outcome and final label columns", () => {
    draw(auditState());
    expect(all(".audit-row")).toHaveLength(7);
    expect(all(".audit-row .outcome-flagged_pending")).toHaveLength(4);
    expect(all(".audit-row .outcome-human_final")).toHaveLength(3);
  });

  it("filters by outcome without refetching", () => {
    const state = auditState();
    state.audit!.filter = "human_final";
    const { calls } = draw(state);
    expect(all(".audit-row")).toHaveLength(3);
    expect(calls).toEqual([]);
  });

  it("shows an empty message when the filter matches nothing", () => {
    const state = auditState();
    state.audit!.filter = "error";
    draw(state);
    expect(one(".empty-audit")).toBeTruthy();
  });

  it("emits the filter change", () => {
    const { calls } = draw(auditState());
    const select = one(".outcome-filter") as HTMLSelectElement;
    select.value = "human_final";
    select.dispatchEvent(new t.dom.window.Event("change"));
    expect(calls).toEqual([["setOutcomeFilter", "human_final"]]);
  });

  it("offers load-more only while the server has more", () => {
    const { calls } = draw(auditState());
    one(".load-more").click();
    expect(calls).toEqual([["loadMoreAudit"]]);

    const drained = auditState();
    drained.audit!.nextFrom = null;
    draw(drained);
    expect(all(".load-more")).toHaveLength(0);
  });

  it("renders group rates and disparity verbatim", () => {
    draw(auditState());
    const rows = all(".metrics-row").map((r) => r.textContent);
    expect(rows).toEqual(["female10", "male20.5"]);
    expect(one(".disparity").textContent).toBe("disparity 0.5");
  });

  it("requests metrics for the typed feature", () => {
    const { calls } = draw(auditState());
    (one(".metrics-feature") as HTMLInputElement).value = " race ";
    one(".metrics-load").click();
    expect(calls).toEqual([["loadMetrics", "race"]]);
  });
});
