/**
 * DOM rendering. The whole app re-renders from RenderState on every change;
 * at this scale that is simpler and safer than incremental updates. The
 * document is injected so tests can render into jsdom.
 */

import {
  AuditRowView,
  CaseViewModel,
  MetricsView,
  QueueRowView,
} from "./viewmodel.js";

export interface Handlers {
  setSession(token: string, reviewerId: string): void;
  refresh(): void;
  openCase(caseId: string): void;
  backToQueue(): void;
  openAudit(): void;
  submitResolution(verdict: "accept" | "override", rationale: string): void;
  dismissConfirmation(): void;
  loadMoreAudit(): void;
  setOutcomeFilter(outcome: string): void;
  loadMetrics(feature: string): void;
}

export interface RenderState {
  tokenSet: boolean;
  reviewerId: string;
  authError: string | null;
  offline: boolean;
  loadError: string | null;
  view: "queue" | "detail" | "audit";
  modelId: string | null;
  queue: QueueRowView[] | null;
  detail: CaseViewModel | null;
  confirmation: { finalLabel: string; verdict: string } | null;
  conflict: { reviewerId: string; finalLabel: string } | null;
  submitError: string | null;
  audit: { rows: AuditRowView[]; nextFrom: number | null; filter: string } | null;
  metrics: MetricsView | null;
  metricsError: string | null;
}

const OUTCOME_FILTERS = [
  "all",
  "auto_final",
  "flagged_pending",
  "human_final",
  "machine_default",
  "error",
];

function el(
  doc: Document,
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(
  doc: Document,
  root: HTMLElement,
  state: RenderState,
  handlers: Handlers,
): void {
  root.textContent = "";
  root.append(renderHeader(doc, state));
  if (state.offline) {
    root.append(el(doc, "div", "offline-banner", "API unreachable — data may be stale"));
  }
  if (state.loadError) {
    root.append(el(doc, "div", "load-error", state.loadError));
  }
  if (!state.tokenSet || state.authError) {
    root.append(renderSessionForm(doc, state, handlers));
    return;
  }
  if (state.view === "detail" && state.detail) {
    root.append(renderDetail(doc, state, handlers));
  } else if (state.view === "audit") {
    root.append(renderAudit(doc, state, handlers));
  } else {
    root.append(renderQueue(doc, state, handlers));
  }
}

function renderHeader(doc: Document, state: RenderState): HTMLElement {
  const header = el(doc, "header", "console-header");
  header.append(el(doc, "h1", undefined, "Review console"));
  if (state.modelId) header.append(el(doc, "span", "model-id", `model ${state.modelId}`));
  if (state.reviewerId) {
    header.append(el(doc, "span", "reviewer-id", `reviewer ${state.reviewerId}`));
  }
  return header;
}

function renderSessionForm(
  doc: Document,
  state: RenderState,
  handlers: Handlers,
): HTMLElement {
  const form = el(doc, "div", "session-form");
  form.append(el(doc, "p", undefined, "Enter the review token and your reviewer id."));
  if (state.authError) form.append(el(doc, "div", "auth-error", state.authError));

  const tokenInput = el(doc, "input", "token-input") as HTMLInputElement;
  tokenInput.type = "password";
  tokenInput.placeholder = "review token";
  const reviewerInput = el(doc, "input", "reviewer-input") as HTMLInputElement;
  reviewerInput.placeholder = "reviewer id";
  reviewerInput.value = state.reviewerId;
  const submit = el(doc, "button", "session-submit", "Start session");
  submit.addEventListener("click", () => {
    handlers.setSession(tokenInput.value.trim(), reviewerInput.value.trim());
  });
  form.append(tokenInput, reviewerInput, submit);
  return form;
}

function renderQueue(doc: Document, state: RenderState, handlers: Handlers): HTMLElement {
  const section = el(doc, "section", "queue-view");
  const toolbar = el(doc, "div", "toolbar");
  const refresh = el(doc, "button", "refresh-button", "Refresh");
  refresh.addEventListener("click", () => handlers.refresh());
  const auditNav = el(doc, "button", "audit-nav", "Audit log");
  auditNav.addEventListener("click", () => handlers.openAudit());
  toolbar.append(refresh, auditNav);
  section.append(toolbar);

  if (state.queue === null) {
    section.append(el(doc, "p", "loading", "Loading queue…"));
    return section;
  }
  if (state.queue.length === 0) {
    section.append(el(doc, "p", "empty-queue", "No pending cases."));
    return section;
  }

  const table = el(doc, "table", "queue-table");
  const head = el(doc, "tr");
  for (const title of ["Case", "Age", "Model", "Score", "Label", "Flip fraction"]) {
    head.append(el(doc, "th", undefined, title));
  }
  table.append(head);
  for (const row of state.queue) {
    const tr = el(doc, "tr", "queue-row");
    tr.dataset.caseId = row.caseId;
    tr.append(el(doc, "td", "case-id", row.caseId));
    tr.append(el(doc, "td", "case-age", row.age));
    tr.append(el(doc, "td", undefined, row.modelId));
    tr.append(el(doc, "td", "score", row.score));
    tr.append(el(doc, "td", `label label-${row.label}`, row.label));
    const flip = el(doc, "td", "flip-fraction", row.flipFraction);
    if (row.truncated) flip.append(el(doc, "span", "truncated-mark", " (truncated)"));
    tr.append(flip);
    tr.addEventListener("click", () => handlers.openCase(row.caseId));
    table.append(tr);
  }
  section.append(table);
  return section;
}

function renderDetail(doc: Document, state: RenderState, handlers: Handlers): HTMLElement {
  const vm = state.detail as CaseViewModel;
  const section = el(doc, "section", "case-detail");

  const back = el(doc, "button", "back-button", "← Queue");
  back.addEventListener("click", () => handlers.backToQueue());
  section.append(back);

  const head = el(doc, "div", "case-head");
  head.append(el(doc, "h2", undefined, `Case ${vm.caseId}`));
  head.append(el(doc, "span", "case-age", `age ${vm.age}`));
  head.append(el(doc, "span", "request-id", `request ${vm.requestId}`));
  section.append(head);

  const flag = el(doc, "div", "flag-summary");
  flag.append(el(doc, "span", "flip-fraction", `flip fraction ${vm.flipFraction}`));
  flag.append(el(doc, "span", "lambda", `λ ${vm.lambda}`));
  if (vm.truncated) {
    flag.append(
      el(doc, "span", "truncation-warning", "variant list truncated — fraction is partial"),
    );
  }
  section.append(flag);

  section.append(renderOriginal(doc, vm));
  section.append(renderVariants(doc, vm));
  section.append(renderExplanation(doc, vm));

  if (state.confirmation) {
    const note = el(
      doc,
      "div",
      "confirmation",
      `Resolved: ${state.confirmation.verdict} — final label ${state.confirmation.finalLabel}`,
    );
    const ok = el(doc, "button", "confirmation-dismiss", "Back to queue");
    ok.addEventListener("click", () => handlers.dismissConfirmation());
    note.append(ok);
    section.append(note);
  } else if (state.conflict) {
    section.append(
      el(
        doc,
        "div",
        "conflict",
        `Already resolved by ${state.conflict.reviewerId} — final label ${state.conflict.finalLabel}`,
      ),
    );
  } else if (vm.state === "resolved" && vm.terminal) {
    const terminal = el(doc, "div", "terminal-panel");
    terminal.append(el(doc, "h3", undefined, "Resolved"));
    terminal.append(el(doc, "div", "terminal-verdict", `verdict: ${vm.terminal.verdict}`));
    terminal.append(el(doc, "div", "terminal-label", `final label: ${vm.terminal.finalLabel}`));
    terminal.append(el(doc, "div", "terminal-reviewer", `reviewer: ${vm.terminal.reviewerId}`));
    terminal.append(el(doc, "div", "terminal-time", vm.terminal.timestamp));
    if (vm.terminal.rationale) {
      terminal.append(el(doc, "div", "terminal-rationale", vm.terminal.rationale));
    }
    section.append(terminal);
  } else {
    section.append(renderResolveForm(doc, state, handlers));
  }
  return section;
}

function renderOriginal(doc: Document, vm: CaseViewModel): HTMLElement {
  const panel = el(doc, "div", "original-panel");
  panel.append(el(doc, "h3", undefined, "Original decision"));
  panel.append(el(doc, "div", "original-score", `score ${vm.originalScore}`));
  panel.append(el(doc, "div", `original-label label-${vm.originalLabel}`, vm.originalLabel));
  const table = el(doc, "table", "original-table");
  for (const row of vm.originalFeatures) {
    const tr = el(doc, "tr", row.protected ? "feature-row protected" : "feature-row");
    tr.append(el(doc, "td", "feature-name", row.name));
    tr.append(el(doc, "td", "feature-value", row.value));
    if (row.protected) tr.append(el(doc, "td", "protected-mark", "protected"));
    table.append(tr);
  }
  panel.append(table);
  return panel;
}

function renderVariants(doc: Document, vm: CaseViewModel): HTMLElement {
  const panel = el(doc, "div", "variants-panel");
  panel.append(el(doc, "h3", undefined, `Counterfactual variants (${vm.variants.length})`));
  const table = el(doc, "table", "variant-table");
  for (const variant of vm.variants) {
    const tr = el(doc, "tr", variant.flipped ? "variant-row flipped" : "variant-row");
    const assignment = el(doc, "td", "assignment");
    for (const cell of variant.assignment) {
      const chip = el(
        doc,
        "span",
        cell.changed ? "assignment-cell changed" : "assignment-cell",
        `${cell.name}=${cell.value}`,
      );
      assignment.append(chip);
    }
    tr.append(assignment);
    tr.append(el(doc, "td", "score", variant.score));
    tr.append(el(doc, "td", `label label-${variant.label}`, variant.label));
    const badge = el(doc, "td", "flip-cell");
    if (variant.flipped) badge.append(el(doc, "span", "flipped-badge", "FLIPPED"));
    tr.append(badge);
    table.append(tr);
  }
  panel.append(table);
  return panel;
}

function renderExplanation(doc: Document, vm: CaseViewModel): HTMLElement {
  const panel = el(doc, "div", "explanation-panel");
  panel.append(el(doc, "h3", undefined, "Explanation"));
  const ex = vm.explanation;

  const native = el(doc, "div", "native-panel");
  native.append(el(doc, "h4", undefined, "Model attributions"));
  if (ex.native.kind === "unavailable") {
    native.append(el(doc, "div", "unavailable", `unavailable: ${ex.native.reason}`));
  } else if (ex.native.kind === "linear") {
    native.append(el(doc, "div", "intercept", `intercept ${ex.native.intercept}`));
    for (const bar of ex.native.bars) {
      const row = el(doc, "div", "attribution-row");
      row.append(el(doc, "span", "attribution-name", bar.name));
      const track = el(doc, "span", "attribution-bar");
      const fill = el(doc, "span", bar.negative ? "bar-fill negative" : "bar-fill");
      fill.setAttribute("style", `width: ${Math.round(bar.magnitude * 100)}%`);
      track.append(fill);
      row.append(track);
      row.append(el(doc, "span", "attribution-value", bar.display));
      native.append(row);
    }
  } else {
    const list = el(doc, "ol", "tree-path");
    for (const step of ex.native.path) {
      list.append(el(doc, "li", "tree-step", `${step.feature} ${step.branch}`));
    }
    native.append(list);
    native.append(el(doc, "div", "leaf-score", `leaf score ${ex.native.leafScore}`));
  }
  panel.append(native);

  const deltas = el(doc, "div", "deltas-panel");
  deltas.append(el(doc, "h4", undefined, "Variant deltas"));
  for (const delta of ex.deltas) {
    const row = el(doc, "div", delta.flipped ? "delta-row flipped" : "delta-row");
    row.append(el(doc, "span", "delta-changes", delta.changes.join(", ")));
    row.append(
      el(doc, "span", "delta-scores", `${delta.scoreBefore} → ${delta.scoreAfter}`),
    );
    if (delta.flipped) row.append(el(doc, "span", "flipped-badge", "FLIPPED"));
    deltas.append(row);
  }
  panel.append(deltas);

  const nearest = el(doc, "div", "nearest-panel");
  nearest.append(el(doc, "h4", undefined, "Nearest counterfactual"));
  if ("kind" in ex.nearest) {
    nearest.append(el(doc, "div", "unavailable", `unavailable: ${ex.nearest.reason}`));
  } else {
    for (const change of ex.nearest.changes) {
      nearest.append(
        el(
          doc,
          "div",
          "nearest-change",
          `${change.feature}: ${change.from} → ${change.to}`,
        ),
      );
    }
    nearest.append(el(doc, "div", "nearest-score", `score ${ex.nearest.score}`));
    nearest.append(el(doc, "div", "nearest-label", `label ${ex.nearest.label}`));
    nearest.append(el(doc, "div", "nearest-distance", `distance ${ex.nearest.distance}`));
  }
  panel.append(nearest);

  if (ex.sensitivities.length > 0) {
    const sens = el(doc, "div", "sensitivities-panel");
    sens.append(el(doc, "h4", undefined, "Single-feature flips"));
    for (const s of ex.sensitivities) {
      sens.append(
        el(
          doc,
          "div",
          "sensitivity-row",
          `${s.feature}: ${s.from} → ${s.to} (score ${s.score}, ${s.label})`,
        ),
      );
    }
    panel.append(sens);
  }

  for (const note of ex.notes) {
    panel.append(el(doc, "div", "omission-note", note));
  }
  return panel;
}

function renderResolveForm(
  doc: Document,
  state: RenderState,
  handlers: Handlers,
): HTMLElement {
  const form = el(doc, "div", "resolve-form");
  form.append(el(doc, "h3", undefined, "Resolution"));
  if (state.submitError) {
    form.append(el(doc, "div", "submit-error", `${state.submitError} — try again`));
  }
  const rationale = el(doc, "textarea", "rationale-input") as HTMLTextAreaElement;
  rationale.placeholder = "rationale (optional)";
  form.append(rationale);
  const accept = el(doc, "button", "accept-button", "Accept model label");
  accept.addEventListener("click", () =>
    handlers.submitResolution("accept", rationale.value.trim()),
  );
  const override = el(doc, "button", "override-button", "Override");
  override.addEventListener("click", () =>
    handlers.submitResolution("override", rationale.value.trim()),
  );
  form.append(accept, override);
  return form;
}

function renderAudit(doc: Document, state: RenderState, handlers: Handlers): HTMLElement {
  const section = el(doc, "section", "audit-view");
  const back = el(doc, "button", "back-button", "← Queue");
  back.addEventListener("click", () => handlers.backToQueue());
  section.append(back);
  section.append(el(doc, "h2", undefined, "Audit log"));

  const filter = el(doc, "select", "outcome-filter") as HTMLSelectElement;
  for (const outcome of OUTCOME_FILTERS) {
    const option = el(doc, "option", undefined, outcome) as HTMLOptionElement;
    option.value = outcome;
    filter.append(option);
  }
  filter.value = state.audit?.filter ?? "all";
  filter.addEventListener("change", () => handlers.setOutcomeFilter(filter.value));
  section.append(filter);

  if (state.audit === null) {
    section.append(el(doc, "p", "loading", "Loading audit log…"));
  } else {
    const shown =
      state.audit.filter === "all"
        ? state.audit.rows
        : state.audit.rows.filter((r) => r.outcome === state.audit!.filter);
    if (shown.length === 0) {
      section.append(el(doc, "p", "empty-audit", "No audit records."));
    } else {
      const table = el(doc, "table", "audit-table");
      const head = el(doc, "tr");
      for (const title of ["Seq", "Time", "Request", "Outcome", "Flip fraction", "Final label"]) {
        head.append(el(doc, "th", undefined, title));
      }
      table.append(head);
      for (const row of shown) {
        const tr = el(doc, "tr", "audit-row");
        tr.append(el(doc, "td", "seq", row.seq));
        tr.append(el(doc, "td", undefined, row.timestamp));
        tr.append(el(doc, "td", undefined, row.requestId));
        tr.append(el(doc, "td", `outcome outcome-${row.outcome}`, row.outcome));
        tr.append(el(doc, "td", "flip-fraction", row.flipFraction));
        tr.append(el(doc, "td", "final-label", row.finalLabel));
        table.append(tr);
      }
      section.append(table);
    }
    if (state.audit.nextFrom !== null) {
      const more = el(doc, "button", "load-more", "Load more");
      more.addEventListener("click", () => handlers.loadMoreAudit());
      section.append(more);
    }
  }

  const metrics = el(doc, "div", "metrics-panel");
  metrics.append(el(doc, "h3", undefined, "Group outcome rates"));
  const featureInput = el(doc, "input", "metrics-feature") as HTMLInputElement;
  featureInput.placeholder = "protected feature, e.g. gender";
  featureInput.value = state.metrics?.feature ?? "";
  const load = el(doc, "button", "metrics-load", "Load rates");
  load.addEventListener("click", () => handlers.loadMetrics(featureInput.value.trim()));
  metrics.append(featureInput, load);
  if (state.metricsError) {
    metrics.append(el(doc, "div", "metrics-error", state.metricsError));
  }
  if (state.metrics) {
    const table = el(doc, "table", "metrics-table");
    for (const row of state.metrics.rows) {
      const tr = el(doc, "tr", "metrics-row");
      tr.append(el(doc, "td", "group-value", row.value));
      tr.append(el(doc, "td", "group-count", row.count));
      tr.append(el(doc, "td", "group-rate", row.rate));
      table.append(tr);
    }
    metrics.append(table);
    metrics.append(el(doc, "div", "disparity", `disparity ${state.metrics.disparity}`));
  }
  section.append(metrics);
  return section;
}
