/**
 * Pure mapping from API payloads to render-ready view models.
 *
 * Numbers pass through formatNumber and nothing else: no scores, flips,
 * labels, or rates are derived here. The only synthesized quantities are
 * presentation geometry (attribution bar fractions) and the case age,
 * which comes from timestamps, not model output.
 */

import {
  AuditRecord,
  CaseDetail,
  CaseSummary,
  Explanation,
  GroupMetrics,
  Scalar,
} from "./types.js";

export interface FeatureRow {
  name: string;
  value: string;
  protected: boolean;
}

export interface VariantAssignmentCell {
  name: string;
  value: string;
  changed: boolean;
}

export interface VariantRowView {
  assignment: VariantAssignmentCell[];
  score: string;
  label: string;
  flipped: boolean;
}

export interface AttributionBar {
  name: string;
  display: string;
  /** |contribution| / max|contribution|, for bar width only. */
  magnitude: number;
  negative: boolean;
}

export interface ExplanationView {
  native:
    | { kind: "linear"; intercept: string; bars: AttributionBar[] }
    | { kind: "tree"; path: { feature: string; branch: string }[]; leafScore: string }
    | { kind: "unavailable"; reason: string };
  deltas: { changes: string[]; scoreBefore: string; scoreAfter: string; flipped: boolean }[];
  nearest:
    | {
        changes: { feature: string; from: string; to: string }[];
        score: string;
        label: string;
        distance: string;
        objective: string;
      }
    | { kind: "unavailable"; reason: string };
  sensitivities: { feature: string; from: string; to: string; score: string; label: string }[];
  notes: string[];
}

export interface CaseViewModel {
  caseId: string;
  requestId: string;
  created: string;
  age: string;
  modelId: string;
  originalFeatures: FeatureRow[];
  originalScore: string;
  originalLabel: string;
  variants: VariantRowView[];
  flipFraction: string;
  lambda: string;
  truncated: boolean;
  engineVersion: string;
  explanation: ExplanationView;
  state: "pending" | "resolved";
  terminal: { outcome: string; finalLabel: string; reviewerId: string; verdict: string; timestamp: string; rationale: string } | null;
}

/** Compact display form; integers stay verbatim, everything else is
 * trimmed to 4 significant digits. */
export function formatNumber(value: number): string {
  if (!Number.isFinite(value)) return String(value);
  if (Number.isInteger(value)) return String(value);
  const abs = Math.abs(value);
  const text = abs >= 1e6 || abs < 1e-4 ? value.toExponential(3) : value.toPrecision(4);
  if (text.includes("e")) return text;
  return text.replace(/(\.\d*?)0+$/, "$1").replace(/\.$/, "");
}

export function formatScalar(value: Scalar): string {
  return typeof value === "number" ? formatNumber(value) : value;
}

/** "41s", "7m 02s", "3h 15m", "2d 4h" from an ISO timestamp. */
export function formatAge(createdIso: string, nowMs: number): string {
  const created = Date.parse(createdIso);
  if (Number.isNaN(created)) return "?";
  let seconds = Math.max(0, Math.floor((nowMs - created) / 1000));
  const days = Math.floor(seconds / 86400);
  seconds -= days * 86400;
  const hours = Math.floor(seconds / 3600);
  seconds -= hours * 3600;
  const minutes = Math.floor(seconds / 60);
  seconds -= minutes * 60;
  if (days > 0) return `${days}d ${hours}h`;
  if (hours > 0) return `${hours}h ${String(minutes).padStart(2, "0")}m`;
  if (minutes > 0) return `${minutes}m ${String(seconds).padStart(2, "0")}s`;
  return `${seconds}s`;
}

function protectedNames(detail: CaseDetail): Set<string> {
  const names = new Set<string>();
  for (const variant of detail.variants) {
    for (const name of Object.keys(variant.assignment)) names.add(name);
  }
  return names;
}

function explanationView(explanation: Explanation): ExplanationView {
  const omissions = explanation.omissions;
  let native: ExplanationView["native"];
  if (explanation.native === null) {
    native = { kind: "unavailable", reason: omissions["native"] ?? "not provided" };
  } else if (explanation.native.contributions !== undefined) {
    const contributions = explanation.native.contributions;
    const max = contributions.reduce((m, [, c]) => Math.max(m, Math.abs(c)), 0);
    native = {
      kind: "linear",
      intercept: formatNumber(explanation.native.intercept ?? 0),
      bars: contributions.map(([name, c]) => ({
        name,
        display: formatNumber(c),
        magnitude: max > 0 ? Math.abs(c) / max : 0,
        negative: c < 0,
      })),
    };
  } else {
    native = {
      kind: "tree",
      path: (explanation.native.path ?? []).map(([feature, branch]) => ({ feature, branch })),
      leafScore: formatNumber(explanation.native.leaf_score ?? 0),
    };
  }

  let nearest: ExplanationView["nearest"];
  if (explanation.nearest === null) {
    nearest = { kind: "unavailable", reason: omissions["nearest"] ?? "not provided" };
  } else {
    nearest = {
      changes: explanation.nearest.changed.map(([feature, from, to]) => ({
        feature,
        from: formatScalar(from),
        to: formatScalar(to),
      })),
      score: formatNumber(explanation.nearest.score),
      label: explanation.nearest.label,
      distance: formatNumber(explanation.nearest.distance),
      objective: formatNumber(explanation.nearest.objective),
    };
  }

  return {
    native,
    deltas: explanation.deltas.map((d) => ({
      changes: d.changes.map(
        ([name, from, to]) => `${name}: ${formatScalar(from)} → ${formatScalar(to)}`,
      ),
      scoreBefore: formatNumber(d.score_before),
      scoreAfter: formatNumber(d.score_after),
      flipped: d.flipped,
    })),
    nearest,
    sensitivities: explanation.sensitivities.map((s) => ({
      feature: s.feature,
      from: formatScalar(s.from),
      to: formatScalar(s.to),
      score: formatNumber(s.score),
      label: s.label,
    })),
    notes: Object.entries(omissions).map(([part, reason]) => `${part} unavailable: ${reason}`),
  };
}

export function toCaseViewModel(detail: CaseDetail, nowMs: number): CaseViewModel {
  const protectedSet = protectedNames(detail);
  const originalFeatures: FeatureRow[] = Object.entries(detail.original.features).map(
    ([name, value]) => ({
      name,
      value: formatScalar(value),
      protected: protectedSet.has(name),
    }),
  );

  const variants: VariantRowView[] = detail.variants.map((variant) => ({
    assignment: Object.entries(variant.assignment).map(([name, value]) => ({
      name,
      value,
      changed: value !== detail.original.features[name],
    })),
    score: formatNumber(variant.score),
    label: variant.label,
    flipped: variant.flipped,
  }));

  const state: "pending" | "resolved" = detail.state === "resolved" ? "resolved" : "pending";
  let terminal: CaseViewModel["terminal"] = null;
  if (detail.terminal !== undefined) {
    terminal = {
      outcome: detail.terminal.outcome,
      finalLabel: detail.terminal.final_label ?? "?",
      reviewerId: detail.terminal.reviewer_id ?? "",
      verdict: detail.terminal.verdict ?? "",
      timestamp: detail.terminal.timestamp,
      rationale: detail.resolution?.rationale ?? "",
    };
  }

  return {
    caseId: detail.case_id,
    requestId: detail.request_id,
    created: detail.created,
    age: formatAge(detail.created, nowMs),
    modelId: detail.model_id,
    originalFeatures,
    originalScore: formatNumber(detail.original.score),
    originalLabel: detail.original.label,
    variants,
    flipFraction: formatNumber(detail.flag.flip_fraction),
    lambda: formatNumber(detail.flag.lambda),
    truncated: detail.flag.truncated,
    engineVersion: detail.flag.engine_version,
    explanation: explanationView(detail.explanation),
    state,
    terminal,
  };
}

export interface QueueRowView {
  caseId: string;
  age: string;
  modelId: string;
  score: string;
  label: string;
  flipFraction: string;
  truncated: boolean;
}

export function toQueueRow(summary: CaseSummary, nowMs: number): QueueRowView {
  return {
    caseId: summary.case_id,
    age: formatAge(summary.created, nowMs),
    modelId: summary.model_id,
    score: formatNumber(summary.model_score),
    label: summary.model_label,
    flipFraction: formatNumber(summary.flip_fraction),
    truncated: summary.truncated,
  };
}

export interface AuditRowView {
  seq: string;
  timestamp: string;
  requestId: string;
  outcome: string;
  flipFraction: string;
  finalLabel: string;
  caseId: string;
  detail: string;
}

export function toAuditRow(record: AuditRecord): AuditRowView {
  return {
    seq: formatNumber(record.seq),
    timestamp: record.timestamp,
    requestId: record.request_id,
    outcome: record.outcome,
    flipFraction: formatNumber(record.flip_fraction),
    finalLabel: record.final_label ?? "",
    caseId: record.case_id ?? "",
    detail: record.detail ?? "",
  };
}

export interface MetricsView {
  feature: string;
  rows: { value: string; count: string; rate: string }[];
  disparity: string;
  window: string;
}

export function toMetricsView(metrics: GroupMetrics): MetricsView {
  return {
    feature: metrics.feature,
    rows: Object.entries(metrics.groups).map(([value, group]) => ({
      value,
      count: formatNumber(group.count),
      rate: formatNumber(group.positive_rate),
    })),
    disparity: formatNumber(metrics.disparity),
    window: formatNumber(metrics.window),
  };
}
