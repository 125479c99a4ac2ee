/**
 * Wire types for the oversight gateway API with narrow runtime checks.
 *
 * The console is a pure client: every number it displays is read out of
 * these parsed payloads, never recomputed. Parsing throws ApiShapeError
 * on the first field that does not match, naming its JSON path.
 */

export class ApiShapeError extends Error {
  constructor(path: string, expected: string, got: unknown) {
    super(`bad API payload at ${path}: expected ${expected}, got ${JSON.stringify(got)}`);
    this.name = "ApiShapeError";
  }
}

export type Scalar = string | number;

type Check<T> = (v: unknown, path: string) => T;

const str: Check<string> = (v, path) => {
  if (typeof v !== "string") throw new ApiShapeError(path, "string", v);
  return v;
};

const num: Check<number> = (v, path) => {
  if (typeof v !== "number" || !Number.isFinite(v)) throw new ApiShapeError(path, "number", v);
  return v;
};

const bool: Check<boolean> = (v, path) => {
  if (typeof v !== "boolean") throw new ApiShapeError(path, "boolean", v);
  return v;
};

const scalar: Check<Scalar> = (v, path) => {
  if (typeof v === "string") return v;
  if (typeof v === "number" && Number.isFinite(v)) return v;
  throw new ApiShapeError(path, "string or number", v);
};

function optional<T>(inner: Check<T>): Check<T | undefined> {
  return (v, path) => (v === undefined || v === null ? undefined : inner(v, path));
}

function nullable<T>(inner: Check<T>): Check<T | null> {
  return (v, path) => (v === null || v === undefined ? null : inner(v, path));
}

function arrayOf<T>(inner: Check<T>): Check<T[]> {
  return (v, path) => {
    if (!Array.isArray(v)) throw new ApiShapeError(path, "array", v);
    return v.map((item, i) => inner(item, `${path}[${i}]`));
  };
}

function recordOf<T>(inner: Check<T>): Check<Record<string, T>> {
  return (v, path) => {
    if (typeof v !== "object" || v === null || Array.isArray(v)) {
      throw new ApiShapeError(path, "object", v);
    }
    const out: Record<string, T> = {};
    for (const [key, value] of Object.entries(v)) out[key] = inner(value, `${path}.${key}`);
    return out;
  };
}

type Shape = Record<string, Check<unknown>>;
type FromShape<S extends Shape> = { [K in keyof S]: ReturnType<S[K]> };

function objectOf<S extends Shape>(fields: S): Check<FromShape<S>> {
  return (v, path) => {
    if (typeof v !== "object" || v === null || Array.isArray(v)) {
      throw new ApiShapeError(path, "object", v);
    }
    const source = v as Record<string, unknown>;
    const out = {} as FromShape<S>;
    for (const key of Object.keys(fields) as (keyof S & string)[]) {
      out[key] = fields[key]!(source[key], `${path}.${key}`) as FromShape<S>[typeof key];
    }
    return out;
  };
}

function pair<A, B>(first: Check<A>, second: Check<B>): Check<[A, B]> {
  return (v, path) => {
    if (!Array.isArray(v) || v.length !== 2) throw new ApiShapeError(path, "pair", v);
    return [first(v[0], `${path}[0]`), second(v[1], `${path}[1]`)];
  };
}

function triple<A, B, C>(a: Check<A>, b: Check<B>, c: Check<C>): Check<[A, B, C]> {
  return (v, path) => {
    if (!Array.isArray(v) || v.length !== 3) throw new ApiShapeError(path, "triple", v);
    return [a(v[0], `${path}[0]`), b(v[1], `${path}[1]`), c(v[2], `${path}[2]`)];
  };
}

// ---------------------------------------------------------------- payloads

const caseSummary = objectOf({
  case_id: str,
  request_id: str,
  created: str,
  model_id: str,
  model_score: num,
  model_label: str,
  flip_fraction: num,
  lambda: num,
  truncated: bool,
  state: str,
});
export type CaseSummary = ReturnType<typeof caseSummary>;

const prediction = objectOf({
  features: recordOf(scalar),
  score: num,
  label: str,
});
export type PredictionView = ReturnType<typeof prediction>;

const variant = objectOf({
  assignment: recordOf(str),
  features: recordOf(scalar),
  score: num,
  label: str,
  flipped: bool,
});
export type Variant = ReturnType<typeof variant>;

const nativeAttribution = objectOf({
  kind: str,
  intercept: optional(num),
  contributions: optional(arrayOf(pair(str, num))),
  path: optional(arrayOf(pair(str, str))),
  leaf_score: optional(num),
});
export type NativeAttribution = ReturnType<typeof nativeAttribution>;

const change = triple(str, scalar, scalar);

const variantDelta = objectOf({
  changes: arrayOf(change),
  score_before: num,
  score_after: num,
  flipped: bool,
});
export type VariantDelta = ReturnType<typeof variantDelta>;

const nearest = objectOf({
  score: num,
  label: str,
  objective: num,
  distance: num,
  changed: arrayOf(change),
});
export type Nearest = ReturnType<typeof nearest>;

const sensitivity = objectOf({
  feature: str,
  from: scalar,
  to: scalar,
  score: num,
  label: str,
});
export type Sensitivity = ReturnType<typeof sensitivity>;

const explanation = objectOf({
  native: nullable(nativeAttribution),
  deltas: arrayOf(variantDelta),
  nearest: nullable(nearest),
  sensitivities: arrayOf(sensitivity),
  omissions: recordOf(str),
});
export type Explanation = ReturnType<typeof explanation>;

const auditRecord = objectOf({
  seq: num,
  request_id: str,
  timestamp: str,
  instance: recordOf(scalar),
  model_id: str,
  model_score: optional(num),
  model_label: optional(str),
  flip_fraction: num,
  lambda: num,
  outcome: str,
  final_label: optional(str),
  reviewer_id: optional(str),
  verdict: optional(str),
  case_id: optional(str),
  engine_version: optional(str),
  config_digest: optional(str),
  detail: optional(str),
});
export type AuditRecord = ReturnType<typeof auditRecord>;

const resolutionNote = objectOf({
  case_id: str,
  reviewer_id: str,
  verdict: str,
  rationale: optional(str),
});
export type ResolutionNote = ReturnType<typeof resolutionNote>;

const flagSummary = objectOf({
  flip_fraction: num,
  lambda: num,
  truncated: bool,
  engine_version: str,
});

const caseDetail = objectOf({
  case_id: str,
  request_id: str,
  created: str,
  model_id: str,
  original: prediction,
  variants: arrayOf(variant),
  explanation,
  flag: flagSummary,
  state: str,
  terminal: optional(auditRecord),
  resolution: optional(resolutionNote),
});
export type CaseDetail = ReturnType<typeof caseDetail>;

const caseList = objectOf({ cases: arrayOf(caseSummary) });

const resolutionResponse = objectOf({ record: auditRecord, final_label: str });
export type ResolutionResponse = ReturnType<typeof resolutionResponse>;

const auditPage = objectOf({
  records: arrayOf(auditRecord),
  next_from: nullable(num),
});
export type AuditPage = ReturnType<typeof auditPage>;

const groupMetrics = objectOf({
  feature: str,
  groups: recordOf(objectOf({ count: num, positive_rate: num })),
  disparity: num,
  window: num,
});
export type GroupMetrics = ReturnType<typeof groupMetrics>;

const health = objectOf({ status: str, model_id: str });
export type Health = ReturnType<typeof health>;

export const parseCaseList = (v: unknown): CaseSummary[] => caseList(v, "$").cases;
export const parseCaseDetail = (v: unknown): CaseDetail => caseDetail(v, "$");
export const parseResolutionResponse = (v: unknown): ResolutionResponse =>
  resolutionResponse(v, "$");
export const parseAuditPage = (v: unknown): AuditPage => auditPage(v, "$");
export const parseGroupMetrics = (v: unknown): GroupMetrics => groupMetrics(v, "$");
export const parseHealth = (v: unknown): Health => health(v, "$");
export const parseAuditRecord = (v: unknown): AuditRecord => auditRecord(v, "$");
