"""Per-decision fairness analysis: protected-variant enumeration with flip
detection, nearest-counterfactual search, and explanation assembly.

The detector enumerates every combination of protected-attribute values
(minus the original), predicts each variant, and reports the fraction whose
label flips. The search looks for the minimally different input over mutable
features that attains the opposite label, minimizing hinge-to-threshold loss
plus the range-normalized distance. Both are deterministic given their
configuration, including the restart seed.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, replace
from typing import Optional

from .models import (
    Attributions,
    Label,
    ModelSpec,
    Prediction,
    label_for,
    native_attributions,
    predict_instance,
)
from .errors import UnsupportedModelOperation
from .schema import CATEGORICAL, FeatureSpec, Instance, Schema, normalized_distance, substitute

ENGINE_VERSION = "1.0"

DEFAULT_ENUMERATION_CAP = 256


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for enumeration and counterfactual search.

    evaluation_budget caps distinct model evaluations per request; cached
    re-evaluations are free. Two configs with equal fields give bitwise
    identical results.
    """

    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    lambda_dist: float = 1.0
    margin: float = 0.05
    grid_levels: int = 64
    restarts: int = 8
    seed: int = 0
    evaluation_budget: int = 5000


@dataclass(frozen=True)
class ProtectedVariant:
    """The original instance with protected values substituted, plus its
    prediction and whether the label flipped."""

    instance: Instance
    protected_assignment: tuple[tuple[str, str], ...]
    prediction: Prediction
    flipped: bool


@dataclass(frozen=True)
class FlagReport:
    instance: Instance
    prediction: Prediction
    variants: tuple[ProtectedVariant, ...]
    flip_fraction: float
    truncated: bool
    engine_version: str = ENGINE_VERSION
    # Set by the gate, not the detector; None until then.
    flagged: Optional[bool] = None

    def with_flag(self, flagged: bool) -> "FlagReport":
        return replace(self, flagged=flagged)


@dataclass(frozen=True)
class Counterfactual:
    instance: Instance
    prediction: Prediction
    objective: float
    distance: float
    changed_features: tuple[tuple[str, object, object], ...]


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one nearest-counterfactual search.

    counterfactual is None when the search found no valid candidate; reason
    says why (budget exhausted vs. space swept without a flip).
    """

    counterfactual: Optional[Counterfactual]
    evaluations: int
    reason: str = ""


@dataclass(frozen=True)
class VariantDelta:
    """Score movement of one variant relative to the original."""

    changes: tuple[tuple[str, str, str], ...]
    score_before: float
    score_after: float
    flipped: bool


@dataclass(frozen=True)
class Sensitivity:
    """Minimal single-feature change that flips the label."""

    feature: str
    from_value: object
    to_value: object
    score: float
    label: Label


@dataclass(frozen=True)
class Explanation:
    native: Optional[Attributions]
    deltas: tuple[VariantDelta, ...]
    nearest: Optional[Counterfactual]
    sensitivities: tuple[Sensitivity, ...]
    # (part, reason) markers for anything omitted; consumers must render
    # these instead of showing blanks.
    omissions: tuple[tuple[str, str], ...] = ()


def enumerate_protected_variants(
    schema: Schema, x: Instance, cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[list[tuple[tuple[str, str], ...]], bool]:
    """All protected-attribute assignments other than the original's.

    Order is the full Cartesian product, lexicographic by protected-feature
    order then by domain order, with the original assignment removed. When
    more than `cap` assignments remain the list is cut there and the second
    element is True.
    """
    if cap < 1:
        raise ValueError("cap must be a positive integer")
    protected = schema.protected_features
    original = tuple(x.values[schema.index_of(f.name)] for f in protected)
    names = tuple(f.name for f in protected)
    assignments: list[tuple[tuple[str, str], ...]] = []
    truncated = False
    for combo in itertools.product(*(f.domain.values for f in protected)):
        if combo == original:
            continue
        if len(assignments) == cap:
            truncated = True
            break
        assignments.append(tuple(zip(names, combo)))
    return assignments, truncated


def detect_discrimination(
    model: ModelSpec,
    schema: Schema,
    x: Instance,
    cap: int = DEFAULT_ENUMERATION_CAP,
    client=None,
) -> FlagReport:
    """Predict the instance and every protected variant; report flips.

    Flips are label disagreements, not score movements. A prediction failure
    aborts the whole report so a partial flip_fraction is never seen.
    """
    original = predict_instance(model, x, client=client)
    assignments, truncated = enumerate_protected_variants(schema, x, cap)
    variants = []
    for assignment in assignments:
        variant_x = substitute(schema, x, dict(assignment))
        prediction = predict_instance(model, variant_x, client=client)
        variants.append(
            ProtectedVariant(
                instance=variant_x,
                protected_assignment=assignment,
                prediction=prediction,
                flipped=prediction.label is not original.label,
            )
        )
    flips = sum(1 for v in variants if v.flipped)
    return FlagReport(
        instance=x,
        prediction=original,
        variants=tuple(variants),
        flip_fraction=flips / len(variants) if variants else 0.0,
        truncated=truncated,
    )


def feature_grid(feat: FeatureSpec, config: SearchConfig, anchor=None) -> list:
    """Candidate values the search may assign to one mutable feature.

    Categorical: the domain in declared order. Numeric: the domain swept at
    the schema step (bounds included), or `grid_levels` evenly spaced values
    when no step is declared; the instance's current value is always a grid
    point so zero-change along a feature is representable exactly.
    """
    dom = feat.domain
    if dom.kind == CATEGORICAL:
        return list(dom.values)
    if dom.step:
        count = int(dom.span / dom.step)
        # Clamp: accumulated steps may overshoot the bound by an ulp.
        values = [min(dom.lower + i * dom.step, dom.upper) for i in range(count + 1)]
        if values[-1] < dom.upper:
            values.append(dom.upper)
    elif config.grid_levels > 1 and dom.span > 0:
        n = config.grid_levels
        values = [min(dom.lower + dom.span * i / (n - 1), dom.upper) for i in range(n)]
    else:
        values = [dom.lower]
    if anchor is not None and anchor not in values:
        values.append(anchor)
        values.sort()
    return values


def hinge_yloss(score: float, target: Label, margin: float) -> float:
    """Hinge on the score toward the target side of the 0.5 threshold."""
    if target is Label.POSITIVE:
        return max(0.0, 0.5 + margin - score)
    return max(0.0, score - 0.5 + margin)


class _BudgetExhausted(Exception):
    pass


class _Evaluator:
    """Budgeted, memoized scorer over mutable-feature assignments."""

    def __init__(self, model, schema, x, mutable_names, budget, client=None):
        self.model = model
        self.schema = schema
        self.x = x
        self.mutable_names = mutable_names
        self.budget = budget
        self.client = client
        self.used = 0
        self._cache: dict[tuple, float] = {}

    def score(self, candidate: tuple) -> float:
        try:
            return self._cache[candidate]
        except KeyError:
            pass
        if self.used >= self.budget:
            raise _BudgetExhausted
        instance = self.instance_for(candidate)
        self.used += 1
        score = predict_instance(self.model, instance, client=self.client).score
        self._cache[candidate] = score
        return score

    def instance_for(self, candidate: tuple) -> Instance:
        return substitute(self.schema, self.x, dict(zip(self.mutable_names, candidate)))


def nearest_counterfactual(
    model: ModelSpec,
    schema: Schema,
    x: Instance,
    target: Label,
    config: SearchConfig = SearchConfig(),
    client=None,
) -> SearchResult:
    """Search mutable-feature grids for the valid candidate (predicted label
    equals `target`) minimizing hinge loss + lambda_dist * distance.

    Protected features are never touched. When the whole grid fits in the
    evaluation budget it is swept exhaustively; otherwise the search runs a
    cheap single-feature sweep, then coordinate descent from the original,
    from a greedy score-extremizing corner, and from seeded random restarts.
    """
    current = predict_instance(model, x, client=client)
    if current.label is target:
        raise ValueError("target label must differ from the current prediction")
    evaluator = _Evaluator(
        model,
        schema,
        x,
        tuple(f.name for f in schema.mutable_features),
        config.evaluation_budget,
        client=client,
    )
    return _search(evaluator, schema, x, target, config)


def _search(
    evaluator: _Evaluator,
    schema: Schema,
    x: Instance,
    target: Label,
    config: SearchConfig,
) -> SearchResult:
    mutable = schema.mutable_features
    if not mutable:
        return SearchResult(None, evaluator.used, "no mutable features to vary")

    grids = []
    for feat in mutable:
        anchor = x.values[schema.index_of(feat.name)]
        grids.append(feature_grid(feat, config, anchor=anchor))
    start = tuple(x.values[schema.index_of(f.name)] for f in mutable)
    tracker = _BestTracker(evaluator, schema, x, target, config, grids, start)

    total = 1
    for grid in grids:
        total *= len(grid)
        if total > config.evaluation_budget:
            break
    swept_all = False
    exhausted = False
    try:
        if total <= config.evaluation_budget - evaluator.used:
            for combo in itertools.product(*grids):
                tracker.consider(combo)
            swept_all = True
        else:
            _single_feature_sweep(tracker, start, grids)
            _coordinate_descent(tracker, start, grids)
            _coordinate_descent(tracker, tracker.greedy_corner(start, grids), grids)
            rng = random.Random(config.seed)
            for _ in range(config.restarts):
                restart = tuple(grid[rng.randrange(len(grid))] for grid in grids)
                _coordinate_descent(tracker, restart, grids)
            _pair_refinement(tracker, grids)
    except _BudgetExhausted:
        exhausted = True

    if tracker.best is None:
        if swept_all:
            reason = "no candidate attains the target label"
        elif exhausted:
            reason = "no valid candidate within the evaluation budget"
        else:
            reason = "no candidate attaining the target label was found"
        return SearchResult(None, evaluator.used, reason)
    return SearchResult(tracker.result(), evaluator.used, "")


class _BestTracker:
    """Evaluates candidates, keeping the best valid one deterministically.

    The ordering key is (objective, distance, grid indices) so ties never
    depend on visit order.
    """

    def __init__(self, evaluator, schema, x, target, config, grids, origin):
        self.evaluator = evaluator
        self.schema = schema
        self.x = x
        self.target = target
        self.config = config
        self.index_maps = [
            {value: i for i, value in enumerate(grid)} for grid in grids
        ]
        self.origin = origin
        self.best: Optional[tuple] = None
        self.best_key = None

    def objective(self, candidate: tuple) -> tuple[float, float, float, bool]:
        """(objective, yloss, distance, valid) for a candidate."""
        score = self.evaluator.score(candidate)
        yloss = hinge_yloss(score, self.target, self.config.margin)
        instance = self.evaluator.instance_for(candidate)
        distance = normalized_distance(self.schema, self.x, instance)
        return yloss + self.config.lambda_dist * distance, yloss, distance, (
            label_for(score) is self.target
        )

    def consider(self, candidate: tuple) -> tuple[float, bool]:
        objective, _, distance, valid = self.objective(candidate)
        if valid:
            key = (
                objective,
                distance,
                tuple(m[v] for m, v in zip(self.index_maps, candidate)),
            )
            if self.best_key is None or key < self.best_key:
                self.best_key = key
                self.best = candidate
        return objective, valid

    def greedy_corner(self, start: tuple, grids: list) -> tuple:
        """Per-feature value pushing the score hardest toward the target,
        holding the other features at the original."""
        corner = list(start)
        for i, grid in enumerate(grids):
            best_value, best_yloss = start[i], None
            for value in grid:
                candidate = tuple(start[:i]) + (value,) + tuple(start[i + 1 :])
                score = self.evaluator.score(candidate)
                yloss = hinge_yloss(score, self.target, self.config.margin)
                if best_yloss is None or yloss < best_yloss:
                    best_yloss, best_value = yloss, value
            corner[i] = best_value
        return tuple(corner)

    def result(self) -> Counterfactual:
        objective, _, distance, _ = self.objective(self.best)
        instance = self.evaluator.instance_for(self.best)
        score = self.evaluator.score(self.best)
        changed = []
        for feat in self.schema.features:
            before = self.x.values[self.schema.index_of(feat.name)]
            after = instance.values[self.schema.index_of(feat.name)]
            if before != after:
                changed.append((feat.name, before, after))
        return Counterfactual(
            instance=instance,
            prediction=Prediction.from_score(score, self.evaluator.model.model_id),
            objective=objective,
            distance=distance,
            changed_features=tuple(changed),
        )


def _single_feature_sweep(tracker: _BestTracker, start: tuple, grids: list) -> None:
    for i, grid in enumerate(grids):
        for value in grid:
            if value == start[i]:
                continue
            tracker.consider(tuple(start[:i]) + (value,) + tuple(start[i + 1 :]))


def _coordinate_descent(tracker: _BestTracker, start: tuple, grids: list) -> None:
    """Cycle through features, each time moving to the best value along that
    coordinate, until a full cycle makes no improvement.

    Valid candidates always beat invalid ones; among equals the objective
    decides, so the walk can cross invalid territory but settles on flips.
    """
    current = list(start)
    current_key = _descent_key(tracker, tuple(current))
    improved = True
    while improved:
        improved = False
        for i, grid in enumerate(grids):
            best_value, best_key = current[i], current_key
            for value in grid:
                if value == current[i]:
                    continue
                candidate = tuple(current[:i]) + (value,) + tuple(current[i + 1 :])
                key = _descent_key(tracker, candidate)
                if key < best_key:
                    best_key, best_value = key, value
            if best_value != current[i]:
                current[i] = best_value
                current_key = best_key
                improved = True


def _descent_key(tracker: _BestTracker, candidate: tuple) -> tuple:
    objective, valid = tracker.consider(candidate)
    return (0 if valid else 1, objective)


def _pair_refinement(tracker: _BestTracker, grids: list, radius: int = 3) -> None:
    """Joint two-feature moves around the incumbent.

    Coordinate descent cannot trade one feature against another in a single
    step, so it can stall on diagonal optima; sweeping pairs of nearby grid
    levels (all levels for categorical features) escapes those. Repeats until
    a fixpoint since consider() advances the incumbent as it goes.
    """
    if len(grids) < 2 or tracker.best is None:
        return
    while True:
        base = tracker.best
        base_key = tracker.best_key
        indices = [m[v] for m, v in zip(tracker.index_maps, base)]
        for i in range(len(grids)):
            for j in range(i + 1, len(grids)):
                for vi in _near_levels(grids[i], indices[i], radius):
                    for vj in _near_levels(grids[j], indices[j], radius):
                        candidate = list(base)
                        candidate[i] = vi
                        candidate[j] = vj
                        tracker.consider(tuple(candidate))
        if tracker.best_key == base_key:
            return


def _near_levels(grid: list, center: int, radius: int) -> list:
    if all(isinstance(v, str) for v in grid):
        return list(grid)
    lo = max(0, center - radius)
    hi = min(len(grid), center + radius + 1)
    return grid[lo:hi]


def build_explanation(
    model: ModelSpec,
    schema: Schema,
    x: Instance,
    report: FlagReport,
    config: SearchConfig = SearchConfig(),
    client=None,
) -> Explanation:
    """Assemble everything a reviewer sees: native attributions when the
    model supports them, per-variant score deltas, the nearest counterfactual
    toward the opposite label, and per-feature flip sensitivities.

    Nothing here is fatal: any part that cannot be produced is omitted with a
    (part, reason) marker. The counterfactual search and the sensitivity line
    searches share one evaluation budget.
    """
    omissions: list[tuple[str, str]] = []

    native = None
    try:
        native = native_attributions(model, x)
    except UnsupportedModelOperation as e:
        omissions.append(("native", str(e)))

    deltas = []
    original_values = {f.name: x.values[i] for i, f in enumerate(schema.features)}
    for variant in report.variants:
        changes = tuple(
            (name, original_values[name], after)
            for name, after in variant.protected_assignment
            if original_values[name] != after
        )
        deltas.append(
            VariantDelta(
                changes=changes,
                score_before=report.prediction.score,
                score_after=variant.prediction.score,
                flipped=variant.flipped,
            )
        )

    evaluator = _Evaluator(
        model,
        schema,
        x,
        tuple(f.name for f in schema.mutable_features),
        config.evaluation_budget,
        client=client,
    )
    target = report.prediction.label.opposite()
    nearest = None
    try:
        found = _search(evaluator, schema, x, target, config)
        if found.counterfactual is None:
            omissions.append(("nearest", found.reason))
        else:
            nearest = found.counterfactual
    except Exception as e:  # prediction failure mid-search
        omissions.append(("nearest", f"search failed: {e}"))

    sensitivities, exhausted = _flip_sensitivities(evaluator, schema, x, target, config)
    if exhausted:
        omissions.append(("sensitivities", "evaluation budget exhausted"))

    return Explanation(
        native=native,
        deltas=tuple(deltas),
        nearest=nearest,
        sensitivities=tuple(sensitivities),
        omissions=tuple(omissions),
    )


def _flip_sensitivities(
    evaluator: _Evaluator,
    schema: Schema,
    x: Instance,
    target: Label,
    config: SearchConfig,
) -> tuple[list[Sensitivity], bool]:
    """Line search each mutable feature for the smallest flipping change.

    Candidates are tried in ascending normalized-change order (ties: lower
    value first) so the first flip found is the minimal one.
    """
    mutable = schema.mutable_features
    start = tuple(x.values[schema.index_of(f.name)] for f in mutable)
    sensitivities: list[Sensitivity] = []
    for i, feat in enumerate(mutable):
        anchor = start[i]
        grid = feature_grid(feat, config, anchor=anchor)
        if feat.domain.kind == CATEGORICAL:
            ordered = [v for v in grid if v != anchor]
        else:
            span = feat.domain.span or 1.0
            ordered = sorted(
                (v for v in grid if v != anchor),
                key=lambda v: (abs(v - anchor) / span, v),
            )
        for value in ordered:
            candidate = start[:i] + (value,) + start[i + 1 :]
            try:
                score = evaluator.score(candidate)
            except _BudgetExhausted:
                return sensitivities, True
            if label_for(score) is target:
                sensitivities.append(
                    Sensitivity(
                        feature=feat.name,
                        from_value=anchor,
                        to_value=value,
                        score=score,
                        label=target,
                    )
                )
                break
    return sensitivities, False
