"""Independent reference implementations used to derive expected values.

Everything here works from the raw JSON documents (schema and model dicts)
with its own arithmetic; nothing imports the package's predictor or engine.
Slow and obvious on purpose: full enumeration and exhaustive grids.
"""

import itertools
import math


def oracle_logistic(z):
    if z < -700:
        return 0.0
    if z > 700:
        return 1.0
    return 1.0 / (1.0 + math.exp(-z))


def oracle_score(model_doc, record):
    """Evaluate a linear-logistic or decision-tree model dict on a record."""
    kind = model_doc["kind"]
    if kind == "linear_logistic":
        z = model_doc.get("intercept", 0.0)
        for name, weight in model_doc.get("weights", {}).items():
            if isinstance(weight, dict):
                z += weight.get(record[name], 0.0)
            else:
                z += weight * record[name]
        return oracle_logistic(z)
    if kind == "decision_tree":
        nodes = model_doc["nodes"]
        node = nodes[0]
        while "score" not in node:
            value = record[node["feature"]]
            if "threshold" in node:
                left = value <= node["threshold"]
            else:
                left = value in node["categories"]
            node = nodes[node["left"] if left else node["right"]]
        return node["score"]
    raise ValueError(f"oracle cannot evaluate model kind {kind!r}")


def oracle_label(score):
    return "positive" if score >= 0.5 else "negative"


def protected_names(schema_doc):
    return [f["name"] for f in schema_doc["features"] if f.get("protected")]


def oracle_flip_stats(model_doc, schema_doc, record):
    """Predict every protected-value combination and count label flips.

    Returns (variant_count, flip_count, flip_fraction, any_disagreement)
    where any_disagreement is True iff the labels over the full product
    (original included) are not all equal.
    """
    protected = [f for f in schema_doc["features"] if f.get("protected")]
    original_label = oracle_label(oracle_score(model_doc, record))
    names = [f["name"] for f in protected]
    original_combo = tuple(record[n] for n in names)
    variants = 0
    flips = 0
    for combo in itertools.product(*(f["values"] for f in protected)):
        if combo == original_combo:
            continue
        variant = dict(record)
        variant.update(zip(names, combo))
        variants += 1
        if oracle_label(oracle_score(model_doc, variant)) != original_label:
            flips += 1
    fraction = flips / variants if variants else 0.0
    return variants, flips, fraction, flips > 0


def oracle_grid(feature_doc, grid_levels, anchor):
    """The search grid for one mutable feature, per the documented grid law."""
    if feature_doc["type"] == "categorical":
        return list(feature_doc["values"])
    bounds = feature_doc["values"]
    lower, upper = float(bounds[0]), float(bounds[1])
    step = float(bounds[2]) if len(bounds) == 3 else None
    if step:
        count = int((upper - lower) / step)
        values = [min(lower + i * step, upper) for i in range(count + 1)]
        if values[-1] < upper:
            values.append(upper)
    elif grid_levels > 1 and upper > lower:
        values = [
            min(lower + (upper - lower) * i / (grid_levels - 1), upper)
            for i in range(grid_levels)
        ]
    else:
        values = [lower]
    if anchor is not None and anchor not in values:
        values.append(anchor)
        values.sort()
    return values


def oracle_distance(schema_doc, record_a, record_b):
    total = 0.0
    for f in schema_doc["features"]:
        a, b = record_a[f["name"]], record_b[f["name"]]
        if f["type"] == "numeric":
            span = float(f["values"][1]) - float(f["values"][0])
            if span > 0:
                total += abs(float(a) - float(b)) / span
        elif a != b:
            total += 1.0
    return total


def oracle_nearest(
    model_doc,
    schema_doc,
    record,
    target,
    lambda_dist=1.0,
    margin=0.05,
    grid_levels=64,
):
    """Exhaustively sweep the full mutable grid for the valid candidate
    minimizing hinge loss + lambda_dist * distance.

    Returns (objective, candidate_record) or (None, None) when no candidate
    attains the target label.
    """
    mutable = [f for f in schema_doc["features"] if f.get("mutable")]
    grids = [oracle_grid(f, grid_levels, record[f["name"]]) for f in mutable]
    names = [f["name"] for f in mutable]
    best = None
    best_candidate = None
    for combo in itertools.product(*grids):
        candidate = dict(record)
        candidate.update(zip(names, combo))
        score = oracle_score(model_doc, candidate)
        if oracle_label(score) != target:
            continue
        if target == "positive":
            yloss = max(0.0, 0.5 + margin - score)
        else:
            yloss = max(0.0, score - 0.5 + margin)
        objective = yloss + lambda_dist * oracle_distance(schema_doc, record, candidate)
        if best is None or objective < best:
            best = objective
            best_candidate = candidate
    return best, best_candidate
