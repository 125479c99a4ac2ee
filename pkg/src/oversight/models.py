"""Uniform prediction interface over pluggable binary classifiers.

Two portable in-process model formats (linear-logistic and decision-tree,
loaded from JSON and cross-validated against the schema) plus an HTTP client
for a remote scoring endpoint. All three produce the same Prediction shape;
the decision threshold is fixed at 0.5 with ties labeled positive.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional

import httpx

from .errors import (
    ModelError,
    RemoteResponseError,
    RemoteTimeoutError,
    RemoteTransportError,
    UnsupportedModelOperation,
)
from .schema import CATEGORICAL, NUMERIC, Instance, Schema

LINEAR = "linear_logistic"
TREE = "decision_tree"
REMOTE = "remote"

THRESHOLD = 0.5


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    def opposite(self) -> "Label":
        return Label.NEGATIVE if self is Label.POSITIVE else Label.POSITIVE


def label_for(score: float) -> Label:
    # Ties at the threshold are positive by convention.
    return Label.POSITIVE if score >= THRESHOLD else Label.NEGATIVE


def logistic(z: float) -> float:
    """Numerically stable standard logistic function."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class Prediction:
    score: float
    label: Label
    model_id: str

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ModelError(f"score {self.score!r} outside [0, 1]")
        if self.label is not label_for(self.score):
            raise ModelError(
                f"label {self.label.value!r} inconsistent with score {self.score!r}"
            )

    @classmethod
    def from_score(cls, score: float, model_id: str) -> "Prediction":
        return cls(score=score, label=label_for(score), model_id=model_id)


@dataclass(frozen=True)
class TreeNode:
    """One node of a decision tree: a split or a leaf.

    Split semantics: numeric value ≤ threshold goes left, categorical value
    in `categories` goes left; otherwise right. Leaves carry only a score.
    """

    feature: Optional[str] = None
    threshold: Optional[float] = None
    categories: Optional[frozenset] = None
    left: Optional[int] = None
    right: Optional[int] = None
    score: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.score is not None


@dataclass(frozen=True)
class RemoteEndpoint:
    url: str
    timeout: float = 5.0
    retries: int = 2


@dataclass(frozen=True)
class ModelSpec:
    """A loaded, schema-validated model of one of the three kinds."""

    model_id: str
    kind: str
    schema: Schema
    intercept: float = 0.0
    numeric_weights: Mapping[str, float] = field(default_factory=dict)
    categorical_weights: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    nodes: tuple[TreeNode, ...] = ()
    endpoint: Optional[RemoteEndpoint] = None


def load_model(document: str, schema: Schema) -> ModelSpec:
    """Parse a JSON model document and cross-validate it against the schema.

    Every referenced feature must exist with a compatible kind; trees must be
    single-rooted and acyclic with every node reachable and leaf scores in
    [0, 1].
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as e:
        raise ModelError(f"model document is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ModelError("model document must be a JSON object")
    model_id = raw.get("model_id")
    if not isinstance(model_id, str) or not model_id:
        raise ModelError("model needs a non-empty string 'model_id'")
    kind = raw.get("kind")
    if kind == LINEAR:
        return _load_linear(raw, model_id, schema)
    if kind == TREE:
        return _load_tree(raw, model_id, schema)
    if kind == REMOTE:
        return _load_remote(raw, model_id, schema)
    raise ModelError(f"'kind' must be one of {LINEAR!r}, {TREE!r}, {REMOTE!r}")


def load_model_file(path, schema: Schema) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read(), schema)


def _load_linear(raw: dict, model_id: str, schema: Schema) -> ModelSpec:
    intercept = raw.get("intercept", 0.0)
    if isinstance(intercept, bool) or not isinstance(intercept, (int, float)):
        raise ModelError("'intercept' must be a number")
    weights = raw.get("weights", {})
    if not isinstance(weights, dict):
        raise ModelError("'weights' must be an object keyed by feature name")

    numeric: dict[str, float] = {}
    categorical: dict[str, dict[str, float]] = {}
    for name, value in weights.items():
        if name not in schema.names:
            raise ModelError(f"weight references unknown feature {name!r}")
        feat = schema.feature(name)
        if feat.domain.kind == NUMERIC:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ModelError(f"numeric feature {name!r} needs a scalar weight")
            numeric[name] = float(value)
        else:
            if not isinstance(value, dict):
                raise ModelError(
                    f"categorical feature {name!r} needs a per-category weight object"
                )
            per_cat: dict[str, float] = {}
            for cat, w in value.items():
                if cat not in feat.domain.values:
                    raise ModelError(
                        f"weight for feature {name!r} references unknown category {cat!r}"
                    )
                if isinstance(w, bool) or not isinstance(w, (int, float)):
                    raise ModelError(f"weight for {name!r}/{cat!r} must be a number")
                per_cat[cat] = float(w)
            categorical[name] = per_cat
    return ModelSpec(
        model_id=model_id,
        kind=LINEAR,
        schema=schema,
        intercept=float(intercept),
        numeric_weights=numeric,
        categorical_weights=categorical,
    )


def _load_tree(raw: dict, model_id: str, schema: Schema) -> ModelSpec:
    nodes_raw = raw.get("nodes")
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise ModelError("'nodes' must be a non-empty array; node 0 is the root")
    nodes = tuple(_parse_node(i, entry, schema) for i, entry in enumerate(nodes_raw))
    _validate_tree(nodes)
    return ModelSpec(model_id=model_id, kind=TREE, schema=schema, nodes=nodes)


def _parse_node(index: int, entry, schema: Schema) -> TreeNode:
    if not isinstance(entry, dict):
        raise ModelError(f"node {index}: must be a JSON object")
    if "score" in entry:
        score = entry["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise ModelError(f"node {index}: leaf 'score' must be a number")
        if not (0.0 <= score <= 1.0):
            raise ModelError(f"node {index}: leaf score {score!r} outside [0, 1]")
        return TreeNode(score=float(score))

    name = entry.get("feature")
    if not isinstance(name, str) or name not in schema.names:
        raise ModelError(f"node {index}: split references unknown feature {name!r}")
    feat = schema.feature(name)
    left, right = entry.get("left"), entry.get("right")
    for label, child in (("left", left), ("right", right)):
        if isinstance(child, bool) or not isinstance(child, int):
            raise ModelError(f"node {index}: '{label}' must be a node index")

    if feat.domain.kind == NUMERIC:
        threshold = entry.get("threshold")
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
            raise ModelError(f"node {index}: numeric split needs a 'threshold'")
        return TreeNode(feature=name, threshold=float(threshold), left=left, right=right)
    cats = entry.get("categories")
    if not isinstance(cats, list) or not cats:
        raise ModelError(f"node {index}: categorical split needs 'categories'")
    for cat in cats:
        if cat not in feat.domain.values:
            raise ModelError(
                f"node {index}: split on {name!r} references unknown category {cat!r}"
            )
    return TreeNode(feature=name, categories=frozenset(cats), left=left, right=right)


def _validate_tree(nodes: tuple[TreeNode, ...]) -> None:
    # Single-rooted: node 0 is the root, every other node has exactly one
    # parent, and walking child links never revisits a node.
    n = len(nodes)
    parents: dict[int, int] = {}
    for i, node in enumerate(nodes):
        if node.is_leaf:
            continue
        for child in (node.left, node.right):
            if not (0 <= child < n):
                raise ModelError(f"node {i}: dangling child index {child}")
            if child == i:
                raise ModelError(f"node {i}: lists itself as a child")
            if child == 0:
                raise ModelError(f"node {i}: the root cannot be a child")
            if child in parents:
                raise ModelError(f"node {child}: has multiple parents")
            parents[child] = i

    reached = set()
    stack = [0]
    while stack:
        i = stack.pop()
        if i in reached:
            raise ModelError(f"node {i}: cycle detected")
        reached.add(i)
        node = nodes[i]
        if not node.is_leaf:
            stack.extend((node.left, node.right))
    if len(reached) != n:
        orphan = min(set(range(n)) - reached)
        raise ModelError(f"node {orphan}: unreachable from the root")


def _load_remote(raw: dict, model_id: str, schema: Schema) -> ModelSpec:
    url = raw.get("url")
    if not isinstance(url, str) or not url:
        raise ModelError("remote model needs a non-empty string 'url'")
    timeout = raw.get("timeout", 5.0)
    retries = raw.get("retries", 2)
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        raise ModelError("'timeout' must be a positive number of seconds")
    if isinstance(retries, bool) or not isinstance(retries, int) or retries < 0:
        raise ModelError("'retries' must be a non-negative integer")
    endpoint = RemoteEndpoint(url=url, timeout=float(timeout), retries=retries)
    return ModelSpec(model_id=model_id, kind=REMOTE, schema=schema, endpoint=endpoint)


def _check_schema(model: ModelSpec, x: Instance) -> None:
    if x.schema_version != model.schema.version:
        raise ModelError(
            f"instance schema {x.schema_version!r} does not match "
            f"model schema {model.schema.version!r}"
        )


def predict(model: ModelSpec, x: Instance) -> Prediction:
    """Deterministically score an instance with an in-process model."""
    _check_schema(model, x)
    if model.kind == LINEAR:
        z = model.intercept
        for feat, value in zip(model.schema.features, x.values):
            if feat.domain.kind == NUMERIC:
                z += model.numeric_weights.get(feat.name, 0.0) * value
            else:
                z += model.categorical_weights.get(feat.name, {}).get(value, 0.0)
        return Prediction.from_score(logistic(z), model.model_id)
    if model.kind == TREE:
        node = model.nodes[0]
        while not node.is_leaf:
            node = model.nodes[node.left if _goes_left(model.schema, node, x) else node.right]
        return Prediction.from_score(node.score, model.model_id)
    raise UnsupportedModelOperation("remote models are scored via remote_predict")


def _goes_left(schema: Schema, node: TreeNode, x: Instance) -> bool:
    value = x.values[schema.index_of(node.feature)]
    if node.threshold is not None:
        return value <= node.threshold
    return value in node.categories


def remote_predict(
    model: ModelSpec,
    x: Instance,
    client: Optional[httpx.Client] = None,
    backoff: float = 0.0,
) -> Prediction:
    """Score an instance via the remote wire contract, retrying transient
    failures up to the endpoint's retry budget.

    Timeouts and transport errors (including non-2xx statuses) are transient
    and retried; a malformed response body is not, since the endpoint is
    answering and will answer the same way again. Every failure is raised, so
    the caller never receives a fabricated prediction.
    """
    if model.kind != REMOTE:
        raise UnsupportedModelOperation("remote_predict requires a remote model")
    _check_schema(model, x)
    payload = {"model_id": model.model_id, "features": x.to_record(model.schema)}
    endpoint = model.endpoint
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=endpoint.timeout)
    last: Exception | None = None
    try:
        for attempt in range(endpoint.retries + 1):
            if attempt and backoff:
                time.sleep(backoff * attempt)
            try:
                response = client.post(endpoint.url, json=payload, timeout=endpoint.timeout)
            except httpx.TimeoutException as e:
                last = RemoteTimeoutError(f"prediction timed out after {endpoint.timeout}s: {e}")
                continue
            except httpx.HTTPError as e:
                last = RemoteTransportError(f"prediction transport failure: {e}")
                continue
            if not (200 <= response.status_code < 300):
                last = RemoteTransportError(
                    f"prediction endpoint returned status {response.status_code}"
                )
                continue
            return _parse_remote_response(response, model.model_id)
        raise last
    finally:
        if own_client:
            client.close()


def _parse_remote_response(response: httpx.Response, model_id: str) -> Prediction:
    try:
        body = response.json()
    except (json.JSONDecodeError, ValueError) as e:
        raise RemoteResponseError(f"prediction response is not valid JSON: {e}") from e
    if not isinstance(body, dict) or "score" not in body:
        raise RemoteResponseError("prediction response missing 'score'")
    score = body["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise RemoteResponseError(f"prediction score {score!r} is not a number")
    if not (0.0 <= score <= 1.0):
        raise RemoteResponseError(f"prediction score {score!r} outside [0, 1]")
    return Prediction.from_score(float(score), model_id)


def predict_instance(
    model: ModelSpec, x: Instance, client: Optional[httpx.Client] = None
) -> Prediction:
    """Kind dispatch used by the pipeline: in-process or remote."""
    if model.kind == REMOTE:
        return remote_predict(model, x, client=client)
    return predict(model, x)


@dataclass(frozen=True)
class Attributions:
    """Model-native explanation: linear contributions or a tree path.

    For linear models, logistic(intercept + sum of contributions) equals the
    predicted score. For trees, `path` lists (feature, branch taken) down to
    the leaf whose score is the prediction.
    """

    kind: str
    contributions: tuple[tuple[str, float], ...] = ()
    intercept: float = 0.0
    path: tuple[tuple[str, str], ...] = ()
    leaf_score: Optional[float] = None


def native_attributions(model: ModelSpec, x: Instance) -> Attributions:
    _check_schema(model, x)
    if model.kind == LINEAR:
        contributions = []
        for feat, value in zip(model.schema.features, x.values):
            if feat.domain.kind == NUMERIC:
                contribution = model.numeric_weights.get(feat.name, 0.0) * value
            else:
                contribution = model.categorical_weights.get(feat.name, {}).get(value, 0.0)
            contributions.append((feat.name, contribution))
        return Attributions(
            kind=LINEAR, contributions=tuple(contributions), intercept=model.intercept
        )
    if model.kind == TREE:
        path = []
        node = model.nodes[0]
        while not node.is_leaf:
            left = _goes_left(model.schema, node, x)
            if node.threshold is not None:
                branch = f"{'<=' if left else '>'} {node.threshold:g}"
            else:
                cats = ",".join(sorted(node.categories))
                branch = f"{'in' if left else 'not in'} {{{cats}}}"
            path.append((node.feature, branch))
            node = model.nodes[node.left if left else node.right]
        return Attributions(kind=TREE, path=tuple(path), leaf_score=node.score)
    raise UnsupportedModelOperation("remote models expose no native attributions")
