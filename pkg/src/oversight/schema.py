"""Tabular input space: typed feature domains, instance validation, dataset
ingestion, and the range-normalized distance between instances.

A schema fixes an ordered feature list; every record is validated against it
before anything downstream (prediction, variant enumeration, search) touches
the values. Numeric domains carry authoritative closed bounds declared in the
schema file, never inferred from data, so distance normalization and grid
search always have a trustworthy range.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    DatasetError,
    InstanceError,
    SchemaError,
    SchemaParseError,
    SchemaValidationError,
)

CATEGORICAL = "categorical"
NUMERIC = "numeric"

#: Sentinel key DictReader uses for columns beyond the header.
_EXTRA = "__extra__"


@dataclass(frozen=True)
class AttributeDomain:
    """Value domain of one feature: a finite category list or a closed interval.

    For numeric domains ``step`` is an optional discretization granularity
    used by grid search; it never restricts which values validate.
    """

    kind: str
    values: tuple[str, ...] = ()
    lower: float = 0.0
    upper: float = 0.0
    step: float | None = None

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.values:
                raise SchemaValidationError("categorical domain has no values")
            if len(set(self.values)) != len(self.values):
                raise SchemaValidationError("categorical domain has duplicate values")
        elif self.kind == NUMERIC:
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise SchemaValidationError("numeric bounds must be finite")
            if self.lower > self.upper:
                raise SchemaValidationError("numeric lower bound exceeds upper bound")
            if self.step is not None and self.step <= 0:
                raise SchemaValidationError("numeric step must be positive")
        else:
            raise SchemaValidationError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def categorical(cls, values: Iterable[str]) -> "AttributeDomain":
        return cls(kind=CATEGORICAL, values=tuple(values))

    @classmethod
    def numeric(cls, lower: float, upper: float, step: float | None = None) -> "AttributeDomain":
        return cls(
            kind=NUMERIC,
            lower=float(lower),
            upper=float(upper),
            step=None if step is None else float(step),
        )

    @property
    def span(self) -> float:
        return self.upper - self.lower

    def contains(self, value) -> bool:
        if self.kind == CATEGORICAL:
            return isinstance(value, str) and value in self.values
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        return math.isfinite(value) and self.lower <= value <= self.upper


@dataclass(frozen=True)
class FeatureSpec:
    """One named feature with its domain and policy flags."""

    name: str
    domain: AttributeDomain
    protected: bool = False
    mutable: bool = False


@dataclass(frozen=True)
class Schema:
    """Ordered feature list defining the Cartesian input space.

    Invariants enforced at construction:
      - feature names are unique,
      - at least one feature is protected,
      - no feature is both protected and mutable (protected attributes are
        varied only by enumeration, never by search),
      - protected features are categorical (variant enumeration requires a
        finite domain; declare numeric protected attributes as bands).
    """

    features: tuple[FeatureSpec, ...]
    positive_label_name: str
    version: str
    _index: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        seen: dict[str, int] = {}
        for i, feat in enumerate(self.features):
            if feat.name in seen:
                raise SchemaValidationError(f"duplicate feature name {feat.name!r}")
            seen[feat.name] = i
            if feat.protected and feat.mutable:
                raise SchemaValidationError(
                    f"feature {feat.name!r} is both protected and mutable"
                )
            if feat.protected and feat.domain.kind != CATEGORICAL:
                raise SchemaValidationError(
                    f"protected feature {feat.name!r} must be categorical"
                )
        if not any(f.protected for f in self.features):
            raise SchemaValidationError("no protected features in schema")
        object.__setattr__(self, "_index", seen)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def feature(self, name: str) -> FeatureSpec:
        return self.features[self.index_of(name)]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def protected_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.protected)

    @property
    def mutable_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.mutable)


@dataclass(frozen=True)
class Instance:
    """One validated input record, values ordered per the schema."""

    values: tuple
    schema_version: str

    def value(self, schema: Schema, name: str):
        return self.values[schema.index_of(name)]

    def to_record(self, schema: Schema) -> dict:
        """Name-to-value map; ``validate_instance`` on it round-trips."""
        return {f.name: v for f, v in zip(schema.features, self.values)}


def load_schema(document: str) -> Schema:
    """Parse and validate a schema document.

    The document is JSON with top-level ``version``, ``positive_label`` and
    ``features``; each feature is ``{name, type, values, protected, mutable}``
    where ``values`` is the category list for categorical features and
    ``[min, max]`` or ``[min, max, step]`` for numeric ones.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaParseError(f"schema document is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise SchemaParseError("schema document must be a JSON object")

    version = raw.get("version")
    positive_label = raw.get("positive_label")
    features_raw = raw.get("features")
    if not isinstance(version, str) or not version:
        raise SchemaParseError("schema needs a non-empty string 'version'")
    if not isinstance(positive_label, str) or not positive_label:
        raise SchemaParseError("schema needs a non-empty string 'positive_label'")
    if not isinstance(features_raw, list) or not features_raw:
        raise SchemaParseError("schema needs a non-empty 'features' array")

    features = []
    for entry in features_raw:
        features.append(_parse_feature(entry))
    return Schema(
        features=tuple(features),
        positive_label_name=positive_label,
        version=version,
    )


def load_schema_file(path) -> Schema:
    with open(path, "r", encoding="utf-8") as fh:
        return load_schema(fh.read())


def _parse_feature(entry) -> FeatureSpec:
    if not isinstance(entry, dict):
        raise SchemaParseError("each feature must be a JSON object")
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaParseError("feature needs a non-empty string 'name'")
    kind = entry.get("type")
    values = entry.get("values")
    try:
        if kind == CATEGORICAL:
            if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
                raise SchemaParseError("'values' must be an array of strings")
            domain = AttributeDomain.categorical(values)
        elif kind == NUMERIC:
            if (
                not isinstance(values, list)
                or len(values) not in (2, 3)
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values)
            ):
                raise SchemaParseError("'values' must be [min, max] or [min, max, step]")
            domain = AttributeDomain.numeric(*values)
        else:
            raise SchemaParseError(f"'type' must be {CATEGORICAL!r} or {NUMERIC!r}")
    except SchemaError as e:
        raise type(e)(f"feature {name!r}: {e}") from None
    return FeatureSpec(
        name=name,
        domain=domain,
        protected=bool(entry.get("protected", False)),
        mutable=bool(entry.get("mutable", False)),
    )


def validate_instance(schema: Schema, record: Mapping) -> Instance:
    """Validate a name-to-raw-value map into an Instance.

    Numeric strings are coerced; categorical values are matched exactly and
    case-sensitively. Every error names the feature and the offending value.
    """
    unknown = set(record) - set(schema.names)
    if unknown:
        name = sorted(unknown)[0]
        raise InstanceError(f"unknown feature {name!r}", feature=name)

    values = []
    for feat in schema.features:
        if feat.name not in record:
            raise InstanceError(f"missing feature {feat.name!r}", feature=feat.name)
        raw = record[feat.name]
        if feat.domain.kind == NUMERIC:
            values.append(_coerce_numeric(feat, raw))
        else:
            values.append(_check_categorical(feat, raw))
    return Instance(values=tuple(values), schema_version=schema.version)


def _coerce_numeric(feat: FeatureSpec, raw) -> float:
    if isinstance(raw, bool):
        raise InstanceError(
            f"feature {feat.name!r}: {raw!r} is not a numeric value", feature=feat.name
        )
    if isinstance(raw, (int, float)):
        value = float(raw)
    elif isinstance(raw, str):
        try:
            value = float(raw.strip())
        except ValueError:
            raise InstanceError(
                f"feature {feat.name!r}: {raw!r} is not a numeric value",
                feature=feat.name,
            ) from None
    else:
        raise InstanceError(
            f"feature {feat.name!r}: {raw!r} is not a numeric value", feature=feat.name
        )
    if not math.isfinite(value):
        raise InstanceError(
            f"feature {feat.name!r}: value {raw!r} is not finite", feature=feat.name
        )
    dom = feat.domain
    if not (dom.lower <= value <= dom.upper):
        raise InstanceError(
            f"feature {feat.name!r}: value {value!r} outside [{dom.lower}, {dom.upper}]",
            feature=feat.name,
        )
    return value


def _check_categorical(feat: FeatureSpec, raw) -> str:
    if not isinstance(raw, str):
        raise InstanceError(
            f"feature {feat.name!r}: expected a category string, got {raw!r}",
            feature=feat.name,
        )
    if raw not in feat.domain.values:
        raise InstanceError(
            f"feature {feat.name!r}: unknown category {raw!r}", feature=feat.name
        )
    return raw


def substitute(schema: Schema, x: Instance, updates: Mapping) -> Instance:
    """Copy of ``x`` with the given feature values replaced.

    Values must already be canonical and in-domain; this is the fast path the
    engine uses to build variants and search candidates.
    """
    values = list(x.values)
    for name, value in updates.items():
        i = schema.index_of(name)
        if not schema.features[i].domain.contains(value):
            raise InstanceError(
                f"feature {name!r}: value {value!r} outside its domain", feature=name
            )
        values[i] = float(value) if schema.features[i].domain.kind == NUMERIC else value
    return Instance(values=tuple(values), schema_version=x.schema_version)


@dataclass(frozen=True)
class RowRejection:
    """One rejected dataset row: 1-based data-row number plus the reason."""

    row: int
    reason: str


def ingest_dataset(schema: Schema, stream) -> tuple[list[Instance], list[RowRejection]]:
    """Read a CSV stream (header row naming features) into instances.

    Bad rows never abort the ingest; they are collected as rejections with
    their 1-based data-row number. Row order and the count identity
    ``len(instances) + len(rejections) == data rows`` are preserved.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    try:
        reader = csv.DictReader(stream, restkey=_EXTRA, restval=None)
        header = reader.fieldnames
    except (OSError, csv.Error) as e:
        raise DatasetError(f"unreadable dataset: {e}") from e
    if header is None:
        raise DatasetError("dataset has no header row")

    instances: list[Instance] = []
    rejections: list[RowRejection] = []
    for row_no, row in enumerate(reader, start=1):
        if _EXTRA in row:
            rejections.append(RowRejection(row=row_no, reason="row has extra columns"))
            continue
        if any(v is None for v in row.values()):
            rejections.append(RowRejection(row=row_no, reason="row has missing columns"))
            continue
        try:
            instances.append(validate_instance(schema, row))
        except InstanceError as e:
            rejections.append(RowRejection(row=row_no, reason=str(e)))
    return instances, rejections


def normalized_distance(schema: Schema, a: Instance, b: Instance) -> float:
    """Sum over features of per-feature distance between two instances.

    Numeric features contribute ``|a_i - b_i| / (upper - lower)`` (0 when the
    domain is a single point); categorical features contribute 0/1. This is a
    metric on valid instances of one schema.
    """
    if a.schema_version != b.schema_version or a.schema_version != schema.version:
        raise SchemaError(
            "schema version mismatch: "
            f"{a.schema_version!r} vs {b.schema_version!r} under {schema.version!r}"
        )
    total = 0.0
    for feat, av, bv in zip(schema.features, a.values, b.values):
        if feat.domain.kind == NUMERIC:
            span = feat.domain.span
            if span > 0:
                total += abs(av - bv) / span
        elif av != bv:
            total += 1.0
    return total
