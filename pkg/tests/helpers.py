"""Shared fixture material: the loan schema and small hand-written models."""

import json

from oversight.models import load_model
from oversight.schema import load_schema

LOAN_SCHEMA_DOC = json.dumps(
    {
        "version": "loan-v1",
        "positive_label": "approved",
        "features": [
            {"name": "income", "type": "numeric", "values": [0, 200000, 1000], "mutable": True},
            {"name": "debt_ratio", "type": "numeric", "values": [0, 1], "mutable": True},
            {
                "name": "gender",
                "type": "categorical",
                "values": ["male", "female"],
                "protected": True,
            },
            {
                "name": "race",
                "type": "categorical",
                "values": ["groupA", "groupB", "groupC"],
                "protected": True,
            },
        ],
    }
)


def loan_record(**overrides):
    base = {"income": 50000, "debt_ratio": 0.3, "gender": "male", "race": "groupA"}
    base.update(overrides)
    return base


GENDER_MODEL_DOC = {
    "model_id": "gender_linear",
    "kind": "linear_logistic",
    "intercept": -0.5,
    "weights": {"gender": {"male": 1.0}},
}

BLIND_MODEL_DOC = {
    "model_id": "blind_linear",
    "kind": "linear_logistic",
    "intercept": -3.0,
    "weights": {"income": 4e-5, "debt_ratio": -2.0},
}


def gender_only_model(schema):
    return load_model(json.dumps(GENDER_MODEL_DOC), schema)


def blind_linear_model(schema):
    """Protected-blind: depends only on the numeric features."""
    return load_model(json.dumps(BLIND_MODEL_DOC), schema)


def mixed_linear_model(schema):
    doc = {
        "model_id": "mixed_linear",
        "kind": "linear_logistic",
        "intercept": -1.5,
        "weights": {
            "income": 2e-5,
            "debt_ratio": -1.0,
            "gender": {"male": 0.4},
            "race": {"groupB": 0.25, "groupC": -0.35},
        },
    }
    return load_model(json.dumps(doc), schema)


def race_tree_model(schema):
    doc = {
        "model_id": "race_tree",
        "kind": "decision_tree",
        "nodes": [
            {"feature": "race", "categories": ["groupC"], "left": 1, "right": 2},
            {"feature": "income", "threshold": 60000, "left": 3, "right": 4},
            {"feature": "income", "threshold": 30000, "left": 5, "right": 6},
            {"score": 0.25},
            {"score": 0.7},
            {"score": 0.4},
            {"score": 0.8},
        ],
    }
    return load_model(json.dumps(doc), schema)


def income_tree_model(schema, threshold=49999):
    """Positive iff income strictly above the threshold."""
    doc = {
        "model_id": "income_tree",
        "kind": "decision_tree",
        "nodes": [
            {"feature": "income", "threshold": threshold, "left": 1, "right": 2},
            {"score": 0.2},
            {"score": 0.8},
        ],
    }
    return load_model(json.dumps(doc), schema)


def loan_schema():
    return load_schema(LOAN_SCHEMA_DOC)
