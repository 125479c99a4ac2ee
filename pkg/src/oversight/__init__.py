"""Runtime fairness oversight for tabular binary classifiers.

Wraps a scoring model with a per-decision discrimination check: protected
attribute variants of each input are enumerated and scored, decisions whose
label flips too often are routed to human review, and every outcome lands in
an append-only audit log.
"""

__version__ = "0.1.0"
