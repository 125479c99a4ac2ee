"""Child process for the crash-recovery test: loops the fixture dataset
through the decision flow until killed from outside."""

import sys

from oversight.config import ServiceConfig
from oversight.schema import ingest_dataset
from oversight.service import build_runtime


def main():
    schema_path, model_path, audit_path, data_path = sys.argv[1:5]
    config = ServiceConfig(
        schema_path=schema_path, model_path=model_path, audit_path=audit_path
    )
    runtime = build_runtime(config)
    with open(data_path, "r", encoding="utf-8", newline="") as fh:
        instances, _ = ingest_dataset(runtime.monitor.schema, fh)
    while True:
        for x in instances:
            runtime.monitor.process_decision(x)


if __name__ == "__main__":
    main()
