"""Regenerates loans_200.csv in place. Seeded, so the output is stable;
rerun only if the loan schema changes shape."""

import csv
import random
from pathlib import Path

SEED = 20240801
ROWS = 200
FIELDS = ["income", "debt_ratio", "credit_score", "gender", "race"]


def make_rows(rng):
    rows = []
    for _ in range(ROWS):
        rows.append(
            {
                "income": rng.randrange(0, 200001, 1000),
                "debt_ratio": round(rng.random(), 3),
                "credit_score": rng.randrange(300, 851),
                "gender": rng.choice(["male", "female"]),
                "race": rng.choices(["groupA", "groupB", "groupC"], weights=[5, 3, 2])[0],
            }
        )
    return rows


def main():
    out = Path(__file__).with_name("loans_200.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        writer.writeheader()
        writer.writerows(make_rows(random.Random(SEED)))
    print(f"wrote {ROWS} rows to {out}")


if __name__ == "__main__":
    main()
