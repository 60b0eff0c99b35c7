#!/usr/bin/env python3
"""Generates the bundled census-style client pool (data/pools/adultpii_1000.csv).

Deterministic for a fixed seed. Values are integers so fixed-point encoding at
scale 100 is exact and the plaintext oracle's rationals stay exact fractions.
"""

import csv
import random
import sys

SEED = 20260818
N = 1000

WORKCLASS = ["private", "government", "self_employed", "unemployed"]
WORKCLASS_W = [62, 18, 12, 8]
EDUCATION = ["hs", "college", "bachelors", "masters", "doctorate"]
EDUCATION_W = [30, 26, 24, 14, 6]
MARITAL = ["married", "single", "divorced", "widowed"]
MARITAL_W = [46, 32, 16, 6]
RACE = ["white", "black", "asian", "other"]
RACE_W = [70, 12, 12, 6]
SEX = ["male", "female"]

# occupation mix shifts with education: manual/service fade, professional grows
OCC = ["tech", "service", "sales", "admin", "manual", "professional"]
OCC_W = {
    "hs":        [6, 24, 18, 16, 30, 6],
    "college":   [12, 18, 20, 20, 18, 12],
    "bachelors": [22, 10, 16, 18, 8, 26],
    "masters":   [26, 6, 10, 14, 4, 40],
    "doctorate": [30, 2, 4, 6, 2, 56],
}

INCOME_BASE = {"hs": 35000, "college": 45000, "bachelors": 60000,
               "masters": 75000, "doctorate": 95000}
WORK_MULT = {"private": 1.0, "government": 0.9, "self_employed": 1.2}


def main(out_path: str) -> None:
    rng = random.Random(SEED)
    rows = []
    for _ in range(N):
        age = min(90, max(17, int(rng.gauss(40, 14))))
        education = rng.choices(EDUCATION, EDUCATION_W)[0]
        workclass = rng.choices(WORKCLASS, WORKCLASS_W)[0]
        marital = rng.choices(MARITAL, MARITAL_W)[0]
        occupation = rng.choices(OCC, OCC_W[education])[0]
        race = rng.choices(RACE, RACE_W)[0]
        sex = rng.choice(SEX)

        if workclass == "unemployed":
            hours = rng.randint(1, 10)
            income = rng.randint(0, 10000)
        else:
            hours = min(99, max(1, int(rng.gauss(41, 10))))
            base = INCOME_BASE[education] * WORK_MULT[workclass]
            income = int(base * rng.uniform(0.7, 1.3))
            # seniority premium
            if age > 50:
                income = int(income * 1.15)
        capital_gain = 0
        if rng.random() < 0.10:
            capital_gain = min(99999, int(rng.uniform(500, 40000) ** 1.0))

        rows.append([age, workclass, education, marital, occupation, race, sex,
                     hours, income, capital_gain])

    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["age", "workclass", "education", "marital", "occupation",
                    "race", "sex", "hours_per_week", "income", "capital_gain"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/pools/adultpii_1000.csv")
