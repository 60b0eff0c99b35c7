#!/usr/bin/env python3
"""Builds the bundled query corpus (data/corpus/adultpii_20.json).

Each entry carries a natural-language phrasing, the structured query form, and
reference answers. The reference answers are computed HERE, in plain Python
over the CSV — deliberately independent of the C++ pipeline — with exact
Fraction arithmetic matching the engine's fixed-point semantics (integer
feature values encode exactly at scale 100).
"""

import csv
import json
import sys
from fractions import Fraction

POOL = "data/pools/adultpii_1000.csv"
OUT = "data/corpus/adultpii_20.json"

NUMERIC = {"age", "hours_per_week", "income", "capital_gain"}
GROUP_VALUES = {
    "workclass": ["private", "government", "self_employed", "unemployed"],
    "education": ["hs", "college", "bachelors", "masters", "doctorate"],
    "marital": ["married", "single", "divorced", "widowed"],
    "occupation": ["tech", "service", "sales", "admin", "manual", "professional"],
    "race": ["white", "black", "asian", "other"],
    "sex": ["male", "female"],
}


# ---- tiny independent query evaluator --------------------------------------------

def atom_matches(row, atom):
    v = row[atom["feature"]]
    op, val = atom["op"], atom["value"]
    if atom["feature"] in NUMERIC:
        v = int(v)
        return {"eq": v == val, "ne": v != val, "gt": v > val, "ge": v >= val,
                "lt": v < val, "le": v <= val}[op]
    if op == "in":
        return v in val
    return {"eq": v == val, "ne": v != val}[op]


def pred_matches(row, pred):
    if pred is True or pred is None:
        return True
    return all(atom_matches(row, a) for a in pred["atoms"])


def conj(pred, extra_atom):
    atoms = [] if pred is True or pred is None else list(pred["atoms"])
    return {"atoms": atoms + [extra_atom]}


def rows_matching(rows, pred):
    return [r for r in rows if pred_matches(r, pred)]


def mean(rows, feature):
    assert rows, "mean over an empty stratum — corpus must avoid this"
    return Fraction(sum(int(r[feature]) for r in rows), len(rows))


def eval_scalar(rows, sub):
    intent = sub["intent"]
    base = rows_matching(rows, sub.get("filter"))
    if intent == "Count":
        return Fraction(len(base))
    if intent == "Sum":
        return Fraction(sum(int(r[sub["feature"]]) for r in base))
    if intent == "Mean":
        return mean(base, sub["feature"])
    if intent in ("Percentage", "Ratio"):
        assert base, "share with an empty base"
        num = rows_matching(base, sub["condition"])
        return Fraction(len(num), len(base))
    if intent == "Comparison":
        left = rows_matching(rows, sub["compare"][0])
        right = rows_matching(rows, sub["compare"][1])
        if sub.get("feature"):
            return mean(left, sub["feature"]) - mean(right, sub["feature"])
        return Fraction(len(left) - len(right))
    raise AssertionError(intent)


def eval_query(rows, ir):
    out = {}
    scalars = {}
    for i, sub in enumerate(ir["subqueries"]):
        name = f"sub{i}"
        if "group_by" in sub:
            for label in GROUP_VALUES[sub["group_by"]]:
                grouped = dict(sub)
                grouped.pop("group_by")
                grouped["filter"] = conj(sub.get("filter"),
                                         {"feature": sub["group_by"], "op": "eq",
                                          "value": label})
                out[f"{name}.{label}"] = eval_scalar(rows, grouped)
        else:
            v = eval_scalar(rows, sub)
            out[name] = v
            scalars[i] = v
    for j, c in enumerate(ir.get("final_combine", [])):
        l, r = scalars[c["args"][0]], scalars[c["args"][1]]
        out[f"combine{j}"] = l - r if c["op"] == "difference" else Fraction(l, r)
    return out


# ---- the corpus -------------------------------------------------------------------

def eq(f, v):
    return {"atoms": [{"feature": f, "op": "eq", "value": v}]}


QUERIES = [
    ("q01_count_married",
     "How many clients are married?",
     {"subqueries": [{"intent": "Count", "filter": eq("marital", "married")}]}),

    ("q02_mean_income",
     "What is the average income across all clients?",
     {"subqueries": [{"intent": "Mean", "feature": "income", "filter": True}]}),

    ("q03_income_by_education",
     "Break down average income by education level, and also give the overall average income.",
     {"subqueries": [
         {"intent": "Mean", "feature": "income", "filter": True, "group_by": "education"},
         {"intent": "Mean", "feature": "income", "filter": True}]}),

    ("q04_overtime_share",
     "What share of clients work more than 40 hours per week, and how many clients are there in total?",
     {"subqueries": [
         {"intent": "Percentage", "filter": True,
          "condition": {"atoms": [{"feature": "hours_per_week", "op": "gt", "value": 40}]}},
         {"intent": "Count", "filter": True}]}),

    ("q05_hours_married_vs_single",
     "Compare weekly hours between married and single clients, and report each group's average hours.",
     {"subqueries": [
         {"intent": "Comparison", "feature": "hours_per_week",
          "compare": [eq("marital", "married"), eq("marital", "single")]},
         {"intent": "Mean", "feature": "hours_per_week", "filter": eq("marital", "married")},
         {"intent": "Mean", "feature": "hours_per_week", "filter": eq("marital", "single")}]}),

    ("q06_degree_premium",
     "How much higher is the average income of doctorate holders than of clients with only high school?",
     {"subqueries": [
         {"intent": "Mean", "feature": "income", "filter": eq("education", "doctorate")},
         {"intent": "Mean", "feature": "income", "filter": eq("education", "hs")}],
      "final_combine": [{"op": "difference", "args": [0, 1]}]}),

    ("q07_count_by_race",
     "How many clients are there of each race, and in total?",
     {"subqueries": [
         {"intent": "Count", "filter": True, "group_by": "race"},
         {"intent": "Count", "filter": True}]}),

    ("q08_female_share_tech",
     "Within tech occupations, what share of clients are female, and how many tech workers are there?",
     {"subqueries": [
         {"intent": "Percentage", "filter": eq("occupation", "tech"),
          "condition": eq("sex", "female")},
         {"intent": "Count", "filter": eq("occupation", "tech")}]}),

    ("q09_working_seniors",
     "Among clients over 65, how many are there, how many still hold a job, and what fraction is that?",
     {"subqueries": [
         {"intent": "Count",
          "filter": {"atoms": [{"feature": "age", "op": "gt", "value": 65}]}},
         {"intent": "Count",
          "filter": {"atoms": [{"feature": "age", "op": "gt", "value": 65},
                               {"feature": "workclass", "op": "ne", "value": "unemployed"}]}}],
      "final_combine": [{"op": "ratio", "args": [1, 0]}]}),

    ("q10_capital_gain_per_client",
     "What is the total capital gain, the number of clients, and the average capital gain per client?",
     {"subqueries": [
         {"intent": "Sum", "feature": "capital_gain", "filter": True},
         {"intent": "Count", "filter": True}],
      "final_combine": [{"op": "ratio", "args": [0, 1]}]}),

    ("q11_age_by_sex",
     "Report the average age by sex and the overall average age.",
     {"subqueries": [
         {"intent": "Mean", "feature": "age", "filter": True, "group_by": "sex"},
         {"intent": "Mean", "feature": "age", "filter": True}]}),

    ("q12_hours_and_headcount_by_workclass",
     "For each work class, report the average weekly hours and the number of clients.",
     {"subqueries": [
         {"intent": "Mean", "feature": "hours_per_week", "filter": True,
          "group_by": "workclass"},
         {"intent": "Count", "filter": True, "group_by": "workclass"}]}),

    ("q13_married_graduates",
     "Among married clients with a bachelors, masters, or doctorate, what is the average income and how many are there?",
     {"subqueries": [
         {"intent": "Mean", "feature": "income",
          "filter": {"atoms": [{"feature": "marital", "op": "eq", "value": "married"},
                               {"feature": "education", "op": "in",
                                "value": ["bachelors", "masters", "doctorate"]}]}},
         {"intent": "Count",
          "filter": {"atoms": [{"feature": "marital", "op": "eq", "value": "married"},
                               {"feature": "education", "op": "in",
                                "value": ["bachelors", "masters", "doctorate"]}]}}]}),

    ("q14_two_shares",
     "What share of clients have any capital gain, and what share work over 40 hours?",
     {"subqueries": [
         {"intent": "Percentage", "filter": True,
          "condition": {"atoms": [{"feature": "capital_gain", "op": "gt", "value": 0}]}},
         {"intent": "Percentage", "filter": True,
          "condition": {"atoms": [{"feature": "hours_per_week", "op": "gt", "value": 40}]}}]}),

    ("q15_income_gap_by_sex",
     "Compare average income between male and female clients, and report each group's average income.",
     {"subqueries": [
         {"intent": "Comparison", "feature": "income",
          "compare": [eq("sex", "male"), eq("sex", "female")]},
         {"intent": "Mean", "feature": "income", "filter": eq("sex", "male")},
         {"intent": "Mean", "feature": "income", "filter": eq("sex", "female")}]}),

    ("q16_private_vs_government",
     "How many more clients work in the private sector than in government, and how many are in each?",
     {"subqueries": [
         {"intent": "Comparison",
          "compare": [eq("workclass", "private"), eq("workclass", "government")]},
         {"intent": "Count", "filter": eq("workclass", "private")},
         {"intent": "Count", "filter": eq("workclass", "government")}]}),

    ("q17_masters_ratio",
     "What fraction of all clients hold a masters degree, and how many clients are there?",
     {"subqueries": [
         {"intent": "Ratio", "filter": True, "condition": eq("education", "masters")},
         {"intent": "Count", "filter": True}]}),

    ("q18_widowed_profile",
     "For widowed clients, what are the average weekly hours and the average income?",
     {"subqueries": [
         {"intent": "Mean", "feature": "hours_per_week", "filter": eq("marital", "widowed")},
         {"intent": "Mean", "feature": "income", "filter": eq("marital", "widowed")}]}),

    ("q19_age_bracket_incomes",
     "How does average income differ between clients over 50 and clients under 30?",
     {"subqueries": [
         {"intent": "Mean", "feature": "income",
          "filter": {"atoms": [{"feature": "age", "op": "gt", "value": 50}]}},
         {"intent": "Mean", "feature": "income",
          "filter": {"atoms": [{"feature": "age", "op": "lt", "value": 30}]}}],
      "final_combine": [{"op": "difference", "args": [0, 1]}]}),

    ("q20_income_tour",
     "Give the overall average income, the average income per work class, and the total number of clients.",
     {"subqueries": [
         {"intent": "Mean", "feature": "income", "filter": True},
         {"intent": "Mean", "feature": "income", "filter": True, "group_by": "workclass"},
         {"intent": "Count", "filter": True}]}),
]


def main():
    rows = list(csv.DictReader(open(POOL)))
    assert len(rows) == 1000, "pool size drifted; regenerate it first"

    corpus = []
    for qid, text, ir in QUERIES:
        expected = {name: float(v) for name, v in sorted(eval_query(rows, ir).items())}
        corpus.append({"id": qid, "text": text, "ir": ir, "expected": expected})

    with open(OUT, "w") as f:
        json.dump(corpus, f, indent=2)
        f.write("\n")
    print(f"wrote {len(corpus)} queries to {OUT}")
    for e in corpus[:3]:
        print(e["id"], "->", e["expected"])


if __name__ == "__main__":
    main()
