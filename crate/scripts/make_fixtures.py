#!/usr/bin/env python3
"""Regenerate the synthetic tabular fixtures under crates/core/fixtures/.

The files are committed; this script documents how they were produced.
Column layouts, level sets and value ranges follow the public Statlog
German Credit and Statlog Heart datasets, but every row is synthetic.
"""
import json
import os

import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures")


def pick(rng, levels, probs, n):
    probs = np.asarray(probs, dtype=float)
    return rng.choice(levels, size=n, p=probs / probs.sum())


def sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def write(name, columns, rows, schema):
    with open(os.path.join(OUT, f"{name}.csv"), "w") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    with open(os.path.join(OUT, f"{name}.schema.json"), "w") as fh:
        json.dump(schema, fh, indent=2)
        fh.write("\n")


def fmt(v, decimals):
    return f"{v:.{decimals}f}" if decimals else str(int(round(v)))


def german(n=300, seed=7):
    rng = np.random.default_rng(seed)
    checking_l = ["<0", "0<=X<200", ">=200", "no checking"]
    history_l = ["no credits/all paid", "all paid", "existing paid",
                 "delayed previously", "critical/other existing credit"]
    purpose_l = ["new car", "used car", "furniture/equipment", "radio/tv",
                 "domestic appliance", "repairs", "education", "retraining",
                 "business", "other"]
    savings_l = ["<100", "100<=X<500", "500<=X<1000", ">=1000", "no known savings"]
    employment_l = ["unemployed", "<1", "1<=X<4", "4<=X<7", ">=7"]
    personal_l = ["male div/sep", "female div/dep/mar", "male single", "male mar/wid"]
    parties_l = ["none", "co applicant", "guarantor"]
    property_l = ["real estate", "life insurance", "car", "no known property"]
    plans_l = ["bank", "stores", "none"]
    housing_l = ["rent", "own", "for free"]
    job_l = ["unemp/unskilled non res", "unskilled resident", "skilled",
             "high qualif/self emp/mgmt"]

    checking = pick(rng, checking_l, [27, 27, 6, 40], n)
    amount = np.clip(np.exp(rng.normal(np.log(2300), 0.7, n)), 250, 18424)
    duration = np.clip(np.round(4 + 0.0028 * amount + rng.normal(0, 5, n)), 4, 72)
    history = pick(rng, history_l, [4, 5, 53, 9, 29], n)
    purpose = pick(rng, purpose_l, [23, 10, 18, 28, 1, 2, 5, 1, 10, 2], n)
    savings = pick(rng, savings_l, [60, 10, 6, 5, 19], n)
    age = np.clip(np.round(19 + rng.gamma(2.2, 7.5, n)), 19, 75)
    emp_idx = np.clip(np.round((age - 19) / 12 + rng.normal(1.3, 1.0, n)), 0, 4).astype(int)
    employment = np.array(employment_l)[emp_idx]
    installment = rng.integers(1, 5, n).astype(float)
    personal = pick(rng, personal_l, [5, 31, 55, 9], n)
    parties = pick(rng, parties_l, [91, 4, 5], n)
    residence = rng.integers(1, 5, n)
    prop = pick(rng, property_l, [28, 23, 33, 16], n)
    plans = pick(rng, plans_l, [14, 5, 81], n)
    housing = pick(rng, housing_l, [18, 71, 11], n)
    credits = np.clip(rng.poisson(0.4, n) + 1, 1, 4)
    job = pick(rng, job_l, [2, 20, 63, 15], n)
    dependents = np.where(rng.random(n) < 0.15, 2, 1)
    phone = pick(rng, ["none", "yes"], [60, 40], n)
    foreign = pick(rng, ["yes", "no"], [96, 4], n)

    logit = (-0.3
             + 1.3 * (checking == "no checking") - 0.9 * (checking == "<0")
             - 0.045 * (duration - 20) - 0.00012 * (amount - 3000)
             + 0.025 * (age - 35)
             + 0.7 * (history == "critical/other existing credit")
             - 0.5 * (savings == "<100") + 0.4 * (housing == "own")
             - 0.35 * (installment - 3) + 0.3 * (emp_idx - 2)
             + 0.4 * (prop == "real estate") - 0.4 * (plans == "bank"))
    good = rng.random(n) < sigmoid(logit)
    label = np.where(good, "good", "bad")

    columns = ["checking_status", "duration", "credit_history", "purpose",
               "credit_amount", "savings_status", "employment",
               "installment_commitment", "personal_status", "other_parties",
               "residence_since", "property_magnitude", "age",
               "other_payment_plans", "housing", "existing_credits", "job",
               "num_dependents", "own_telephone", "foreign_worker", "class"]
    rows = []
    for i in range(n):
        rows.append([checking[i], fmt(duration[i], 1), history[i], purpose[i],
                     fmt(amount[i], 2), savings[i], employment[i],
                     fmt(installment[i], 1), personal[i], parties[i],
                     fmt(residence[i], 0), prop[i], fmt(age[i], 1), plans[i],
                     housing[i], fmt(credits[i], 0), job[i],
                     fmt(dependents[i], 0), phone[i], foreign[i], label[i]])

    def num(name, kind, lo, hi, act="free"):
        return {"name": name, "kind": kind, "lower": lo, "upper": hi,
                "actionability": act}

    def cat(name, levels, act="free", transitions=None):
        spec = {"name": name, "kind": "categorical", "levels": levels,
                "actionability": act}
        if transitions is not None:
            spec["allowed_transitions"] = transitions
        return spec

    longer = {lvl: employment_l[k + 1:] for k, lvl in enumerate(employment_l)}
    features = [
        cat("checking_status", checking_l),
        num("duration", "continuous", 4, 72, "non-negative"),
        cat("credit_history", history_l),
        cat("purpose", purpose_l, "immutable"),
        num("credit_amount", "continuous", 250, 18424, "non-negative"),
        cat("savings_status", savings_l),
        cat("employment", employment_l, "conditional", longer),
        num("installment_commitment", "continuous", 1, 4, "non-negative"),
        cat("personal_status", personal_l, "immutable"),
        cat("other_parties", parties_l),
        num("residence_since", "integer", 1, 4, "non-decreasing"),
        cat("property_magnitude", property_l),
        num("age", "continuous", 19, 75, "non-decreasing"),
        cat("other_payment_plans", plans_l),
        cat("housing", housing_l),
        num("existing_credits", "integer", 1, 4, "non-negative"),
        cat("job", job_l),
        num("num_dependents", "integer", 1, 2, "non-negative"),
        cat("own_telephone", ["none", "yes"]),
        cat("foreign_worker", ["yes", "no"], "immutable"),
    ]
    schema = {"label_column": "class", "label_levels": ["bad", "good"],
              "features": features}
    write("german_credit", columns, rows, schema)
    print("german_credit:", n, "rows,", int(good.sum()), "good")


def heart(n=270, seed=11):
    rng = np.random.default_rng(seed)
    chp_l = ["typical angina", "atypical angina", "nonanginal pain", "asymptomatic"]
    ecg_l = ["normal", "ST-T wave abnormality", "left ventricular hypertrophy"]
    slope_l = ["upsloping", "flat", "downsloping"]
    thal_l = ["normal", "fixed defect", "reversible defect"]

    age = np.clip(np.round(rng.normal(54, 9, n)), 29, 77)
    sex = pick(rng, ["female", "male"], [32, 68], n)
    chp = pick(rng, chp_l, [8, 16, 29, 47], n)
    bp = np.clip(np.round(rng.normal(131, 17, n)), 94, 200)
    sch = np.clip(rng.normal(249, 50, n), 126, 564)
    fbs = pick(rng, ["false", "true"], [85, 15], n)
    ecg = pick(rng, ecg_l, [49, 1, 50], n)
    mhrt = np.clip(rng.normal(205 - 0.9 * age, 18, n), 71, 202)
    exian = pick(rng, ["no", "yes"], [67, 33], n)
    opk = np.clip(rng.gamma(1.1, 0.95, n), 0, 6.2)
    slope = pick(rng, slope_l, [48, 45, 7], n)
    vessel = pick(rng, ["0", "1", "2", "3"], [59, 21, 12, 8], n)
    thal = pick(rng, thal_l, [56, 5, 39], n)

    logit = (-0.6 + 0.9 * (sex == "male") + 1.3 * (chp == "asymptomatic")
             + 0.8 * (exian == "yes") + 0.7 * opk - 0.025 * (mhrt - 150)
             + 0.8 * (vessel != "0") + 1.1 * (thal == "reversible defect")
             + 0.6 * (slope == "flat") + 0.004 * (sch - 250) + 0.01 * (bp - 130)
             + 0.03 * (age - 54) - 1.8)
    present = rng.random(n) < sigmoid(logit)
    label = np.where(present, "present", "absent")

    columns = ["age", "sex", "chp", "bp", "sch", "fbs", "ecg", "mhrt", "exian",
               "opk", "slope", "vessel", "thal", "disease"]
    rows = []
    for i in range(n):
        rows.append([fmt(age[i], 1), sex[i], chp[i], fmt(bp[i], 1),
                     fmt(sch[i], 2), fbs[i], ecg[i], fmt(mhrt[i], 2), exian[i],
                     fmt(opk[i], 2), slope[i], vessel[i], thal[i], label[i]])

    features = [
        {"name": "age", "kind": "continuous", "lower": 29, "upper": 77,
         "actionability": "immutable"},
        {"name": "sex", "kind": "categorical", "levels": ["female", "male"],
         "actionability": "immutable"},
        {"name": "chp", "kind": "categorical", "levels": chp_l, "actionability": "free"},
        {"name": "bp", "kind": "continuous", "lower": 94, "upper": 200,
         "actionability": "non-negative"},
        {"name": "sch", "kind": "continuous", "lower": 126, "upper": 564,
         "actionability": "non-negative"},
        {"name": "fbs", "kind": "categorical", "levels": ["false", "true"],
         "actionability": "free"},
        {"name": "ecg", "kind": "categorical", "levels": ecg_l, "actionability": "free"},
        {"name": "mhrt", "kind": "continuous", "lower": 71, "upper": 202,
         "actionability": "non-negative"},
        {"name": "exian", "kind": "categorical", "levels": ["no", "yes"],
         "actionability": "free"},
        {"name": "opk", "kind": "continuous", "lower": 0, "upper": 6.2,
         "actionability": "non-negative"},
        {"name": "slope", "kind": "categorical", "levels": slope_l, "actionability": "free"},
        {"name": "vessel", "kind": "categorical", "levels": ["0", "1", "2", "3"],
         "actionability": "free"},
        {"name": "thal", "kind": "categorical", "levels": thal_l, "actionability": "free"},
    ]
    schema = {"label_column": "disease", "label_levels": ["absent", "present"],
              "features": features}
    write("heart", columns, rows, schema)
    print("heart:", n, "rows,", int(present.sum()), "present")


if __name__ == "__main__":
    german()
    heart()
