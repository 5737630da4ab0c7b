#!/usr/bin/env python3
"""Regenerates the native JSON cases in data/ from the MATPOWER files.

ieee14.json uses the published market data for the 14-bus study.
ieee118.json draws offers, capacities and line limits from a fixed seed;
limited lines are picked near their nominal flows and oriented so the
nominal flow is positive.
"""
import json
import re
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

DATA = Path(__file__).resolve().parent.parent / "data"


def read_matpower(path):
    text = path.read_text()
    out = {"baseMVA": float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", text).group(1))}
    for name in ("bus", "gen", "branch"):
        body = re.search(r"mpc\.%s\s*=\s*\[(.*?)\]" % name, text, re.S).group(1)
        rows = [r.split("%")[0] for r in body.split(";")]
        out[name] = np.array([[float(v) for v in r.split()] for r in rows if r.split()])
    return out


def base_case(mp, name):
    ref = int(mp["bus"][mp["bus"][:, 1] == 3][0, 0])
    return {
        "name": name,
        "base_mva": mp["baseMVA"],
        "reference_bus": ref,
        "buses": [{"id": int(b[0]), "load_mw": float(b[2])} for b in mp["bus"]],
        "branches": [
            {"id": k + 1, "from": int(br[0]), "to": int(br[1]), "x": float(br[3]), "closed": bool(br[10] > 0)}
            for k, br in enumerate(mp["branch"])
        ],
    }


def ptdf(case):
    ids = [b["id"] for b in case["buses"]]
    pos = {b: i for i, b in enumerate(ids)}
    ref = pos[case["reference_bus"]]
    nb, nl = len(ids), len(case["branches"])
    bf = np.zeros((nl, nb))
    for k, br in enumerate(case["branches"]):
        b = case["base_mva"] / br["x"]
        bf[k, pos[br["from"]]] += b
        bf[k, pos[br["to"]]] -= b
    bbus = np.zeros((nb, nb))
    for k, br in enumerate(case["branches"]):
        i, j = pos[br["from"]], pos[br["to"]]
        row = bf[k]
        bbus[i] += row
        bbus[j] -= row
    keep = [i for i in range(nb) if i != ref]
    a = np.zeros((nl, nb))
    a[:, keep] = bf[:, keep] @ np.linalg.inv(bbus[np.ix_(keep, keep)])
    return a, pos


def dispatch(case, limits):
    a, pos = ptdf(case)
    gens = case["generators"]
    load = np.zeros(len(pos))
    for b in case["buses"]:
        load[pos[b["id"]]] = b["load_mw"]
    g_bus = [pos[g["bus"]] for g in gens]
    cost = [g["offer"] for g in gens]
    rows, rhs = [], []
    for k, lim in limits.items():
        coef = a[k, g_bus]
        base = -a[k] @ load
        rows += [coef, -coef]
        rhs += [lim - base, lim + base]
    res = linprog(cost, A_ub=np.array(rows) if rows else None, b_ub=rhs or None,
                  A_eq=np.ones((1, len(gens))), b_eq=[load.sum()],
                  bounds=[(0, g["capacity_mw"]) for g in gens], method="highs")
    assert res.status == 0, res.message
    inj = -load
    for g, p in zip(g_bus, res.x):
        inj[g] += p
    return res.x, a @ inj


def make_ieee14():
    case = base_case(read_matpower(DATA / "case14.m"), "ieee14")
    offers = {1: 15, 2: 31, 3: 30, 6: 10, 8: 20}
    caps = {1: 330, 2: 140, 3: 100, 6: 100, 8: 100}
    case["generators"] = [
        {"bus": b, "offer": offers[b], "capacity_mw": caps[b], "dp_min": -2.0, "dp_max": 0.1} for b in offers
    ]
    limits = {(2, 3): 50.0, (4, 5): 50.0, (6, 11): 20.0}
    for br in case["branches"]:
        if (br["from"], br["to"]) in limits:
            br["limit_mw"] = limits[(br["from"], br["to"])]
    case["market"] = {"price_floor": -100.0, "price_ceiling": 500.0}
    case["measurement"] = {"noise_std_mw": 1.0, "suspects": "none"}
    case["prior"] = {"std_rad": 0.01}
    return case


def make_ieee118(seed=118, limited=16):
    mp = read_matpower(DATA / "case118.m")
    case = base_case(mp, "ieee118")
    rng = np.random.default_rng(seed)
    gens = [g for g in mp["gen"] if g[7] > 0]
    case["generators"] = [
        {"bus": int(g[0]), "offer": float(rng.choice(np.arange(20, 41))),
         "capacity_mw": float(rng.choice(np.arange(200, 401, 50))), "dp_min": -2.0, "dp_max": 0.1}
        for g in gens
    ]
    _, flows = dispatch(case, {})
    choices = np.array([70.0, 90.0, 110.0])
    picks = []
    for k in np.argsort(-np.abs(flows)):
        f = abs(flows[k])
        above = choices[(choices >= f) & (choices - f <= 8.0)]
        if len(above):
            picks.append((int(k), float(above.min())))
        if len(picks) == limited:
            break
    for k, lim in picks:
        br = case["branches"][k]
        if flows[k] < 0:
            br["from"], br["to"] = br["to"], br["from"]
        br["limit_mw"] = lim
    case["market"] = {"price_floor": -100.0, "price_ceiling": 500.0}
    case["measurement"] = {"noise_std_mw": 1.0, "suspects": "none"}
    case["prior"] = {"std_rad": 0.01}
    return case


def main():
    for name, case in (("ieee14", make_ieee14()), ("ieee118", make_ieee118())):
        path = DATA / f"{name}.json"
        path.write_text(json.dumps(case, indent=2) + "\n")
        lim = sum(1 for b in case["branches"] if "limit_mw" in b)
        print(f"{path.name}: {len(case['buses'])} buses, {len(case['branches'])} branches, {lim} limited")


if __name__ == "__main__":
    sys.exit(main())
