"""Regenerates uct_oracle.csv and ns_oracle.csv with 50-digit mpmath arithmetic.

Inputs are doubles printed with repr, so they round-trip exactly.
"""
import csv
import random

from mpmath import mp, mpf, log, sqrt, log1p

mp.dps = 50
rng = random.Random(20240917)

with open("uct_oracle.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["value", "visits", "parent_visits", "alpha_explore", "alpha_unvisited", "expected"])
    for i in range(1000):
        visits = rng.choice([0, 0, 1, 2, 3]) if i % 4 == 0 else rng.randint(0, 5000)
        parent = max(1, visits + rng.randint(0 if visits else 1, 5000)) if i % 7 else rng.randint(1, 3)
        parent = max(parent, visits)
        value = rng.uniform(0.0, max(visits, 1))
        ae = 0.0 if i % 50 == 0 else rng.uniform(0.0, 3.0)
        au = rng.uniform(1e-3, 1.0)
        n = mpf(au) if visits == 0 else mpf(visits)
        expected = mpf(value) / n + mpf(ae) * sqrt(log(mpf(parent)) / n)
        w.writerow([repr(value), visits, parent, repr(ae), repr(au), mp.nstr(expected, 30)])

with open("ns_oracle.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["rmse", "expected"])
    for i in range(1000):
        s = rng.choice([0.0, 1e-12, rng.uniform(0, 1e-6)]) if i % 10 == 0 else 10 ** rng.uniform(-4, 6)
        expected = 1 / (1 + log1p(mpf(s)))
        w.writerow([repr(s), mp.nstr(expected, 30)])
