"""Locate the maximum of the noise-free rl6 surface and write it as a test fixture.

Random search over 10**6 unit-cube points, then Nelder-Mead polishing from the
best few. Integer parameters are rounded and their neighbours checked, so the
recorded argmax is a legal raw configuration.
"""

import argparse
import itertools
import json

import numpy as np
from scipy.optimize import minimize

from egohpo.benchbox import rl6_mean
from egohpo.search_space import ppo_space


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="tests/fixtures/rl6_optimum.json")
    args = ap.parse_args(argv)

    space = ppo_space()
    rng = np.random.default_rng(args.seed)
    best_vals, best_pts = [], []
    for chunk in np.array_split(np.arange(args.n), 100):
        U = rng.random((chunk.size, space.dim))
        vals = np.array([rl6_mean(space.from_unit(u)) for u in U])
        top = np.argsort(vals)[-5:]
        best_vals.extend(vals[top])
        best_pts.extend(U[top])
    order = np.argsort(best_vals)[::-1][:10]
    search_best = float(best_vals[order[0]])

    def neg(u):
        return -rl6_mean(space.from_unit(np.clip(u, 0, 1)))

    polished = []
    for i in order:
        res = minimize(neg, best_pts[i], method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxfev": 20000})
        polished.append((res.fun, np.clip(res.x, 0, 1)))
    _, u_best = min(polished, key=lambda t: t[0])

    raw = space.from_unit(u_best)
    int_idx = [j for j, p in enumerate(space.params) if p.integer]
    candidates = []
    for offs in itertools.product((-1, 0, 1), repeat=len(int_idx)):
        r = raw.copy()
        for j, o in zip(int_idx, offs):
            p = space.params[j]
            r[j] = min(max(r[j] + o, p.lower), p.upper)
        candidates.append((rl6_mean(r), r))
    value, raw = max(candidates, key=lambda t: t[0])

    doc = {
        "argmax": space.as_dict(raw),
        "max_value": value,
        "random_search_best": search_best,
        "n_random": args.n,
        "seed": args.seed,
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
