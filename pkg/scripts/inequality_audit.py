"""Deficits of the Stam, Cramer-Rao, additivity and convexity statements on seeded families.

Prints the smallest deficit per statement and parameter set; a negative value
beyond the tolerance would be a counterexample.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from qfisher import inequalities as ineq
from qfisher import qgaussian as qg

TRIPLES = [(1, 2.0, 2.0), (1, 3.0, 1.5), (1, 1.5, 1.0), (2, 2.0, 1.5), (3, 2.0, 2.0), (2, 3.0, 0.8)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/inequalities.json"))
    args = ap.parse_args()
    out = {}
    for n, alpha, q in TRIPLES:
        params = qg.QGaussianParams(n, alpha, q, 1.0)
        family = ineq.perturbed_family(params, qg.natural_grid(params, 4096), args.trials, args.seed)
        for fn, variant in [(ineq.stam_deficit, "phi"), (ineq.stam_deficit, "I"),
                            (ineq.cramer_rao_deficit, "phi"), (ineq.cramer_rao_deficit, "I")]:
            key = f"{fn.__name__}_{variant} n={n} alpha={alpha:g} q={q:g}"
            out[key] = min(fn(f, params, variant).deficit for f in family)
    for q in (0.8, 1.0, 1.5, 2.0):
        pairs = ineq.additivity_pairs(q, 2.0, args.trials // 5, args.seed)
        reps = [ineq.additivity_bound(fx, fy, q, 2.0) for fx, fy in pairs]
        out[f"additivity q={q:g}"] = min(r.deficit for r in reps)
        if q < 1:
            out[f"additivity simplified q={q:g} (unequal widths)"] = min(r.extras["simplified_deficit"] for r in reps)
    for beta in (1.5, 2.0, 3.0):
        for q in np.linspace(*ineq.convexity_window(beta), 4):
            probes = ineq.convexity_probes(float(q), beta, args.trials // 5, args.seed)
            out[f"convexity beta={beta:g} q={q:.4g}"] = min(
                ineq.convexity_probe(f, g, mix, float(q), beta).deficit for f, g, mix in probes)
    for key, value in out.items():
        print(f"{value:+.3e}  {key}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
