"""A posteriori checks of the cost, value and control error estimates on both fixtures."""
import argparse
from pathlib import Path

import numpy as np

from galerkin_control.convergence import (
    control_error_bound_check,
    j_gap_bound_check,
    value_gap_bound_check,
    write_bound_reports,
)
from galerkin_control.ebm import ebm_error_prefactor
from galerkin_control.fixtures import ebm_sphere, lq_circle


def checks(fx, caveat):
    pr, cost = fx.problem, fx.cost
    out = []
    for N in fx.N_values:
        u = pr.random_control(np.random.default_rng(N))
        vg = value_gap_bound_check(pr, cost, 0.0, None, N, fx.N_ref)
        pref = (ebm_error_prefactor(vg.constants["sup_norm"], cost.target.norm(), cost.mu)
                if caveat else None)
        out += [j_gap_bound_check(pr, cost, u, N, fx.N_ref), vg,
                control_error_bound_check(pr, cost, N, fx.N_ref, caveat=caveat, prefactor=pref)]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/bounds"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, fx, caveat in (("lq", lq_circle(), False), ("ebm", ebm_sphere(), True)):
        reps = checks(fx, caveat)
        write_bound_reports(reps, args.out / f"{name}.csv", args.out / f"{name}.json")
        for r in reps:
            print(f"{name:>3} {r.inequality_id:>13} N={r.N:<3} lhs={r.lhs:.3e} "
                  f"rhs={r.rhs:.3e} {'ok' if r.passed else 'VIOLATED'}")


if __name__ == "__main__":
    main()
