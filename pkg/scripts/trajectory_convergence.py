"""Galerkin trajectory error for the cubic circle problem, fixed and sampled controls."""
import argparse
from pathlib import Path

from galerkin_control.convergence import trajectory_convergence_sweep, uniform_convergence_estimate
from galerkin_control.fixtures import cubic_circle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/trajectory"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    fx = cubic_circle()
    pr = fx.problem
    rep = trajectory_convergence_sweep(pr, pr.control(0.5), fx.N_values, fx.N_ref)
    rep.to_csv(args.out / "fixed_control.csv")
    uni = uniform_convergence_estimate(pr, fx.N_values, fx.N_ref, args.samples, args.seed,
                                       dt=2e-3)
    uni.to_csv(args.out / "sampled_controls.csv")

    print(f"{'N':>4} {'sup err (u=0.5)':>16} {'max sup err':>14} {'max tail':>12}")
    for i, N in enumerate(fx.N_values):
        print(f"{N:>4} {rep.metric('sup_error')[i]:16.4e} "
              f"{uni.metric('max_sup_error')[i]:14.4e} "
              f"{uni.metric('max_sup_residual_energy')[i]:12.4e}")


if __name__ == "__main__":
    main()
