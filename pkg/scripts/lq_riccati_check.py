"""Projected gradient versus the Riccati solution on the linear-quadratic circle problem."""
import argparse

from galerkin_control.control import galerkin_lq_data, lq_riccati_oracle, optimize
from galerkin_control.fixtures import lq_circle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--n-intervals", type=int, default=100)
    args = ap.parse_args()

    fx = lq_circle(n_intervals=args.n_intervals)
    pr, cost = fx.problem, fx.cost
    print(f"{'N':>4} {'J projected grad':>18} {'J Riccati':>14} {'rel diff':>10} {'iters':>6}")
    for N in args.N:
        A, B, Q, R, d, f, const = galerkin_lq_data(pr, N, cost)
        ric = lq_riccati_oracle(A, B, Q, R, d, pr.horizon, 1e-3, f)
        J_ric = ric.value(pr.initial.coeffs[:N]) + const * pr.horizon
        sol = optimize(pr, N, cost, pr.control(0.0))
        print(f"{N:>4} {sol.cost:18.10f} {J_ric:14.10f} "
              f"{abs(sol.cost - J_ric) / J_ric:10.2e} {sol.iterations:>6}")


if __name__ == "__main__":
    main()
