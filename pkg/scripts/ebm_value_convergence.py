"""Value-function gaps of the sphere energy balance model against the L=16 reference."""
import argparse
import json
from pathlib import Path

from galerkin_control.control import evaluate_cost, optimize
from galerkin_control.convergence import value_convergence_sweep
from galerkin_control.fixtures import ebm_sphere


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--n-random", type=int, default=2)
    ap.add_argument("--out", type=Path, default=Path("results/ebm"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    fx = ebm_sphere()
    pr, cost = fx.problem, fx.cost
    rep = value_convergence_sweep(pr, cost, args.t, None, fx.N_values, fx.N_ref,
                                  n_random=args.n_random)
    rep.to_csv(args.out / "value_gaps.csv")
    (args.out / "value_gaps.json").write_text(rep.to_json() + "\n")
    for N, g in zip(fx.N_values, rep.metric("max_value_gap")):
        print(f"N={N:>3}  max_t |v_N - v_ref| = {g:.4e}")

    sol = optimize(pr, fx.N_ref, cost, pr.control(0.0))
    u0 = evaluate_cost(pr, fx.N_ref, pr.control(0.0), cost)
    print(f"reference: uncontrolled cost {u0:.4f}, optimal cost {sol.cost:.4f}, "
          f"mean arctic forcing {sol.control.values.mean():+.3f} W/m^2")
    summary = {"uncontrolled_cost": u0, "optimal_cost": sol.cost,
               "converged": sol.converged, "iterations": sol.iterations}
    (args.out / "reference_solution.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
