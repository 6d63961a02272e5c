"""How fast ||L_N phi - L phi|| decays for phi_k = (1+k)^-4 on the three geometries."""
import argparse

import numpy as np

from galerkin_control.bases import build_circle_basis, build_sphere_basis, build_zonal_sl_basis


def tail(lam, phi, N):
    return float(np.linalg.norm(lam[N:] * phi[N:]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--threshold", type=float, default=1e-6)
    args = ap.parse_args()
    bases = {"sphere L=40 D=1": build_sphere_basis(40, 1.0),
             "circle K=400 D=1": build_circle_basis(400, 1.0),
             "zonal K=400 D=1": build_zonal_sl_basis(1.0, 400, 4000)}
    for name, b in bases.items():
        lam = b.eigenvalues
        phi = (1.0 + np.arange(b.size)) ** -4.0
        errs = [tail(lam, phi, N) for N in range(1, b.size)]
        hit = next((N for N, e in enumerate(errs, 1) if e < args.threshold), None)
        print(f"{name:>18}: N=64 -> {errs[63]:.3e}; below {args.threshold:g} from N={hit}")


if __name__ == "__main__":
    main()
