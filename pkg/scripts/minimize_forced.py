"""Minimize the collision-aware action for a family of forcing amplitudes.

For each amplitude the forcing is U(t, x) = a * (cos t, sin 2t) . x.  The
script prints the best action, whether the minimizer touched a collision and
the Euler-Lagrange residual of the returned loop.

    python3 scripts/minimize_forced.py --amplitudes 0 0.02 0.05 --grid 256
"""

import argparse
import math

from forced_kepler.minimizer import MinimizeConfig, euler_lagrange_residual, minimize
from forced_kepler.potentials import fourier_forcing, linear_potential


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--amplitudes", type=float, nargs="+", default=[0.0, 0.02, 0.05, 0.1])
    parser.add_argument("--grid", type=int, default=256)
    parser.add_argument("--starts", type=int, default=8)
    parser.add_argument("--winding", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    T = 2 * math.pi
    print(f"{'amplitude':>10} {'action':>14} {'collided':>9} {'EL residual':>12}")
    for a in args.amplitudes:
        U = linear_potential(fourier_forcing(T, cos=[a, 0.0], sin=[0.0, a]))
        cfg = MinimizeConfig(winding=args.winding, N=args.grid, starts=args.starts, seed=args.seed)
        res = minimize(U, cfg)
        el = float("nan") if res.collided else euler_lagrange_residual(res.path, U)
        print(f"{a:10.4f} {res.action.total:14.9f} {str(res.collided):>9} {el:12.3e}")


if __name__ == "__main__":
    main()
