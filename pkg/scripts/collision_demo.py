"""Blow-up and surgery on the parabolic bounce through the origin.

Builds the zeta0 bounce with incoming direction x_minus and outgoing
direction x_plus, reports the blow-up profile for a decreasing sequence of
window sizes, then performs surgery and prints the action gaps of the
replacement candidates against their predicted limits.

    python3 scripts/collision_demo.py --angle 90 --grid 2048
"""

import argparse
import math

from forced_kepler.collision_analysis import blow_up, certify, default_deltas, detect_collisions, surgery
from forced_kepler.kepler_arcs import PHI0, S0
from forced_kepler.potentials import zero_potential
from forced_kepler.synthetic import zeta0_bounce_path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--angle", type=float, default=90.0, help="angle between x_minus and x_plus in degrees")
    parser.add_argument("--grid", type=int, default=2048)
    parser.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = parser.parse_args()

    theta = math.radians(args.angle)
    path, _ = zeta0_bounce_path(n=args.grid, x_minus=(1.0, 0.0), x_plus=(math.cos(theta), math.sin(theta)))
    U = zero_potential(path.period)
    event = detect_collisions(path)[0]
    print(f"collision at t = {event.t0:.9f}")

    print(f"\nblow-up (sigma limit {S0:.9f}, rescaled action limit {PHI0:.9f})")
    for p in blow_up(path, event, default_deltas(path, event)):
        print(f"  delta {p.delta:9.5f}  sigma- {p.sigma_minus:.9f}  sigma+ {p.sigma_plus:.9f}  A/sqrt(delta) {p.rescaled_action:.9f}")

    print("\nsurgery")
    for d in args.deltas:
        _, _, rep = surgery(path, U, event, d)
        print(f"  delta {d:5.3f}  window action {rep.original_window_action:.9f}")
        for c in rep.candidates:
            print(
                f"    {c.label:9s} action {c.window_action:.9f}  gap/sqrt(delta) {rep.rescaled_gap(c.label):.6f}"
                f"  predicted {rep.predicted_gap(c.label):.6f}"
            )

    print()
    print("\n".join(certify(path, U).as_lines()))


if __name__ == "__main__":
    main()
