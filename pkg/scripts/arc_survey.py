"""Survey the direct and indirect Kepler arcs over endpoint separations.

Prints, for each separation angle, the action of both arcs and the margin
below phi0 = 4*sqrt(2).  Optionally writes the table to CSV.

    python3 scripts/arc_survey.py --count 35 --csv arcs.csv
"""

import argparse
import csv
import math

import numpy as np

from forced_kepler.kepler_arcs import PHI0, concatenation_winding, solve_arcs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--count", type=int, default=35, help="number of separation angles in [5, 175] degrees")
    parser.add_argument("--csv", help="optional output CSV path")
    args = parser.parse_args()

    rows = []
    for deg in np.linspace(5.0, 175.0, args.count):
        theta = math.radians(deg)
        direct, indirect = solve_arcs(np.array([1.0, 0.0]), np.array([math.cos(theta), math.sin(theta)]))
        rows.append(
            (
                deg,
                direct.action,
                indirect.action,
                PHI0 - max(direct.action, indirect.action),
                concatenation_winding(direct, indirect),
            )
        )

    header = ("separation_deg", "direct_action", "indirect_action", "margin", "winding")
    print("{:>14} {:>14} {:>16} {:>10} {:>8}".format(*header))
    for r in rows:
        print(f"{r[0]:14.2f} {r[1]:14.9f} {r[2]:16.9f} {r[3]:10.6f} {r[4]:8d}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


if __name__ == "__main__":
    main()
