"""Iterations to convergence: plain unit-step cycles versus adaptive step sizes."""
import numpy as np

from _common import parser, run_seeds
from vassgp.experiments import acceleration_trial


def main():
    p = parser(__doc__)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--m", type=int, default=25)
    args = p.parse_args()
    rows = run_seeds(acceleration_trial, args.seeds, args.out, n=args.n, d=args.d, m=args.m)
    plain = np.median([r["iter_plain"] for r in rows])
    fast = np.median([r["iter_adaptive"] for r in rows])
    gaps = [abs(r["lb_adaptive"] - r["lb_plain"]) / abs(r["lb_plain"]) for r in rows]
    print(f"median iterations: plain {plain:g}, adaptive {fast:g}, ratio {fast / plain:.3f}")
    print(f"relative bound gap: max {max(gaps):.2e}, seeds within 1e-3: "
          f"{sum(g <= 1e-3 for g in gaps)}/{len(gaps)}")


if __name__ == "__main__":
    main()
