"""Global fit versus adaptive-neighbourhood local fits on a piecewise surface."""
from _common import parser, run_seeds
from vassgp.experiments import nonstationary_trial


def main():
    p = parser(__doc__)
    p.add_argument("--k", type=int, default=60)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--n-jobs", type=int, default=1)
    args = p.parse_args()
    rows = run_seeds(nonstationary_trial, args.seeds, args.out, k=args.k, m=args.m,
                     n_test=args.n_test, n_jobs=args.n_jobs)
    print("seed  global_mnlp  local_mnlp  global_nmse  local_nmse")
    for r in rows:
        print(f"{r['seed']:4d}  {r['global_mnlp']:11.4f}  {r['local_mnlp']:10.4f}  "
              f"{r['global_nmse']:11.4f}  {r['local_nmse']:10.4f}")
    wins = sum(r["local_mnlp"] < r["global_mnlp"] for r in rows)
    print(f"local MNLP below global on {wins}/{len(rows)} seeds")


if __name__ == "__main__":
    main()
