"""Local predictions on Auto-MPG (UCI auto-mpg.data or a headed CSV)."""
import argparse
import json

from vassgp.experiments import auto_mpg_trial


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=60)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--n-jobs", type=int, default=1)
    args = p.parse_args()
    print(json.dumps(auto_mpg_trial(args.path, seed=args.seed, k=args.k, m=args.m,
                                    n_jobs=args.n_jobs), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
