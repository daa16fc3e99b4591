"""Stage 1 versus stage 2 predictions when uniform noise columns are appended."""
import numpy as np

from _common import parser, run_seeds
from vassgp.experiments import irrelevant_trial


def main():
    p = parser(__doc__)
    p.add_argument("--k", type=int, default=60)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--n-test", type=int, default=25)
    p.add_argument("--n-jobs", type=int, default=1)
    args = p.parse_args()
    rows = run_seeds(irrelevant_trial, args.seeds, args.out, k=args.k, m=args.m,
                     n_test=args.n_test, n_jobs=args.n_jobs)
    s1 = np.mean([r["stage1_mnlp"] for r in rows])
    s2 = np.mean([r["stage2_mnlp"] for r in rows])
    print(f"mean MNLP: stage 1 {s1:.4f}, stage 2 {s2:.4f}")


if __name__ == "__main__":
    main()
