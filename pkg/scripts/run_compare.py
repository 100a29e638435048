"""Training rows each method needs to reach the target R2 on the phase-shifter family."""

import argparse
import logging

from enetmodel import compare as cmp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--methods", default=",".join(cmp.METHODS))
    ap.add_argument("--target-r2", type=float, default=0.90)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default="compare.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = cmp.CompareConfig(methods=tuple(args.methods.split(",")), target_r2=args.target_r2,
                            seed=args.seed)
    results = cmp.run_compare(cfg=cfg)
    cmp.write_table(args.csv, results, cfg.pois)
    for r in results:
        r2 = ", ".join(f"{v:.3f}" for v in r.r2)
        print(f"{r.method:11s} reached={r.reached!s:5s} rows={r.oracle_calls:6d}  R2 [{r2}]  "
              f"{r.detail}  {r.seconds:.0f} s")


if __name__ == "__main__":
    main()
