#!/usr/bin/env python3
"""Train the three modes on the synthetic task over several seeds and print
the comparison table (test EM/F1, top-1 ranker recall, oracle ceiling)."""

import argparse
import json
import logging
import sys

from rankread.experiment import run_experiment


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    parser.add_argument("--sr-epochs", type=int, default=None)
    parser.add_argument("--sr2-epochs", type=int, default=None)
    parser.add_argument("--r3-epochs", type=int, default=None)
    parser.add_argument("--out", default=None, help="write the summary JSON here")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    seeds = tuple(int(s) for s in args.seeds.split(","))
    result = run_experiment(seeds=seeds, sr_epochs=args.sr_epochs,
                            sr2_epochs=args.sr2_epochs, r3_epochs=args.r3_epochs)
    s = result["summary"]

    print("\nmode   test EM   test F1   top-1 recall")
    print(f"ir        -         -        {s['ir_recall'][1]:.3f}")
    for mode in ("sr", "sr2", "r3"):
        rec = f"{s['recall1'][mode]:.3f}" if mode in s["recall1"] else "  -  "
        print(f"{mode:<6} {s['em'][mode]:7.1f}  {s['f1'][mode]:7.1f}       {rec}")
    print("\noracle re-ranking ceiling (last seed's reader-only model):")
    for k, vals in result["oracle"].items():
        print(f"  top-{k}: F1 {vals['f1']:.1f}  EM {vals['em']:.1f}")
    print(f"\nelapsed: {s['elapsed_seconds']:.0f}s over seeds {list(seeds)}")

    if args.out:
        payload = {"summary": {k: v for k, v in s.items()},
                   "oracle": result["oracle"],
                   "per_seed": [{k: v for k, v in r.items() if k != "models"}
                                for r in result["per_seed"]]}
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=1)
        print(f"summary written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
