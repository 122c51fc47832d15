#!/usr/bin/env python3
"""Full benchmark on a real interaction dataset (long-running).

Preprocesses a raw 'user item_1 ... item_L' file (5-core filter, reindex,
leave-one-out split), then trains the full objective and the backbone with
the large-scale defaults for up to --max-epochs epochs each and reports test
HR/NDCG at 5, 10, and 20 plus the relative NDCG@20 gain. Expect this to run
for hours on CPU; it exists to reproduce the headline comparison, not for
day-to-day iteration.

Usage:
    python3 scripts/full_benchmark.py --data data/beauty.txt --out runs/beauty
"""

import argparse
import json
import time
from pathlib import Path

from intentrec.corpus import (five_core_filter, load_interactions, reindex,
                              split_leave_one_out)
from intentrec.evaluation import evaluate
from intentrec.trainer import TrainConfig, fit


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", type=Path, required=True,
                   help="raw interaction file, one user per line")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--lam", type=float, default=0.3)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--clusters", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    return p.parse_args()


def main():
    args = parse_args()
    corpus = split_leave_one_out(
        reindex(five_core_filter(load_interactions(args.data),
                                 min_count=args.min_count)))
    stats = corpus.stats()
    print(f"corpus: {stats['users']} users, {stats['items']} items, "
          f"{stats['actions']} actions")

    results = {}
    for arm, (lam, beta) in (("full", (args.lam, args.beta)),
                             ("backbone", (0.0, 0.0))):
        config = TrainConfig(lam=lam, beta=beta, num_clusters=args.clusters,
                             max_epochs=args.max_epochs, seed=args.seed)
        run_dir = args.out / arm if args.out else None
        started = time.perf_counter()
        state = fit(corpus, config, output_dir=run_dir)
        report = evaluate(state.encoder, corpus, split="test",
                          k_list=(5, 10, 20))
        results[arm] = {"hr": report.hr, "ndcg": report.ndcg,
                        "best_epoch": state.best_epoch,
                        "seconds": time.perf_counter() - started}
        print(f"{arm}: " + " ".join(
            f"HR@{k} {report.hr[k]:.4f} NDCG@{k} {report.ndcg[k]:.4f}"
            for k in (5, 10, 20)))

    gain = (results["full"]["ndcg"][20] - results["backbone"]["ndcg"][20]) \
        / results["backbone"]["ndcg"][20]
    print(f"\nrelative NDCG@20 gain: {gain:+.1%}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        payload = {"stats": stats, "results": {
            arm: {"hr": {str(k): v for k, v in r["hr"].items()},
                  "ndcg": {str(k): v for k, v in r["ndcg"].items()},
                  "best_epoch": r["best_epoch"], "seconds": r["seconds"]}
            for arm, r in results.items()}, "relative_ndcg20_gain": gain}
        (args.out / "benchmark.json").write_text(json.dumps(payload, indent=2))
        print(f"wrote {args.out / 'benchmark.json'}")


if __name__ == "__main__":
    main()
