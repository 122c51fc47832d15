#!/usr/bin/env python3
"""Noise-robustness sweep on the planted-intent corpus.

Trains the full objective and the backbone once per seed, then corrupts the
evaluation windows with random foreign items at increasing ratios and tracks
how NDCG@20 degrades for each arm. Every noise draw is seeded, and both arms
see the same corrupted windows, so the comparison is paired. The reported
number per ratio is the mean over --draws corruption draws.

Usage:
    python3 scripts/noise_robustness.py
    python3 scripts/noise_robustness.py --ratios 0.1 0.3 0.5 --draws 20
"""

import argparse
import json
from pathlib import Path

import numpy as np

from intentrec.corpus import reindex, split_leave_one_out
from intentrec.evaluation import evaluate
from intentrec.synth import SynthConfig, generate
from intentrec.trainer import TrainConfig, fit


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ratios", type=float, nargs="+",
                   default=[0.05, 0.1, 0.15, 0.2])
    p.add_argument("--draws", type=int, default=10,
                   help="seeded corruption draws averaged per ratio")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--corpus-seed", type=int, default=3)
    p.add_argument("--lam", type=float, default=0.3)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--out", type=Path, default=None)
    return p.parse_args()


def mean_ndcg(encoder, corpus, ratio, seed, draws):
    if ratio == 0.0:
        return evaluate(encoder, corpus, split="test", k_list=(20,)).ndcg[20]
    values = [
        evaluate(encoder, corpus, split="test", k_list=(20,),
                 noise_ratio=ratio,
                 rng=np.random.default_rng([seed, draw])).ndcg[20]
        for draw in range(draws)
    ]
    return float(np.mean(values))


def main():
    args = parse_args()
    synth = SynthConfig(users=200, items=500, intents=4, seq_len=10,
                        pool_size=250, successors=3, noise=0.2,
                        disjoint=False, seed=args.corpus_seed)
    corpus = split_leave_one_out(reindex(generate(synth).to_corpus()))

    ratios = [0.0] + sorted(args.ratios)
    results = []
    for seed in args.seeds:
        for arm, (lam, beta) in (("full", (args.lam, args.beta)),
                                 ("backbone", (0.0, 0.0))):
            config = TrainConfig(d=32, n=10, blocks=1, heads=1, dropout=0.5,
                                 batch_size=64, lr=2e-3, lam=lam, beta=beta,
                                 temperature=8.0, num_clusters=8,
                                 cluster_iters=10, max_epochs=300,
                                 patience=40, seed=seed)
            state = fit(corpus, config)
            curve = {f"{r:g}": mean_ndcg(state.encoder, corpus, r, seed,
                                         args.draws)
                     for r in ratios}
            clean = curve["0"]
            drops = {r: (clean - v) / clean for r, v in curve.items()
                     if r != "0"}
            results.append({"seed": seed, "arm": arm, "ndcg20": curve,
                            "relative_drop": drops})
            shown = " ".join(f"{r}:{v:.4f}" for r, v in curve.items())
            print(f"seed {seed} {arm:8s} {shown}")

    for ratio in ratios[1:]:
        key = f"{ratio:g}"
        print(f"\nratio {key}: relative NDCG@20 drop per seed")
        for seed in args.seeds:
            pair = {r["arm"]: r["relative_drop"][key]
                    for r in results if r["seed"] == seed}
            flag = "full" if pair["full"] <= pair["backbone"] else "backbone"
            print(f"  seed {seed}: full {pair['full']:.3f} vs backbone "
                  f"{pair['backbone']:.3f} ({flag} more robust)")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "noise_robustness.json").write_text(
            json.dumps({"ratios": ratios, "draws": args.draws,
                        "results": results}, indent=2))
        print(f"\nwrote {args.out / 'noise_robustness.json'}")


if __name__ == "__main__":
    main()
