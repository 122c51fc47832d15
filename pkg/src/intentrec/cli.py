"""Command-line interface: preprocess, train, evaluate, synth, heatmap."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import corpus as corpus_mod
from .corpus import CorpusError
from .evaluation import DEFAULT_KS, evaluate, export_intent_heatmap
from .synth import SynthConfig, generate, write_synthetic
from .trainer import TrainConfig, fit, load_train_checkpoint

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad invocation or bad input data; maps to exit code 2."""


def _echo_config(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump({"command": command, **resolved}, fh, indent=2, sort_keys=True)


def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def cmd_preprocess(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "input file")
    out_dir = Path(args.output)
    raw = corpus_mod.load_interactions(in_path)
    filtered = corpus_mod.five_core_filter(raw, min_count=args.min_count)
    dense = corpus_mod.reindex(filtered)
    final = corpus_mod.split_leave_one_out(dense)
    paths = corpus_mod.write_preprocessed(final, out_dir)
    _echo_config(out_dir, "preprocess", {
        "input": str(in_path), "output": str(out_dir), "min_count": args.min_count,
    })
    stats = final.stats()
    log.info("wrote %s", paths["sequences"])
    print(json.dumps(stats))
    return EXIT_OK


def _resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    resolved = TrainConfig().to_dict()
    if getattr(args, "config", None):
        config_path = _require_file(args.config, "config file")
        with open(config_path, encoding="utf-8") as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file {config_path} is not valid JSON: {exc}")
        if not isinstance(file_values, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        resolved.update(file_values)
    overrides = {k: v for k, v in vars(args).items()
                 if k in TrainConfig().to_dict() or k == "lam"}
    for key, value in overrides.items():
        resolved["lambda" if key == "lam" else key] = value
    try:
        return TrainConfig.from_dict(resolved)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))


def cmd_train(args: argparse.Namespace) -> int:
    data_dir = _require_file(args.data, "data directory")
    out_dir = Path(args.output)
    config = _resolve_train_config(args)
    corpus = corpus_mod.load_preprocessed(data_dir)
    _echo_config(out_dir, "train", {
        "data": str(data_dir), "output": str(out_dir), **config.to_dict(),
    })
    state = fit(corpus, config, output_dir=out_dir)
    print(json.dumps({
        "best_epoch": state.best_epoch,
        "best_val_ndcg20": state.best_metric,
        "epochs_run": state.epoch,
        "checkpoint": str(out_dir / "checkpoint"),
    }))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt_dir = _require_file(args.checkpoint, "checkpoint directory")
    data_dir = _require_file(args.data, "data directory")
    out_dir = Path(args.output) if args.output else None
    try:
        encoder, _, _ = load_train_checkpoint(ckpt_dir)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load checkpoint {ckpt_dir}: {exc}")
    corpus = corpus_mod.load_preprocessed(data_dir)
    if encoder.config.item_count != corpus.item_count:
        raise UsageError(
            f"checkpoint was trained over {encoder.config.item_count} items, "
            f"data directory holds {corpus.item_count}"
        )
    checkpoint_id = _checkpoint_id(ckpt_dir)
    ratios = [0.0] + [r for r in (args.noise_ratio or []) if r != 0.0]
    if out_dir is not None:
        _echo_config(out_dir, "evaluate", {
            "checkpoint": str(ckpt_dir), "data": str(data_dir),
            "split": args.split, "k": list(args.k),
            "noise_ratio": ratios, "seed": args.seed,
        })
    for ratio in ratios:
        rng = np.random.default_rng(args.seed)
        report = evaluate(encoder, corpus, split=args.split, k_list=args.k,
                          noise_ratio=ratio, rng=rng)
        payload = {**report.as_dict(), "checkpoint_id": checkpoint_id, "seed": args.seed}
        print(json.dumps(payload))
        if out_dir is not None:
            name = (f"report_{args.split}.json" if ratio == 0.0
                    else f"report_{args.split}_noise{ratio:g}.json")
            with open(out_dir / name, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
    return EXIT_OK


def _checkpoint_id(ckpt_dir: Path) -> str:
    import hashlib
    manifest = ckpt_dir / "manifest.json"
    digest = hashlib.sha256(manifest.read_bytes()).hexdigest()[:12]
    return f"{ckpt_dir.name}-{digest}"


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.output)
    try:
        config = SynthConfig(
            users=args.users, items=args.items, intents=args.intents,
            seq_len=args.seq_len, pool_size=args.pool_size,
            successors=args.successors, noise=args.noise,
            disjoint=args.disjoint, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    synth = generate(config)
    paths = write_synthetic(synth, out_dir)
    _echo_config(out_dir, "synth", asdict(config))
    print(json.dumps({
        "interactions": str(paths["interactions"]),
        "users": config.users,
        "items": config.items,
        "intents": config.intents,
    }))
    return EXIT_OK


def cmd_heatmap(args: argparse.Namespace) -> int:
    ckpt_dir = _require_file(args.checkpoint, "checkpoint directory")
    data_dir = _require_file(args.data, "data directory")
    out_dir = Path(args.output)
    try:
        encoder, _, _ = load_train_checkpoint(ckpt_dir)
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load checkpoint {ckpt_dir}: {exc}")
    corpus = corpus_mod.load_preprocessed(data_dir)
    by_user = {seq.user_id: seq for seq in corpus.sequences}
    _echo_config(out_dir, "heatmap", {
        "checkpoint": str(ckpt_dir), "data": str(data_dir), "user": list(args.user),
    })
    for user in args.user:
        seq = by_user.get(user)
        if seq is None:
            raise UsageError(f"user {user} not present in {data_dir}")
        path = out_dir / f"heatmap_user{user}.csv"
        gram = export_intent_heatmap(encoder, seq.items, path)
        print(json.dumps({"user": user, "path": str(path), "size": gram.shape[0]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentrec",
        description="Intent-aware sequential recommender: data preparation, "
                    "training, and full-ranking evaluation.",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter, re-index, and split a raw interaction file")
    p.add_argument("--input", required=True, help="raw file, one 'user item...' line per user")
    p.add_argument("--output", required=True, help="directory for sequences/id map/stats")
    p.add_argument("--min-count", type=int, default=5,
                   help="minimum user and item interaction count (default 5)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train an encoder on a preprocessed directory")
    p.add_argument("--data", required=True, help="preprocessed data directory")
    p.add_argument("--output", required=True, help="run directory for logs and checkpoint")
    p.add_argument("--config", help="JSON file with TrainConfig keys; flags win")
    sup = argparse.SUPPRESS
    p.add_argument("--d", type=int, default=sup, help="hidden width (default 64)")
    p.add_argument("--n", type=int, default=sup, help="max sequence length (default 50)")
    p.add_argument("--blocks", type=int, default=sup, help="attention blocks (default 2)")
    p.add_argument("--heads", type=int, default=sup, help="attention heads (default 2)")
    p.add_argument("--dropout", type=float, default=sup, help="dropout rate (default 0.5)")
    p.add_argument("--ffn-dim", dest="ffn_dim", type=int, default=sup,
                   help="feed-forward inner width (default d)")
    p.add_argument("--encoder", dest="encoder_kind", choices=("attention", "recurrent"),
                   default=sup, help="backbone variant (default attention)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=sup,
                   help="minibatch size (default 256)")
    p.add_argument("--lr", type=float, default=sup, help="Adam learning rate (default 1e-3)")
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=sup)
    p.add_argument("--grad-clip", dest="grad_clip", type=float, default=sup,
                   help="max gradient norm (default off)")
    p.add_argument("--lambda", dest="lam", type=float, default=sup,
                   help="coarse contrastive weight (default 0.3)")
    p.add_argument("--beta", type=float, default=sup,
                   help="fine contrastive weight (default 0.1)")
    p.add_argument("--temperature", type=float, default=sup,
                   help="contrastive temperature (default 1.0)")
    p.add_argument("--clusters", dest="num_clusters", type=int, default=sup,
                   help="number of intent prototypes (default 256)")
    p.add_argument("--cluster-iters", dest="cluster_iters", type=int, default=sup,
                   help="k-means iterations per refresh (default 20)")
    p.add_argument("--cluster-normalize", dest="cluster_normalize",
                   action="store_true", default=sup,
                   help="L2-normalize representations before clustering")
    p.add_argument("--reduction", dest="contrastive_reduction",
                   choices=("mean", "sum"), default=sup,
                   help="contrastive batch reduction (default mean)")
    p.add_argument("--ficl-joint-pool", dest="ficl_joint_pool", action="store_true",
                   default=sup, help="share one negative pool across both fine-grain terms")
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=sup,
                   help="epoch cap (default 300)")
    p.add_argument("--patience", type=int, default=sup,
                   help="early-stop patience on validation NDCG@20 (default 10)")
    p.add_argument("--seed", type=int, default=sup, help="run seed (default 42)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="full-ranking metrics for a saved checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True, help="preprocessed data directory")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--k", type=int, nargs="+", default=list(DEFAULT_KS),
                   help="metric cut-offs (default 5 10 20)")
    p.add_argument("--noise-ratio", dest="noise_ratio", type=float, nargs="*",
                   help="extra noise-injection ratios; a clean run is always included")
    p.add_argument("--seed", type=int, default=0, help="noise-injection seed")
    p.add_argument("--output", help="directory for report JSON files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a planted-intent synthetic corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--intents", type=int, default=4)
    p.add_argument("--seq-len", dest="seq_len", type=int, default=20)
    p.add_argument("--pool-size", dest="pool_size", type=int, default=None,
                   help="items per intent pool (default items // intents)")
    p.add_argument("--successors", type=int, default=5,
                   help="chain out-degree per item (default 5)")
    p.add_argument("--noise", type=float, default=0.1,
                   help="per-step probability of a uniform random item (default 0.1)")
    p.add_argument("--disjoint", action="store_true",
                   help="make intent item pools pairwise disjoint")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("heatmap", help="export position-similarity heat maps for users")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--user", type=int, nargs="+", required=True,
                   help="user id(s) from the preprocessed data")
    p.add_argument("--output", required=True, help="directory for CSV files")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, CorpusError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
