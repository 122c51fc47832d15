"""Joint training: per-epoch prototype refresh, mini-batch updates, early stopping."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .corpus import (Corpus, CorpusError, TargetIndex, TrainingInstance,
                     build_target_index, pad_window, sample_positive,
                     segment_corpus)
from .encoder import (EncoderConfig, SequenceEncoder, build_encoder,
                      load_checkpoint, save_checkpoint)
from .evaluation import evaluate
from .intent import PrototypeSet, fit_prototypes, load_prototypes, save_prototypes
from .losses import LossBreakdown, cicl_loss, ficl_loss, rec_loss, total_loss

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """The objective produced NaN or inf; training cannot continue."""


@dataclass
class TrainConfig:
    d: int = 64
    n: int = 50
    blocks: int = 2
    heads: int = 2
    dropout: float = 0.5
    ffn_dim: Optional[int] = None
    encoder_kind: str = "attention"
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.0
    grad_clip: Optional[float] = None
    lam: float = 0.3
    beta: float = 0.1
    temperature: float = 1.0
    num_clusters: int = 256
    cluster_iters: int = 20
    cluster_normalize: bool = False
    contrastive_reduction: str = "mean"
    ficl_joint_pool: bool = False
    max_epochs: int = 300
    patience: int = 10
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if min(self.batch_size, self.max_epochs, self.patience,
               self.num_clusters, self.cluster_iters) < 1:
            raise ValueError("batch_size, max_epochs, patience, num_clusters, and "
                             "cluster_iters must all be >= 1")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.contrastive_reduction not in ("mean", "sum"):
            raise ValueError(
                f"contrastive_reduction must be 'mean' or 'sum', got {self.contrastive_reduction!r}"
            )

    def encoder_config(self, item_count: int) -> EncoderConfig:
        return EncoderConfig(
            item_count=item_count, d=self.d, n=self.n, blocks=self.blocks,
            heads=self.heads, dropout=self.dropout,
            encoder_kind=self.encoder_kind, ffn_dim=self.ffn_dim,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)


@dataclass
class TrainState:
    encoder: SequenceEncoder
    config: TrainConfig
    prototypes: Optional[PrototypeSet] = None
    epoch: int = 0
    best_metric: float = float("-inf")
    best_epoch: int = 0
    epochs_since_best: int = 0
    history: List[dict] = field(default_factory=list)
    optimizer: Optional[torch.optim.Optimizer] = None


def _pad_all(instances: List[TrainingInstance], n: int) -> torch.Tensor:
    return torch.tensor([pad_window(inst.input, n) for inst in instances],
                        dtype=torch.long)


def encode_all_intents(encoder: SequenceEncoder, windows: torch.Tensor,
                       batch_size: int) -> np.ndarray:
    """Eval-mode intent vectors for every window, in the given order."""
    chunks = []
    with torch.no_grad():
        for lo in range(0, windows.size(0), batch_size):
            repr_ = encoder.encode_ids(windows[lo:lo + batch_size], train_mode=False)
            chunks.append(repr_.intent.cpu().numpy().astype(np.float64))
    return np.concatenate(chunks, axis=0)


def refresh_prototypes(state: TrainState, instances: List[TrainingInstance],
                       windows: Optional[torch.Tensor] = None) -> PrototypeSet:
    """Re-cluster all training-instance intents with the current encoder weights.

    Runs once per epoch before any gradient step, so prototypes stay constant
    within an epoch.
    """
    if not instances:
        raise ValueError("cannot fit prototypes without training instances")
    cfg = state.config
    if windows is None:
        windows = _pad_all(instances, cfg.n)
    reprs = encode_all_intents(state.encoder, windows, cfg.batch_size)
    k = cfg.num_clusters
    if k > len(instances):
        log.warning("num_clusters=%d exceeds %d instances; clamping", k, len(instances))
        k = len(instances)
    return fit_prototypes(reprs, k, max_iters=cfg.cluster_iters, seed=cfg.seed,
                          normalize=cfg.cluster_normalize)


def train_epoch(state: TrainState, instances: List[TrainingInstance],
                index: TargetIndex, windows: torch.Tensor,
                targets: torch.Tensor, epoch: int) -> LossBreakdown:
    """One shuffled pass over every instance; returns epoch-mean loss components."""
    cfg = state.config
    encoder = state.encoder
    optimizer = state.optimizer
    count = len(instances)
    order = np.random.default_rng([cfg.seed, epoch, 0]).permutation(count)
    pair_rng = np.random.default_rng([cfg.seed, epoch, 1])
    need_pair = cfg.lam > 0 or cfg.beta > 0
    if cfg.beta > 0 and (state.prototypes is None or not state.prototypes.is_fitted()):
        raise ValueError("beta > 0 requires fitted prototypes before the epoch starts")

    sums = {"rec": 0.0, "cicl": 0.0, "ficl": 0.0}
    for lo in range(0, count, cfg.batch_size):
        rows = torch.from_numpy(order[lo:lo + cfg.batch_size])
        x1 = windows[rows]
        batch_targets = targets[rows]
        h1 = encoder.encode_ids(x1, train_mode=True).intent
        loss_rec = rec_loss(h1, encoder.item_emb.weight, batch_targets)
        loss = loss_rec
        batch_cicl = 0.0
        batch_ficl = 0.0
        if need_pair:
            pair_rows = [sample_positive(index, instances[i], pair_rng).instance_id
                         for i in rows.tolist()]
            x2 = windows[torch.tensor(pair_rows, dtype=torch.long)]
            h2 = encoder.encode_ids(x2, train_mode=True).intent
            if cfg.lam > 0:
                coarse = cicl_loss(h1, h2, batch_targets, cfg.temperature,
                                   cfg.contrastive_reduction)
                loss = loss + cfg.lam * coarse
                batch_cicl = float(coarse.detach())
            if cfg.beta > 0:
                fine, _, _ = ficl_loss(h1, h2, state.prototypes, cfg.temperature,
                                       cfg.contrastive_reduction, cfg.ficl_joint_pool)
                loss = loss + cfg.beta * fine
                batch_ficl = float(fine.detach())
        if not bool(torch.isfinite(loss)):
            raise NonFiniteLossError(
                f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}"
            )
        optimizer.zero_grad()
        loss.backward()
        if cfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(encoder.parameters(), cfg.grad_clip)
        optimizer.step()
        size = rows.numel()
        sums["rec"] += float(loss_rec.detach()) * size
        sums["cicl"] += batch_cicl * size
        sums["ficl"] += batch_ficl * size
    return total_loss(sums["rec"] / count, sums["cicl"] / count,
                      sums["ficl"] / count, cfg.lam, cfg.beta)


def fit(corpus: Corpus, config: TrainConfig,
        output_dir=None) -> TrainState:
    """Train to convergence on validation NDCG@20 and return the best state.

    Each epoch refreshes prototypes (only when ``beta > 0``), takes one Adam
    pass over all segmented subsequences, evaluates on the validation split,
    and appends a JSON line to ``metrics.jsonl`` when an output directory is
    given. Training stops after ``patience`` epochs without improvement; the
    best-epoch weights are restored before returning.
    """
    torch.manual_seed(config.seed)
    encoder = build_encoder(config.encoder_config(corpus.item_count), seed=config.seed)
    instances = segment_corpus(corpus, config.n)
    if not instances:
        raise CorpusError("corpus yields no training instances")
    index = build_target_index(instances)
    windows = _pad_all(instances, config.n)
    targets = torch.tensor([inst.target for inst in instances], dtype=torch.long)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.lr,
                                 betas=(0.9, 0.999), eps=1e-8,
                                 weight_decay=config.weight_decay)
    state = TrainState(encoder=encoder, config=config, optimizer=optimizer)

    out_dir = Path(output_dir) if output_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "metrics.jsonl", "w", encoding="utf-8")
    best_weights = None
    best_prototypes = None
    try:
        for epoch in range(1, config.max_epochs + 1):
            started = time.perf_counter()
            state.epoch = epoch
            if config.beta > 0:
                state.prototypes = refresh_prototypes(state, instances, windows=windows)
            try:
                breakdown = train_epoch(state, instances, index, windows, targets, epoch)
            except NonFiniteLossError:
                if out_dir is not None:
                    save_train_checkpoint(out_dir / f"diagnostic_epoch{epoch}", state)
                raise
            report = evaluate(encoder, corpus, split="valid", k_list=(20,),
                              batch_size=config.batch_size)
            entry = {
                "epoch": epoch,
                "rec": breakdown.rec,
                "cicl": breakdown.cicl,
                "ficl": breakdown.ficl,
                "total": breakdown.total,
                "val_hr20": report.hr[20],
                "val_ndcg20": report.ndcg[20],
                "seconds": time.perf_counter() - started,
            }
            state.history.append(entry)
            if log_fh is not None:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            log.info("epoch %d: total %.4f rec %.4f val_ndcg20 %.4f",
                     epoch, breakdown.total, breakdown.rec, report.ndcg[20])
            if report.ndcg[20] > state.best_metric:
                state.best_metric = report.ndcg[20]
                state.best_epoch = epoch
                state.epochs_since_best = 0
                best_weights = copy.deepcopy(encoder.state_dict())
                best_prototypes = state.prototypes
            else:
                state.epochs_since_best += 1
                if state.epochs_since_best >= config.patience:
                    log.info("no improvement for %d epoch(s); stopping at epoch %d",
                             config.patience, epoch)
                    break
    finally:
        if log_fh is not None:
            log_fh.close()
    if best_weights is not None:
        encoder.load_state_dict(best_weights)
        state.prototypes = best_prototypes
    if out_dir is not None:
        save_train_checkpoint(out_dir / "checkpoint", state)
    return state


def save_train_checkpoint(out_dir, state: TrainState) -> None:
    """Encoder parameters plus prototype dump plus the training config."""
    out_dir = Path(out_dir)
    save_checkpoint(out_dir, state.encoder)
    if state.prototypes is not None and state.prototypes.is_fitted():
        save_prototypes(out_dir, state.prototypes)
    with open(out_dir / "train_config.json", "w", encoding="utf-8") as fh:
        json.dump(state.config.to_dict(), fh, indent=2, sort_keys=True)


def load_train_checkpoint(in_dir) -> Tuple[SequenceEncoder, Optional[PrototypeSet],
                                           Optional[TrainConfig]]:
    in_dir = Path(in_dir)
    encoder = load_checkpoint(in_dir)
    prototypes = None
    if (in_dir / "prototypes.json").exists():
        prototypes = load_prototypes(in_dir)
    config = None
    config_path = in_dir / "train_config.json"
    if config_path.exists():
        with open(config_path, encoding="utf-8") as fh:
            config = TrainConfig.from_dict(json.load(fh))
    return encoder, prototypes, config
