"""Full-ranking evaluation, noise-injection robustness, and intent heat maps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .corpus import Corpus, pad_window
from .encoder import SequenceEncoder

log = logging.getLogger(__name__)

DEFAULT_KS = (5, 10, 20)
SPLITS = ("valid", "test")


@dataclass
class EvalReport:
    split: str
    noise_ratio: float
    user_count: int
    hr: Dict[int, float] = field(default_factory=dict)
    ndcg: Dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "split": self.split,
            "noise_ratio": self.noise_ratio,
            "user_count": self.user_count,
            "k_list": sorted(self.hr),
            "hr": {str(k): v for k, v in sorted(self.hr.items())},
            "ndcg": {str(k): v for k, v in sorted(self.ndcg.items())},
        }


def rank_from_scores(scores: np.ndarray, target: int) -> int:
    """1-based rank of ``target`` under descending scores.

    ``scores[i]`` scores item ``i + 1``. Ties resolve in favour of the smaller
    item id, so the rank is deterministic.
    """
    scores = np.asarray(scores)
    if not 1 <= target <= scores.shape[-1]:
        raise ValueError(f"target {target} outside item range [1, {scores.shape[-1]}]")
    own = scores[target - 1]
    greater = int((scores > own).sum())
    equal_smaller_id = int((scores[: target - 1] == own).sum())
    return 1 + greater + equal_smaller_id


def rank_of_truth(intent: torch.Tensor, item_embeddings: torch.Tensor, target: int) -> int:
    """Rank the true item among all items scored by ``intent @ M^T``."""
    with torch.no_grad():
        scores = (intent.reshape(-1) @ item_embeddings[1:].t()).cpu().numpy()
    return rank_from_scores(scores, target)


def metrics_at_k(rank: int, k: int) -> Tuple[int, float]:
    """(hit, ndcg) for one user: both zero when the rank misses the cut-off."""
    if rank < 1 or k < 1:
        raise ValueError(f"rank and k must be >= 1, got rank={rank} k={k}")
    if rank > k:
        return 0, 0.0
    return 1, 1.0 / math.log2(rank + 1)


def inject_noise(sequence: Sequence[int], ratio: float, item_count: int,
                 rng: np.random.Generator,
                 exclude: Optional[set] = None) -> List[int]:
    """Insert ``ceil(ratio * len)`` foreign items at uniform random positions.

    Inserted items are drawn uniformly from ids the user never interacted with
    (``exclude`` defaults to the given sequence). Relative order of the
    original items is preserved.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"noise ratio must be in [0, 1), got {ratio}")
    out = list(sequence)
    count = math.ceil(ratio * len(out))
    if count == 0:
        return out
    banned = set(exclude) if exclude is not None else set(out)
    pool = np.array([i for i in range(1, item_count + 1) if i not in banned])
    if pool.size == 0:
        raise ValueError("no items left to draw noise from: user interacted with everything")
    for _ in range(count):
        item = int(pool[rng.integers(pool.size)])
        position = int(rng.integers(len(out) + 1))
        out.insert(position, item)
    return out


ScoreFn = Callable[[List[List[int]]], np.ndarray]


def _encoder_score_fn(encoder: SequenceEncoder, batch_size: int) -> ScoreFn:
    def score(windows: List[List[int]]) -> np.ndarray:
        n = encoder.config.n
        chunks = []
        with torch.no_grad():
            table = encoder.item_emb.weight[1:].t()
            for lo in range(0, len(windows), batch_size):
                ids = torch.tensor(
                    [pad_window(w, n) for w in windows[lo:lo + batch_size]],
                    dtype=torch.long,
                )
                intents = encoder.encode_ids(ids, train_mode=False).intent
                chunks.append((intents @ table).cpu().numpy())
        return np.concatenate(chunks, axis=0)

    return score


def evaluate(encoder: SequenceEncoder, corpus: Corpus, split: str = "test",
             k_list: Sequence[int] = DEFAULT_KS, noise_ratio: float = 0.0,
             rng: Optional[np.random.Generator] = None, batch_size: int = 256,
             score_fn: Optional[ScoreFn] = None) -> EvalReport:
    """Full-ranking leave-one-out evaluation over every user.

    Scores all items for each user's input window and averages HR@k and
    NDCG@k over users. ``noise_ratio > 0`` corrupts each input window with
    foreign items before encoding (test-time robustness probe).
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    ks = sorted(set(int(k) for k in k_list))
    if not ks or ks[0] < 1:
        raise ValueError(f"k_list must hold positive cut-offs, got {list(k_list)}")
    if noise_ratio > 0 and rng is None:
        rng = np.random.default_rng(0)

    windows: List[List[int]] = []
    labels: List[int] = []
    for seq in corpus.sequences:
        items, label = (corpus.valid_pair(seq) if split == "valid" else corpus.test_pair(seq))
        if noise_ratio > 0:
            items = inject_noise(items, noise_ratio, corpus.item_count, rng,
                                 exclude=set(seq.items))
        windows.append(list(items))
        labels.append(label)

    if score_fn is None:
        score_fn = _encoder_score_fn(encoder, batch_size)
    scores = score_fn(windows)
    if scores.shape != (len(windows), corpus.item_count):
        raise ValueError(
            f"score matrix shape {scores.shape} does not match "
            f"({len(windows)}, {corpus.item_count})"
        )

    hits = {k: 0.0 for k in ks}
    gains = {k: 0.0 for k in ks}
    for row, label in enumerate(labels):
        rank = rank_from_scores(scores[row], label)
        for k in ks:
            hit, gain = metrics_at_k(rank, k)
            hits[k] += hit
            gains[k] += gain
    users = len(labels)
    return EvalReport(
        split=split,
        noise_ratio=float(noise_ratio),
        user_count=users,
        hr={k: hits[k] / users for k in ks},
        ndcg={k: gains[k] / users for k in ks},
    )


def export_intent_heatmap(encoder: SequenceEncoder, items: Sequence[int],
                          path) -> np.ndarray:
    """Write the Gram matrix of valid-position hidden states as headerless CSV.

    Rows follow sequence order over the last ``n`` items; entry (i, j) is the
    inner product of hidden states i and j.
    """
    if not items:
        raise ValueError("cannot export a heat map for an empty sequence")
    window = torch.tensor([pad_window(items, encoder.config.n)], dtype=torch.long)
    with torch.no_grad():
        repr_ = encoder.encode_ids(window, train_mode=False)
    mask = (window[0] != 0).numpy()
    states = repr_.hidden[0].cpu().numpy()[mask]
    gram = states @ states.T
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, gram, delimiter=",", fmt="%.10g")
    return gram
