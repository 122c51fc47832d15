"""Interaction corpus: loading, filtering, splitting, and subsequence segmentation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

PAD_ID = 0


class CorpusError(ValueError):
    """Malformed input data or a corpus emptied / broken by processing."""


@dataclass
class InteractionSequence:
    """One user's chronologically ordered item ids (1-based, 0 is padding)."""

    user_id: int
    items: List[int]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class Corpus:
    sequences: List[InteractionSequence]
    item_count: int
    id_map: Optional[Dict[int, int]] = None
    split_ready: bool = False

    @property
    def user_count(self) -> int:
        return len(self.sequences)

    @property
    def action_count(self) -> int:
        return sum(len(s) for s in self.sequences)

    def _require_split(self) -> None:
        if not self.split_ready:
            raise CorpusError("corpus has no split markers; call split_leave_one_out first")

    def train_items(self, seq: InteractionSequence) -> List[int]:
        """Training view: everything before the held-out validation and test items."""
        self._require_split()
        return seq.items[:-2]

    def valid_pair(self, seq: InteractionSequence) -> Tuple[List[int], int]:
        """Validation input window source and its held-out label."""
        self._require_split()
        return seq.items[:-2], seq.items[-2]

    def test_pair(self, seq: InteractionSequence) -> Tuple[List[int], int]:
        """Test input window source (includes the validation item) and label."""
        self._require_split()
        return seq.items[:-1], seq.items[-1]

    def stats(self) -> Dict[str, float]:
        users = self.user_count
        items = self.item_count
        actions = self.action_count
        return {
            "users": users,
            "items": items,
            "actions": actions,
            "avg_actions_per_user": actions / users if users else 0.0,
            "avg_actions_per_item": actions / items if items else 0.0,
            "sparsity": 1.0 - actions / (users * items) if users and items else 1.0,
        }


@dataclass
class TrainingInstance:
    """A segmented subsequence with its supervisory target item."""

    instance_id: int
    input: Tuple[int, ...]
    target: int
    source_user: int


@dataclass
class TargetIndex:
    """Buckets of training-instance ids keyed by target item.

    The index keeps a reference to the instance list it was built over so a
    bucket lookup can be resolved back to concrete instances.
    """

    buckets: Dict[int, List[int]]
    instances: List[TrainingInstance] = field(default_factory=list)


def load_interactions(path) -> Corpus:
    """Parse a whitespace text file with one user per line: ``user item_1 ... item_L``.

    Item ids must be positive integers; 0 is reserved for padding.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"interaction file not found: {path}")
    sequences: List[InteractionSequence] = []
    seen_users = set()
    max_item = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                raise CorpusError(f"{path}: line {lineno} is empty")
            if len(tokens) < 2:
                raise CorpusError(
                    f"{path}: line {lineno} has no items (expected 'user item_1 ... item_L')"
                )
            try:
                values = [int(t) for t in tokens]
            except ValueError as exc:
                raise CorpusError(f"{path}: line {lineno} has a non-integer token: {exc}") from exc
            user, items = values[0], values[1:]
            if user in seen_users:
                raise CorpusError(f"{path}: line {lineno} repeats user id {user}")
            if any(i <= 0 for i in items):
                raise CorpusError(f"{path}: line {lineno} has a non-positive item id")
            seen_users.add(user)
            sequences.append(InteractionSequence(user, items))
            max_item = max(max_item, max(items))
    if not sequences:
        raise CorpusError(f"{path}: file is empty")
    return Corpus(sequences=sequences, item_count=max_item)


def five_core_filter(corpus: Corpus, min_count: int = 5) -> Corpus:
    """Iteratively drop users and items with fewer than ``min_count`` interactions.

    Dropping an item shortens sequences, which can push users below the
    threshold and vice versa, so the filter runs to a fixpoint.
    """
    users = [s.user_id for s in corpus.sequences]
    seqs = [list(s.items) for s in corpus.sequences]
    while True:
        item_counts = Counter(i for s in seqs for i in s)
        keep = {i for i, c in item_counts.items() if c >= min_count}
        changed = False
        next_users: List[int] = []
        next_seqs: List[List[int]] = []
        for user, seq in zip(users, seqs):
            filtered = [i for i in seq if i in keep]
            if len(filtered) != len(seq):
                changed = True
            if len(filtered) >= min_count:
                next_users.append(user)
                next_seqs.append(filtered)
            else:
                changed = True
        users, seqs = next_users, next_seqs
        if not changed:
            break
    if not seqs:
        raise CorpusError(f"{min_count}-core filtering removed every user")
    sequences = [InteractionSequence(u, s) for u, s in zip(users, seqs)]
    return Corpus(sequences=sequences, item_count=max(max(s) for s in seqs))


def reindex(corpus: Corpus) -> Corpus:
    """Map item ids to a dense 1..m range in order of first appearance."""
    id_map: Dict[int, int] = {}
    sequences = []
    for seq in corpus.sequences:
        mapped = []
        for item in seq.items:
            if item not in id_map:
                id_map[item] = len(id_map) + 1
            mapped.append(id_map[item])
        sequences.append(InteractionSequence(seq.user_id, mapped))
    return Corpus(sequences=sequences, item_count=len(id_map), id_map=id_map)


def split_leave_one_out(corpus: Corpus) -> Corpus:
    """Mark per-user leave-one-out splits: last item test, second-to-last validation.

    Sequences shorter than 3 cannot produce all three views and are dropped
    with a logged count.
    """
    kept = [s for s in corpus.sequences if len(s) >= 3]
    dropped = corpus.user_count - len(kept)
    if dropped:
        log.warning("dropped %d user(s) with fewer than 3 interactions at split time", dropped)
    if not kept:
        raise CorpusError("no sequence long enough to split (need at least 3 items)")
    return Corpus(
        sequences=kept,
        item_count=corpus.item_count,
        id_map=corpus.id_map,
        split_ready=True,
    )


def segment(items: Sequence[int], max_len: int, source_user: int = -1,
            start_id: int = 0) -> List[TrainingInstance]:
    """Slide over ``items`` producing one instance per target position.

    Position t (the second item onward) yields input ``items[max(0, t-max_len):t]``
    and target ``items[t]``: the window holds at most ``max_len`` most recent
    items. A sequence shorter than 2 yields nothing.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if len(items) < 2:
        log.debug("sequence of length %d yields no training instances", len(items))
        return []
    out = []
    for t in range(1, len(items)):
        window = tuple(items[max(0, t - max_len):t])
        out.append(TrainingInstance(start_id + t - 1, window, items[t], source_user))
    return out


def segment_corpus(corpus: Corpus, max_len: int) -> List[TrainingInstance]:
    """Segment every user's training view, assigning globally unique instance ids."""
    instances: List[TrainingInstance] = []
    empty_users = 0
    for seq in corpus.sequences:
        items = corpus.train_items(seq)
        got = segment(items, max_len, source_user=seq.user_id, start_id=len(instances))
        if not got:
            empty_users += 1
        instances.extend(got)
    if empty_users:
        log.info("%d user(s) contributed no training instances", empty_users)
    return instances


def build_target_index(instances: Sequence[TrainingInstance]) -> TargetIndex:
    """Group instance ids by target item; ids must equal list positions."""
    buckets: Dict[int, List[int]] = {}
    for pos, inst in enumerate(instances):
        if inst.instance_id != pos:
            raise CorpusError(
                f"instance id {inst.instance_id} does not match its position {pos}"
            )
        buckets.setdefault(inst.target, []).append(inst.instance_id)
    return TargetIndex(buckets=buckets, instances=list(instances))


def sample_positive(index: TargetIndex, anchor: TrainingInstance,
                    rng: np.random.Generator) -> TrainingInstance:
    """Draw a uniform random other instance sharing the anchor's target.

    If the anchor is alone in its bucket it is its own positive.
    """
    bucket = index.buckets.get(anchor.target)
    if bucket is None:
        raise CorpusError(f"target index has no bucket for item {anchor.target}")
    others = [i for i in bucket if i != anchor.instance_id]
    if not others:
        return anchor
    return index.instances[others[int(rng.integers(len(others)))]]


def pad_window(items: Sequence[int], n: int) -> List[int]:
    """Left-pad (with 0) or left-truncate ``items`` to exactly length ``n``."""
    window = list(items[-n:])
    return [PAD_ID] * (n - len(window)) + window


def write_preprocessed(corpus: Corpus, out_dir) -> Dict[str, Path]:
    """Persist a processed corpus: sequence file, id map, and stats JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seq_path = out_dir / "sequences.txt"
    with open(seq_path, "w", encoding="utf-8") as fh:
        for seq in corpus.sequences:
            fh.write(" ".join(map(str, [seq.user_id] + seq.items)) + "\n")
    map_path = out_dir / "id_map.json"
    with open(map_path, "w", encoding="utf-8") as fh:
        json.dump({str(k): v for k, v in (corpus.id_map or {}).items()}, fh)
    stats_path = out_dir / "stats.json"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(corpus.stats(), fh, indent=2)
    return {"sequences": seq_path, "id_map": map_path, "stats": stats_path}


def load_preprocessed(data_dir) -> Corpus:
    """Load a directory written by :func:`write_preprocessed` and mark splits."""
    data_dir = Path(data_dir)
    seq_path = data_dir / "sequences.txt"
    if not seq_path.exists():
        raise FileNotFoundError(f"no sequences.txt under {data_dir}")
    corpus = load_interactions(seq_path)
    return split_leave_one_out(corpus)
