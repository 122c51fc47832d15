"""Synthetic interaction corpus with planted latent intents.

Each user is assigned one hidden intent; an intent owns an item pool and a
Markov chain over that pool. Generated sequences mostly follow the chain with
occasional uniform noise items, so a model that recovers the intent structure
ranks held-out items better than one that only memorizes transitions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .corpus import Corpus, InteractionSequence


@dataclass
class SynthConfig:
    users: int = 200
    items: int = 500
    intents: int = 4
    seq_len: int = 20
    pool_size: Optional[int] = None   # defaults to items // intents
    successors: int = 5               # chain out-degree per item
    noise: float = 0.1                # probability of an off-chain uniform item
    disjoint: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.users, self.items, self.intents, self.seq_len) < 1:
            raise ValueError("users, items, intents, and seq_len must all be >= 1")
        if self.intents > self.items:
            raise ValueError(f"cannot plant {self.intents} intents over {self.items} items")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError(f"noise must be in [0, 1), got {self.noise}")
        if self.pool_size is None:
            self.pool_size = self.items // self.intents
        if self.pool_size < 1:
            raise ValueError("pool_size works out to zero items per intent")
        if self.disjoint and self.pool_size * self.intents > self.items:
            raise ValueError(
                f"disjoint pools need {self.pool_size * self.intents} items, "
                f"only {self.items} exist"
            )
        if self.successors < 1:
            raise ValueError(f"successors must be >= 1, got {self.successors}")


@dataclass
class SynthCorpus:
    sequences: List[InteractionSequence]
    user_intents: Dict[int, int]
    pools: List[List[int]]
    config: SynthConfig

    def to_corpus(self) -> Corpus:
        return Corpus(sequences=self.sequences, item_count=self.config.items)


def _build_pools(cfg: SynthConfig, rng: np.random.Generator) -> List[List[int]]:
    if cfg.disjoint:
        order = rng.permutation(cfg.items) + 1
        return [
            sorted(int(i) for i in order[k * cfg.pool_size:(k + 1) * cfg.pool_size])
            for k in range(cfg.intents)
        ]
    return [
        sorted(int(i) for i in rng.choice(cfg.items, size=cfg.pool_size, replace=False) + 1)
        for _ in range(cfg.intents)
    ]


def _build_chain(pool: List[int], successors: int,
                 rng: np.random.Generator) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """For every pool item: a few successor items with Dirichlet-drawn weights."""
    out_degree = min(successors, len(pool))
    chain = {}
    arr = np.array(pool)
    for item in pool:
        nxt = rng.choice(arr, size=out_degree, replace=False)
        probs = rng.dirichlet(np.ones(out_degree))
        chain[item] = (nxt, probs)
    return chain


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Sample the full corpus; identical configs yield identical corpora."""
    rng = np.random.default_rng(cfg.seed)
    pools = _build_pools(cfg, rng)
    chains = [_build_chain(pool, cfg.successors, rng) for pool in pools]
    sequences = []
    user_intents = {}
    for user in range(1, cfg.users + 1):
        intent = int(rng.integers(cfg.intents))
        user_intents[user] = intent
        pool = pools[intent]
        chain = chains[intent]
        current = int(pool[rng.integers(len(pool))])
        items = [current]
        for _ in range(cfg.seq_len - 1):
            if rng.random() < cfg.noise:
                items.append(int(rng.integers(1, cfg.items + 1)))
                continue
            nxt, probs = chain[current]
            current = int(rng.choice(nxt, p=probs))
            items.append(current)
        sequences.append(InteractionSequence(user, items))
    return SynthCorpus(sequences=sequences, user_intents=user_intents,
                       pools=pools, config=cfg)


def write_synthetic(synth: SynthCorpus, out_dir) -> Dict[str, Path]:
    """Write the raw interaction file plus ground-truth labels and the config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seq_path = out_dir / "interactions.txt"
    with open(seq_path, "w", encoding="utf-8") as fh:
        for seq in synth.sequences:
            fh.write(" ".join(map(str, [seq.user_id] + seq.items)) + "\n")
    truth_path = out_dir / "intents.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "user_intents": {str(u): k for u, k in synth.user_intents.items()},
                "pools": synth.pools,
            },
            fh,
        )
    config_path = out_dir / "synth_config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(asdict(synth.config), fh, indent=2)
    return {"interactions": seq_path, "intents": truth_path, "config": config_path}
