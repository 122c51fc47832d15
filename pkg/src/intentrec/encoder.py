"""Item-sequence encoders: per-position hidden states and a user intent vector.

The default backbone stacks causal self-attention blocks over summed item and
position embeddings; a gated recurrent variant shares the embedding table and
the checkpoint format.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import torch
from torch import nn

LAYER_NORM_EPS = 1e-12
INIT_STD = 0.02

ENCODER_KINDS = ("attention", "recurrent")


@dataclass
class EncoderConfig:
    item_count: int
    d: int = 64
    n: int = 50
    blocks: int = 2
    heads: int = 2
    dropout: float = 0.1
    encoder_kind: str = "attention"
    ffn_dim: Optional[int] = None
    final_norm: bool = True

    def __post_init__(self) -> None:
        if self.item_count < 1:
            raise ValueError(f"item_count must be >= 1, got {self.item_count}")
        if self.encoder_kind not in ENCODER_KINDS:
            raise ValueError(f"encoder_kind must be one of {ENCODER_KINDS}, got {self.encoder_kind!r}")
        for field_name in ("d", "blocks", "heads"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be >= 1, got {getattr(self, field_name)}")
        if self.d % self.heads != 0:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.ffn_dim is None:
            self.ffn_dim = self.d


class SequenceEmbedding(NamedTuple):
    values: torch.Tensor     # (B, n, d) summed item + position embeddings
    valid_mask: torch.Tensor  # (B, n) bool, False on padding


class SequenceRepr(NamedTuple):
    hidden: torch.Tensor  # (B, n, d)
    intent: torch.Tensor  # (B, d) hidden state at the last valid position


class CausalSelfAttention(nn.Module):
    """Multi-head dot-product attention restricted by an allowed-key mask."""

    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = d // heads
        self.query = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.value = nn.Linear(d, d)
        self.out = nn.Linear(d, d)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        batch, n, d = x.shape
        shape = (batch, n, self.heads, self.head_dim)
        q = self.query(x).view(shape).transpose(1, 2)
        k = self.key(x).view(shape).transpose(1, 2)
        v = self.value(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~allowed.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        # rows with no allowed key (padding queries) softmax to NaN; they must
        # contribute nothing rather than poison the residual stream
        attn = torch.nan_to_num(attn, nan=0.0)
        ctx = (attn @ v).transpose(1, 2).reshape(batch, n, d)
        return self.out(ctx)


class TransformerBlock(nn.Module):
    """Post-norm residual block: attention then a position-wise feed-forward."""

    def __init__(self, d: int, heads: int, dropout: float, ffn_dim: int):
        super().__init__()
        self.attn = CausalSelfAttention(d, heads)
        self.norm1 = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        self.ffn = nn.Sequential(nn.Linear(d, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, d))
        self.norm2 = nn.LayerNorm(d, eps=LAYER_NORM_EPS)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.drop(self.attn(x, allowed)))
        x = self.norm2(x + self.drop(self.ffn(x)))
        return x


class SequenceEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.item_emb = nn.Embedding(config.item_count + 1, config.d, padding_idx=0)
        self.pos_emb = nn.Embedding(config.n, config.d)
        self.emb_dropout = nn.Dropout(config.dropout)
        if config.encoder_kind == "attention":
            self.blocks = nn.ModuleList(
                TransformerBlock(config.d, config.heads, config.dropout, config.ffn_dim)
                for _ in range(config.blocks)
            )
            self.last_norm = nn.LayerNorm(config.d, eps=LAYER_NORM_EPS) if config.final_norm else None
        else:
            self.cell = nn.GRUCell(config.d, config.d)

    def embed(self, input_ids: torch.Tensor) -> SequenceEmbedding:
        """Sum item and learned position embeddings for left-padded id windows."""
        if input_ids.dim() == 1:
            input_ids = input_ids.unsqueeze(0)
        if input_ids.dim() != 2 or input_ids.size(1) != self.config.n:
            raise ValueError(
                f"expected id windows of shape (B, {self.config.n}), got {tuple(input_ids.shape)}"
            )
        if input_ids.numel():
            lo, hi = int(input_ids.min()), int(input_ids.max())
            if lo < 0 or hi > self.config.item_count:
                raise ValueError(
                    f"item ids must lie in [0, {self.config.item_count}], found [{lo}, {hi}]"
                )
        positions = torch.arange(self.config.n, device=input_ids.device)
        values = self.item_emb(input_ids) + self.pos_emb(positions).unsqueeze(0)
        return SequenceEmbedding(values=values, valid_mask=input_ids != 0)

    def encode(self, emb: SequenceEmbedding, train_mode: bool = False) -> SequenceRepr:
        """Run the configured backbone; dropout is active only in train mode."""
        if not bool(emb.valid_mask.any(dim=1).all()):
            raise ValueError("cannot encode a window with no valid positions")
        was_training = self.training
        self.train(train_mode)
        try:
            if self.config.encoder_kind == "attention":
                return self._encode_attention(emb)
            return self._encode_recurrent(emb)
        finally:
            self.train(was_training)

    def encode_ids(self, input_ids: torch.Tensor, train_mode: bool = False) -> SequenceRepr:
        return self.encode(self.embed(input_ids), train_mode=train_mode)

    def forward(self, input_ids: torch.Tensor, train_mode: bool = False) -> SequenceRepr:
        return self.encode_ids(input_ids, train_mode=train_mode)

    def encode_recurrent(self, emb: SequenceEmbedding, train_mode: bool = False) -> SequenceRepr:
        if self.config.encoder_kind != "recurrent":
            raise ValueError("encoder was not built with encoder_kind='recurrent'")
        return self.encode(emb, train_mode=train_mode)

    def _encode_attention(self, emb: SequenceEmbedding) -> SequenceRepr:
        x = self.emb_dropout(emb.values)
        n = x.size(1)
        causal = torch.tril(torch.ones(n, n, dtype=torch.bool, device=x.device))
        allowed = causal.unsqueeze(0) & emb.valid_mask.unsqueeze(1)
        for block in self.blocks:
            x = block(x, allowed)
        if self.last_norm is not None:
            x = self.last_norm(x)
        return SequenceRepr(hidden=x, intent=_last_valid(x, emb.valid_mask))

    def _encode_recurrent(self, emb: SequenceEmbedding) -> SequenceRepr:
        x = self.emb_dropout(emb.values)
        batch, n, d = x.shape
        state = x.new_zeros(batch, d)
        steps = []
        for t in range(n):
            advanced = self.cell(x[:, t], state)
            state = torch.where(emb.valid_mask[:, t].unsqueeze(1), advanced, state)
            steps.append(state)
        hidden = torch.stack(steps, dim=1)
        return SequenceRepr(hidden=hidden, intent=_last_valid(hidden, emb.valid_mask))


def _last_valid(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # cumsum peaks first at the last valid position; argmax takes that index
    last = mask.long().cumsum(dim=1).argmax(dim=1)
    return hidden[torch.arange(hidden.size(0), device=hidden.device), last]


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, (nn.Linear, nn.Embedding)):
        module.weight.data.normal_(mean=0.0, std=INIT_STD)
        if isinstance(module, nn.Linear) and module.bias is not None:
            module.bias.data.zero_()
        if isinstance(module, nn.Embedding) and module.padding_idx is not None:
            module.weight.data[module.padding_idx].zero_()
    elif isinstance(module, nn.LayerNorm):
        module.weight.data.fill_(1.0)
        module.bias.data.zero_()
    elif isinstance(module, nn.GRUCell):
        module.weight_ih.data.normal_(mean=0.0, std=INIT_STD)
        module.weight_hh.data.normal_(mean=0.0, std=INIT_STD)
        if module.bias_ih is not None:
            module.bias_ih.data.zero_()
            module.bias_hh.data.zero_()


def build_encoder(config: EncoderConfig, seed: int = 0) -> SequenceEncoder:
    """Construct an encoder with all weights drawn from a seeded normal(0, 0.02)."""
    torch.manual_seed(seed)
    encoder = SequenceEncoder(config)
    encoder.apply(_init_weights)
    return encoder


def save_checkpoint(out_dir, encoder: SequenceEncoder) -> None:
    """Persist config plus one little-endian float32 flat file per parameter."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = asdict(encoder.config)
    manifest["params"] = {}
    for name, tensor in encoder.state_dict().items():
        manifest["params"][name] = list(tensor.shape)
        data = tensor.detach().cpu().numpy().astype("<f4").tobytes()
        (out_dir / f"{name}.f32").write_bytes(data)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(in_dir) -> SequenceEncoder:
    """Rebuild an encoder from :func:`save_checkpoint` output, validating shapes."""
    in_dir = Path(in_dir)
    manifest_path = in_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {in_dir}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    config_keys = {f.name for f in fields(EncoderConfig)}
    try:
        config = EncoderConfig(**{k: v for k, v in manifest.items() if k in config_keys})
        params = manifest["params"]
    except (TypeError, KeyError) as exc:
        raise ValueError(f"malformed manifest.json under {in_dir}: {exc}")
    encoder = SequenceEncoder(config)
    state = {}
    for name, shape in params.items():
        param_path = in_dir / f"{name}.f32"
        if not param_path.exists():
            raise FileNotFoundError(f"checkpoint is missing parameter file {param_path.name}")
        raw = np.frombuffer(param_path.read_bytes(), dtype="<f4")
        expected = int(np.prod(shape)) if shape else 1
        if raw.size != expected:
            raise ValueError(
                f"parameter {name}: file holds {raw.size} floats, manifest shape {shape} "
                f"needs {expected}"
            )
        state[name] = torch.from_numpy(raw.reshape(shape).copy())
    encoder.load_state_dict(state, strict=True)
    return encoder
