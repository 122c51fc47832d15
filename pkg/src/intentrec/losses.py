"""Training objectives: next-item cross-entropy and label-masked contrastive terms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from .intent import PrototypeSet, query_batch

REDUCTIONS = ("mean", "sum")


def similarity(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Inner product over the last dimension."""
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return (x * y).sum(dim=-1)


@dataclass
class ContrastiveBatch:
    """Paired views with labels that mark which other views are false negatives."""

    view1: torch.Tensor   # (B, d)
    view2: torch.Tensor   # (B, d)
    labels: torch.Tensor  # (B,) integer labels shared by both views of a pair
    temperature: float = 1.0


def masked_info_nce(batch: ContrastiveBatch, reduction: str = "mean",
                    extra_views: Optional[torch.Tensor] = None,
                    extra_labels: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Symmetric InfoNCE over the 2B pooled views with false negatives masked.

    Each view is an anchor once; its paired view is the positive. Candidate
    negatives are every other pooled view whose label differs from the
    anchor's (the positive itself always stays in the denominator). The two
    directed terms of a pair are summed; ``reduction`` averages or sums over
    the B pairs. ``extra_views`` join the candidate negative pool only.
    """
    v1, v2, labels = batch.view1, batch.view2, batch.labels
    tau = batch.temperature
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    if v1.dim() != 2 or v1.shape != v2.shape:
        raise ValueError(f"views must share shape (B, d), got {tuple(v1.shape)} and {tuple(v2.shape)}")
    b = v1.size(0)
    if b == 0 or labels.shape != (b,):
        raise ValueError(f"labels must have shape ({b},), got {tuple(labels.shape)}")

    anchors = torch.cat([v1, v2], dim=0)
    anchor_labels = torch.cat([labels, labels], dim=0)
    if extra_views is not None:
        if extra_labels is None or extra_views.size(0) != extra_labels.size(0):
            raise ValueError("extra_views requires matching extra_labels")
        pool = torch.cat([anchors, extra_views], dim=0)
        pool_labels = torch.cat([anchor_labels, extra_labels], dim=0)
    else:
        pool = anchors
        pool_labels = anchor_labels

    sim = anchors @ pool.t() / tau
    idx = torch.arange(2 * b, device=sim.device)
    positive_col = torch.cat([idx[b:2 * b], idx[:b]])
    keep = pool_labels.unsqueeze(0) != anchor_labels.unsqueeze(1)
    keep[idx, positive_col] = True   # the paired positive is never masked
    keep[idx, idx] = False           # an anchor never contrasts with itself
    logits = sim.masked_fill(~keep, float("-inf"))
    per_anchor = torch.logsumexp(logits, dim=1) - sim[idx, positive_col]
    total = per_anchor.sum()
    return total / b if reduction == "mean" else total


def cicl_loss(h1: torch.Tensor, h2: torch.Tensor, targets: torch.Tensor,
              temperature: float = 1.0, reduction: str = "mean") -> torch.Tensor:
    """Coarse-grain term: paired subsequence intents, masked by shared target item."""
    return masked_info_nce(
        ContrastiveBatch(view1=h1, view2=h2, labels=targets, temperature=temperature),
        reduction=reduction,
    )


def ficl_loss(h1: torch.Tensor, h2: torch.Tensor, prototypes: PrototypeSet,
              temperature: float = 1.0, reduction: str = "mean",
              joint_pool: bool = False) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Fine-grain term: each view against its nearest prototype, masked by cluster id.

    Returns (loss, cluster ids of h1, cluster ids of h2). Prototypes receive no
    gradient. With ``joint_pool`` the other view's representations and centroids
    join each addend's candidate negative pool.
    """
    ids1, c1 = _nearest(h1, prototypes)
    ids2, c2 = _nearest(h2, prototypes)
    batch1 = ContrastiveBatch(view1=h1, view2=c1, labels=ids1, temperature=temperature)
    batch2 = ContrastiveBatch(view1=h2, view2=c2, labels=ids2, temperature=temperature)
    if joint_pool:
        term1 = masked_info_nce(batch1, reduction,
                                extra_views=torch.cat([h2.detach(), c2]),
                                extra_labels=torch.cat([ids2, ids2]))
        term2 = masked_info_nce(batch2, reduction,
                                extra_views=torch.cat([h1.detach(), c1]),
                                extra_labels=torch.cat([ids1, ids1]))
    else:
        term1 = masked_info_nce(batch1, reduction)
        term2 = masked_info_nce(batch2, reduction)
    return term1 + term2, ids1, ids2


def _nearest(h: torch.Tensor, prototypes: PrototypeSet) -> Tuple[torch.Tensor, torch.Tensor]:
    ids, centroids = query_batch(h.detach().cpu().numpy(), prototypes)
    return (
        torch.as_tensor(ids, dtype=torch.long, device=h.device),
        torch.as_tensor(centroids, dtype=h.dtype, device=h.device),
    )


def rec_loss(intent: torch.Tensor, item_embeddings: torch.Tensor,
             target) -> torch.Tensor:
    """Softmax cross-entropy of the true next item under scores ``intent @ M^T``.

    ``item_embeddings`` is the full table including the padding row 0, which is
    excluded from scoring. Batched inputs reduce by mean.
    """
    single = intent.dim() == 1
    h = intent.unsqueeze(0) if single else intent
    if h.dim() != 2 or h.size(1) != item_embeddings.size(1):
        raise ValueError(
            f"intent width {tuple(intent.shape)} does not match embedding width "
            f"{item_embeddings.size(1)}"
        )
    t = torch.as_tensor([target] if single else target, dtype=torch.long, device=h.device)
    item_count = item_embeddings.size(0) - 1
    if t.numel() != h.size(0):
        raise ValueError(f"expected {h.size(0)} targets, got {t.numel()}")
    if bool((t < 1).any()) or bool((t > item_count).any()):
        raise ValueError(f"target item out of range [1, {item_count}]")
    scores = h @ item_embeddings[1:].t()
    return F.cross_entropy(scores, t - 1, reduction="mean")


@dataclass
class LossBreakdown:
    rec: float
    cicl: float
    ficl: float
    total: float
    lam: float
    beta: float

    def as_dict(self) -> dict:
        return {"rec": self.rec, "cicl": self.cicl, "ficl": self.ficl, "total": self.total}


def total_loss(rec, cicl, ficl, lam: float, beta: float) -> LossBreakdown:
    """Weighted multi-task objective: rec + lam * cicl + beta * ficl."""
    if lam < 0 or beta < 0:
        raise ValueError(f"loss weights must be non-negative, got lam={lam} beta={beta}")
    rec, cicl, ficl = float(rec), float(cicl), float(ficl)
    return LossBreakdown(
        rec=rec,
        cicl=cicl,
        ficl=ficl,
        total=rec + lam * cicl + beta * ficl,
        lam=lam,
        beta=beta,
    )
