"""Fine-grain intent prototypes: seeded k-means over intent representations."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

log = logging.getLogger(__name__)

_ASSIGN_CHUNK = 2048


@dataclass
class PrototypeSet:
    """K cluster centroids plus the assignments the centroids were computed from."""

    centroids: Optional[np.ndarray] = None
    assignments: Optional[np.ndarray] = None
    fitted_on: int = 0
    iterations_run: int = 0
    inertia: float = float("nan")
    seed: int = 0
    normalized: bool = False
    inertia_history: List[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return 0 if self.centroids is None else int(self.centroids.shape[0])

    def is_fitted(self) -> bool:
        return self.centroids is not None and self.centroids.size > 0


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def _assign(points: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point by squared euclidean distance, ties to the
    smallest cluster id. Returns (labels, squared distance to own centroid)."""
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    d2own = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _ASSIGN_CHUNK):
        hi = min(lo + _ASSIGN_CHUNK, n)
        diff = points[lo:hi, None, :] - centroids[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        labels[lo:hi] = d2.argmin(axis=1)
        d2own[lo:hi] = d2[np.arange(hi - lo), labels[lo:hi]]
    return labels, d2own


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centroids with the usual D^2-weighted sampling."""
    n, d = points.shape
    centroids = np.empty((k, d), dtype=np.float64)
    idx = int(rng.integers(n))
    centroids[0] = points[idx]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _update_means(points: np.ndarray, centroids: np.ndarray,
                  labels: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Recompute cluster means; re-seed any empty cluster to the point farthest
    from its own centroid (the re-seeded point is relabelled accordingly)."""
    d = points.shape[1]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, d), dtype=np.float64)
    np.add.at(sums, labels, points)
    new_centroids = centroids.copy()
    nonempty = counts > 0
    new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
    labels = labels.copy()
    empty = np.flatnonzero(~nonempty)
    if empty.size:
        d2own = ((points - new_centroids[labels]) ** 2).sum(axis=1)
        for cluster in empty:
            far = int(d2own.argmax())
            new_centroids[cluster] = points[far]
            labels[far] = cluster
            d2own[far] = -np.inf
    return new_centroids, labels


def fit_prototypes(reprs, k: int, max_iters: int = 20, seed: int = 0,
                   normalize: bool = False) -> PrototypeSet:
    """Lloyd's algorithm with k-means++ seeding over representation rows.

    Stops at the assignment fixpoint or after ``max_iters`` passes. Centroids
    always equal the mean of the points recorded in ``assignments`` (repaired
    empty clusters hold exactly their re-seed point).
    """
    points = np.ascontiguousarray(np.asarray(reprs, dtype=np.float64))
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError(f"expected a non-empty 2-d array of representations, got shape {points.shape}")
    if not np.isfinite(points).all():
        raise ValueError("representations contain non-finite values")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    if normalize:
        points = _l2_normalize(points)

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    labels, _ = _assign(points, centroids)
    history: List[float] = []
    iterations = 0
    converged = False
    for it in range(1, max_iters + 1):
        centroids, labels = _update_means(points, centroids, labels, k)
        new_labels, d2own = _assign(points, centroids)
        history.append(float(d2own.sum()))
        iterations = it
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    if not converged:
        # ran out of iterations: make centroids consistent with the last labels
        centroids, labels = _update_means(points, centroids, labels, k)
    inertia = float(((points - centroids[labels]) ** 2).sum())
    return PrototypeSet(
        centroids=centroids,
        assignments=labels,
        fitted_on=points.shape[0],
        iterations_run=iterations,
        inertia=inertia,
        seed=seed,
        normalized=normalize,
        inertia_history=history,
    )


def query(h, prototypes: PrototypeSet) -> Tuple[int, np.ndarray]:
    """Return (cluster id, centroid) of the prototype nearest to ``h``."""
    ids, centroids = query_batch(np.asarray(h, dtype=np.float64)[None, :], prototypes)
    return int(ids[0]), centroids[0]


def query_batch(h, prototypes: PrototypeSet) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`query` over rows of ``h``."""
    if prototypes is None or not prototypes.is_fitted():
        raise ValueError("prototype set is not fitted")
    points = np.asarray(h, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != prototypes.centroids.shape[1]:
        raise ValueError(
            f"representation shape {points.shape} does not match centroid width "
            f"{prototypes.centroids.shape[1]}"
        )
    if prototypes.normalized:
        points = _l2_normalize(points)
    labels, _ = _assign(points, prototypes.centroids)
    return labels, prototypes.centroids[labels].copy()


def save_prototypes(out_dir, prototypes: PrototypeSet) -> None:
    """Write centroids as little-endian float32 plus a JSON sidecar."""
    if not prototypes.is_fitted():
        raise ValueError("cannot save an unfitted prototype set")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "prototypes.f32").write_bytes(
        prototypes.centroids.astype("<f4").tobytes()
    )
    sidecar = {
        "K": prototypes.k,
        "d": int(prototypes.centroids.shape[1]),
        "seed": prototypes.seed,
        "iterations_run": prototypes.iterations_run,
        "inertia": prototypes.inertia,
        "fitted_on": prototypes.fitted_on,
        "normalized": prototypes.normalized,
    }
    with open(out_dir / "prototypes.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)


def load_prototypes(in_dir) -> PrototypeSet:
    in_dir = Path(in_dir)
    sidecar_path = in_dir / "prototypes.json"
    if not sidecar_path.exists():
        raise FileNotFoundError(f"no prototypes.json under {in_dir}")
    with open(sidecar_path, encoding="utf-8") as fh:
        sidecar = json.load(fh)
    raw = np.frombuffer((in_dir / "prototypes.f32").read_bytes(), dtype="<f4")
    k, d = sidecar["K"], sidecar["d"]
    if raw.size != k * d:
        raise ValueError(
            f"prototype file holds {raw.size} floats, sidecar says {k}x{d}"
        )
    return PrototypeSet(
        centroids=raw.reshape(k, d).astype(np.float64),
        fitted_on=sidecar.get("fitted_on", 0),
        iterations_run=sidecar["iterations_run"],
        inertia=sidecar["inertia"],
        seed=sidecar["seed"],
        normalized=sidecar.get("normalized", False),
    )
