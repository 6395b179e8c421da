"""Embedding-space kernels: k-means, diversity seed selection, exact t-SNE.

All routines are pure and deterministic for a fixed seed. t-SNE is the exact
O(n^2) formulation; at pool scale (~1000 points) this is fast enough and keeps
runs byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

EMBEDDING_DIM = 256

# t-SNE optimizer constants (configurable via tsne_project arguments)
TSNE_LEARNING_RATE = 200.0
TSNE_EXAGGERATION = 12.0
TSNE_EXAGGERATION_ITERS = 250
TSNE_MOMENTUM_EARLY = 0.5
TSNE_MOMENTUM_LATE = 0.8
TSNE_INIT_STD = 1e-4


class ProjectionError(Exception):
    pass


class KTooLarge(ProjectionError):
    pass


class DegenerateRow(ProjectionError):
    pass


class DegenerateInput(ProjectionError):
    pass


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d)
    assignment: dict[str, int]
    inertia: float
    sse_trace: list[float] = field(default_factory=list)  # per Lloyd's iteration


@dataclass(frozen=True)
class ProjectionPoint:
    image_id: str
    x: float
    y: float


@dataclass
class TsneResult:
    points: list[ProjectionPoint]
    kl_trace: list[float]  # KL(P||Q) of the un-exaggerated P, per iteration


def _as_matrix(embeddings: Mapping[str, Sequence[float]]) -> tuple[list[str], np.ndarray]:
    ids = list(embeddings.keys())
    X = np.asarray([np.asarray(embeddings[i], dtype=np.float64) for i in ids])
    if X.ndim != 2:
        raise ProjectionError("embeddings must share one fixed dimension")
    if not np.all(np.isfinite(X)):
        raise ProjectionError("non-finite embedding entries")
    return ids, X


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = rng.integers(n)
    centroids[0] = X[first]
    sq_d = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = sq_d.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=sq_d / total)
        centroids[j] = X[idx]
        sq_d = np.minimum(sq_d, np.sum((X - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans_cluster(
    embeddings: Mapping[str, Sequence[float]],
    k: int,
    seed: int = 0,
    max_iter: int = 300,
) -> ClusterModel:
    """Lloyd's iterations from seeded k-means++ until the assignment fixpoint.

    Empty clusters are re-seeded to the point farthest from its current
    centroid, so the returned model never has an empty cluster.
    """
    ids, X = _as_matrix(embeddings)
    n = X.shape[0]
    if k < 1 or n < 1:
        raise ProjectionError("need k >= 1 and at least one embedding")
    if k > n:
        raise KTooLarge(f"k={k} exceeds n={n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    labels = np.full(n, -1)
    sse_trace: list[float] = []
    for _ in range(max_iter):
        sq_d = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(sq_d, axis=1)
        for j in range(k):
            members = new_labels == j
            if members.any():
                centroids[j] = X[members].mean(axis=0)
            else:
                # farthest point from its own centroid becomes the new seed
                dist_to_own = sq_d[np.arange(n), new_labels]
                far = int(np.argmax(dist_to_own))
                centroids[j] = X[far]
                new_labels[far] = j
        sq_after = ((X - centroids[new_labels]) ** 2).sum(axis=1)
        sse_trace.append(float(sq_after.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    inertia = sse_trace[-1]
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignment={ids[i]: int(labels[i]) for i in range(n)},
        inertia=inertia,
        sse_trace=sse_trace,
    )


def select_seed_pool(
    embeddings: Mapping[str, Sequence[float]],
    k: int = 20,
    per_centroid: int = 2,
    seed: int = 0,
) -> list[str]:
    """Diversity-sample k*per_centroid unique ids: nearest images per centroid.

    Thin clusters are backfilled from the globally nearest unselected points so
    the output size is always exactly k*per_centroid.
    """
    ids, X = _as_matrix(embeddings)
    n = len(ids)
    if k * per_centroid > n:
        raise KTooLarge(f"k*per_centroid={k * per_centroid} exceeds n={n}")
    model = kmeans_cluster(embeddings, k=k, seed=seed)
    labels = np.array([model.assignment[i] for i in ids])

    selected: list[str] = []
    taken = np.zeros(n, dtype=bool)
    deficits: list[int] = []
    for j in range(k):
        dist = np.sum((X - model.centroids[j]) ** 2, axis=1)
        members = np.flatnonzero((labels == j) & ~taken)
        order = members[np.argsort(dist[members], kind="stable")]
        picks = order[:per_centroid]
        for idx in picks:
            taken[idx] = True
            selected.append(ids[idx])
        deficits.append(per_centroid - len(picks))

    for j, deficit in enumerate(deficits):
        if deficit <= 0:
            continue
        dist = np.sum((X - model.centroids[j]) ** 2, axis=1)
        remaining = np.flatnonzero(~taken)
        order = remaining[np.argsort(dist[remaining], kind="stable")]
        for idx in order[:deficit]:
            taken[idx] = True
            selected.append(ids[idx])
    return selected


def _conditional_probs(sq_distances: np.ndarray, beta: float) -> np.ndarray:
    # shift for numerical stability; the shift cancels after normalization
    logits = -beta * (sq_distances - sq_distances.min())
    p = np.exp(logits)
    total = p.sum()
    if total <= 0:
        raise DegenerateRow("conditional distribution underflowed")
    return p / total


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def calibrate_perplexity(
    sq_distances: np.ndarray,
    target_perplexity: float,
    tol: float = 1e-5,
    max_steps: int = 64,
) -> float:
    """Binary-search the Gaussian precision beta = 1/(2 sigma^2) for one row.

    Stops when |log2(perplexity) - log2(target)| <= tol or after max_steps.
    """
    sq_distances = np.asarray(sq_distances, dtype=np.float64)
    n_neighbors = sq_distances.shape[0]
    if target_perplexity >= n_neighbors:
        raise ProjectionError(
            f"target perplexity {target_perplexity} >= neighbor count {n_neighbors}"
        )
    if not np.any(sq_distances > 0):
        raise DegenerateRow("all neighbor distances are zero")

    target_bits = np.log2(target_perplexity)
    beta = 1.0
    beta_min, beta_max = 0.0, np.inf
    for _ in range(max_steps):
        bits = _entropy_bits(_conditional_probs(sq_distances, beta))
        diff = bits - target_bits
        if abs(diff) <= tol:
            break
        if diff > 0:  # too flat -> sharpen
            beta_min = beta
            beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
        else:
            beta_max = beta
            beta = beta / 2.0 if beta_min == 0.0 else (beta + beta_min) / 2.0
    return beta


def _jitter_duplicates(X: np.ndarray, seed: int) -> np.ndarray:
    _, first_idx, counts = np.unique(
        X, axis=0, return_index=True, return_counts=True
    )
    if not np.any(counts > 1):
        return X
    rng = np.random.default_rng(seed ^ 0x5EED)
    X = X + rng.normal(0.0, 1e-9, size=X.shape)
    _, counts = np.unique(X, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise DegenerateInput("identical embeddings survived dedup jitter")
    return X


def affinity_matrix(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized joint probabilities P from per-row calibrated conditionals."""
    n = X.shape[0]
    sq_norms = (X**2).sum(axis=1)
    D = sq_norms[:, None] + sq_norms[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    D = np.maximum(D, 0.0)

    cond = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = D[i][mask[i]]
        beta = calibrate_perplexity(row, perplexity)
        cond[i][mask[i]] = _conditional_probs(row, beta)
    P = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    return P


def _kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-12))).sum())


def tsne_project(
    embeddings: Mapping[str, Sequence[float]],
    perplexity: float = 12.0,
    seed: int = 0,
    iterations: int = 1000,
) -> TsneResult:
    """Exact t-SNE to 2D with early exaggeration and a momentum schedule.

    Deterministic for a fixed (embeddings, perplexity, seed, iterations)
    tuple. Records KL(P||Q) per iteration, always against the true P.
    """
    import warnings

    ids, X = _as_matrix(embeddings)
    n = X.shape[0]
    if n < 4:
        raise ProjectionError("t-SNE needs at least 4 points")
    if perplexity >= (n - 1) / 3:
        warnings.warn(
            f"perplexity {perplexity} above recommended bound (n-1)/3 = {(n - 1) / 3:.1f}",
            stacklevel=2,
        )

    X = _jitter_duplicates(X, seed)
    P = affinity_matrix(X, perplexity)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, TSNE_INIT_STD, size=(n, 2))
    velocity = np.zeros_like(Y)
    kl_trace: list[float] = []

    for it in range(iterations):
        exaggerate = it < TSNE_EXAGGERATION_ITERS
        momentum = TSNE_MOMENTUM_EARLY if exaggerate else TSNE_MOMENTUM_LATE
        P_eff = P * TSNE_EXAGGERATION if exaggerate else P

        sq_norms = (Y**2).sum(axis=1)
        D_y = sq_norms[:, None] + sq_norms[None, :] - 2.0 * Y @ Y.T
        num = 1.0 / (1.0 + np.maximum(D_y, 0.0))
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()

        kl_trace.append(_kl_divergence(P, Q))

        PQ = (P_eff - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
        velocity = momentum * velocity - TSNE_LEARNING_RATE * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

    points = [ProjectionPoint(ids[i], float(Y[i, 0]), float(Y[i, 1])) for i in range(n)]
    return TsneResult(points=points, kl_trace=kl_trace)


def export_projection_csv(points: Sequence[ProjectionPoint]) -> str:
    lines = ["image_id,x,y"]
    lines += [f"{p.image_id},{p.x!r},{p.y!r}" for p in points]
    return "\n".join(lines)
