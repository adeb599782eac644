"""Filter selection within one layer.

The main selector is recommendation-based: a row-normalized similarity
matrix over the layer's filters turns each filter into a recommender of
its k closest peers, and the filters kept are those recommended by every
filter in the layer (the intersection of all k-nearest-neighbor sets).
k starts at the target count and grows until the intersection is large
enough; overshoot is trimmed by total in-similarity (column sums).

Three baseline selectors (largest l1 norm, uniform random, k-means
medoids) share the same output type so they can be swapped in under an
identical pruned structure.

Randomized selectors draw from NumPy's PCG64 generator seeded with the
explicit seed argument; there is no hidden global state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError

SELECTOR_NAMES = ("rnf", "l1", "random", "kmeans")


@dataclass(frozen=True)
class SelectionResult:
    """Kept filter indices for one layer, plus how they were found."""

    kept: tuple[int, ...]  # strictly increasing
    selector: str
    final_k: int | None = None
    trimmed: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "kept": list(self.kept),
            "selector": self.selector,
            "final_k": self.final_k,
            "trimmed": self.trimmed,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SelectionResult":
        return cls(
            kept=tuple(int(i) for i in doc["kept"]),
            selector=str(doc["selector"]),
            final_k=None if doc.get("final_k") is None else int(doc["final_k"]),
            trimmed=int(doc.get("trimmed", 0)),
            seed=None if doc.get("seed") is None else int(doc["seed"]),
        )


def _check_filters(filters: np.ndarray) -> np.ndarray:
    filters = np.asarray(filters, dtype=np.float64)
    if filters.ndim != 2 or filters.shape[0] < 1 or filters.shape[1] < 1:
        raise UsageError(f"expected an (n, d) filter matrix, got shape {filters.shape}")
    if not np.isfinite(filters).all():
        raise DataError("filter matrix contains non-finite values")
    return filters


def _check_target(target: int, n: int) -> None:
    if not 1 <= target <= n:
        raise UsageError(f"target filter count {target} outside [1, {n}]")


def similarity_matrix(filters: np.ndarray) -> np.ndarray:
    """Row-stochastic closeness matrix S of a layer's flattened filters.

    S[j, h] = exp(-D2(j, h)) / sum_g exp(-D2(j, g)) with D the Euclidean
    distance.  Each row is shifted by its smallest squared distance before
    exponentiation; the factor cancels in the normalization, so values are
    unchanged while huge distances cannot underflow the whole row.
    """
    filters = _check_filters(filters)
    n = filters.shape[0]
    d2 = np.empty((n, n), dtype=np.float64)
    for j in range(n):
        diff = filters - filters[j]
        d2[j] = np.einsum("nd,nd->n", diff, diff)
    d2 -= d2.min(axis=1, keepdims=True)
    sim = np.exp(-d2)
    sim /= sim.sum(axis=1, keepdims=True)
    return sim


def closeness_rank(sim: np.ndarray, j: int, h: int) -> int:
    """1 plus the number of filters strictly closer to j than h is.

    Ties share the better (smaller) rank; the rank of j with respect to
    itself is 1 unless a duplicate filter ties it.
    """
    row = sim[j]
    return 1 + int((row > row[h]).sum())


def _rank_matrix(sim: np.ndarray) -> np.ndarray:
    """ranks[j, h] = closeness_rank(sim, j, h) for all pairs, O(n^2 log n)."""
    n = sim.shape[0]
    ranks = np.empty((n, n), dtype=np.int64)
    for j in range(n):
        row = sim[j]
        ordered = np.sort(row)[::-1]
        # strictly-greater count = position in the descending sort
        ranks[j] = np.searchsorted(-ordered, -row, side="left") + 1
    return ranks


def knn_set(sim: np.ndarray, j: int, k: int) -> set[int]:
    """Indices whose closeness rank with respect to filter j is <= k.

    Contains j itself; ties can push the size above k.
    """
    n = sim.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k={k} outside [1, {n}]")
    row = sim[j]
    ranks = 1 + (row[None, :] < row[:, None]).sum(axis=0)
    return set(np.flatnonzero(ranks <= k).tolist())


def reciprocal_intersection(sim: np.ndarray, k: int) -> set[int]:
    """Filters lying in the k-nearest-neighbor set of every filter."""
    n = sim.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k={k} outside [1, {n}]")
    ranks = _rank_matrix(sim)
    return set(np.flatnonzero(ranks.max(axis=0) <= k).tolist())


def rnf_select(filters: np.ndarray, target: int) -> SelectionResult:
    """Keep ``target`` filters by growing the reciprocal intersection.

    Starting at k = target, k is incremented until the intersection of
    all filters' k-NN sets holds at least ``target`` members.  Overshoot
    (possible because ties enter whole rank groups at once) is trimmed to
    the filters with the largest column sums of S, lower index winning
    ties, so the most universally recommended filters survive.
    """
    filters = _check_filters(filters)
    n = filters.shape[0]
    _check_target(target, n)
    sim = similarity_matrix(filters)
    ranks = _rank_matrix(sim)
    worst_rank = ranks.max(axis=0)  # member of every k-NN set iff worst_rank <= k

    k = target
    members = np.flatnonzero(worst_rank <= k)
    while members.size < target:
        k += 1
        members = np.flatnonzero(worst_rank <= k)

    trimmed = int(members.size) - target
    if trimmed:
        column_pull = sim.sum(axis=0)[members]
        # stable sort on descending pull keeps lower indices first on ties
        order = np.argsort(-column_pull, kind="stable")
        members = members[order[:target]]
    kept = tuple(sorted(int(i) for i in members))
    return SelectionResult(kept=kept, selector="rnf", final_k=k, trimmed=trimmed)


def l1_select(filters: np.ndarray, target: int) -> SelectionResult:
    """Keep the ``target`` filters with the largest l1 norms."""
    filters = _check_filters(filters)
    _check_target(target, filters.shape[0])
    norms = np.abs(filters).sum(axis=1)
    order = np.argsort(-norms, kind="stable")
    kept = tuple(sorted(int(i) for i in order[:target]))
    return SelectionResult(kept=kept, selector="l1")


def random_select(filters: np.ndarray, target: int, seed: int) -> SelectionResult:
    """Keep a uniform sample of ``target`` filters without replacement."""
    filters = _check_filters(filters)
    n = filters.shape[0]
    _check_target(target, n)
    rng = np.random.default_rng(seed)
    picked = rng.choice(n, size=target, replace=False)
    kept = tuple(sorted(int(i) for i in picked))
    return SelectionResult(kept=kept, selector="random", seed=seed)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            choice = int(rng.choice(n, p=probs))
        else:
            # all remaining distances zero (duplicates): first untouched point
            choice = int(np.flatnonzero(d2 == 0)[0]) if (d2 == 0).any() else 0
        centroids[i] = points[choice]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Seeded k-means++ init then Lloyd iterations.

    Stops after ``max_iter`` rounds or when the relative inertia change
    drops below 1e-6.  Returns (centroids, labels, inertia history).
    """
    centroids = _kmeans_pp_init(points, k, rng)
    history: list[float] = []
    labels = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(points.shape[0]), labels].sum())
        history.append(inertia)
        new_centroids = centroids.copy()
        for c in range(k):
            mask = labels == c
            if mask.any():
                new_centroids[c] = points[mask].mean(axis=0)
        if len(history) >= 2:
            prev = history[-2]
            if prev == 0 or abs(prev - inertia) / max(prev, 1e-300) < 1e-6:
                centroids = new_centroids
                break
        centroids = new_centroids
    return centroids, labels, history


def kmeans_select(filters: np.ndarray, target: int, seed: int) -> SelectionResult:
    """Keep the filter nearest each of ``target`` k-means centroids.

    Deterministic for a given seed; collisions (two centroids landing on
    the same nearest filter) fall back to the next-nearest unused filter,
    so exactly ``target`` distinct indices come back.
    """
    filters = _check_filters(filters)
    n = filters.shape[0]
    _check_target(target, n)
    rng = np.random.default_rng(seed)
    centroids, _, _ = _lloyd(filters, target, rng)
    taken: set[int] = set()
    for c in range(target):
        d2 = ((filters - centroids[c]) ** 2).sum(axis=1)
        # ties by lower index, occupied filters get re-picked next-nearest
        for idx in np.argsort(d2, kind="stable"):
            if int(idx) not in taken:
                taken.add(int(idx))
                break
    kept = tuple(sorted(taken))
    return SelectionResult(kept=kept, selector="kmeans", seed=seed)


def select(
    filters: np.ndarray, target: int, selector: str, seed: int | None = None
) -> SelectionResult:
    """Dispatch to one of the named selectors."""
    if selector == "rnf":
        return rnf_select(filters, target)
    if selector == "l1":
        return l1_select(filters, target)
    if selector == "random":
        return random_select(filters, target, 0 if seed is None else seed)
    if selector == "kmeans":
        return kmeans_select(filters, target, 0 if seed is None else seed)
    raise UsageError(f"unknown selector {selector!r}; expected one of {SELECTOR_NAMES}")
