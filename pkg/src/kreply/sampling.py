"""K-Means over latent context vectors and the diverse latent-word choices.

Training-time sampling spreads the trials of one bag across clusters of
the candidate set's c_z vectors: clusters are visited in descending
probability mass and within a cluster one word is drawn proportionally
to the restricted p(z|x).  Decode-time selection clusters the top-N
words by p(z|x) and returns, for each of the largest K clusters, the
member with the highest probability.

All randomness flows through explicit seeds; candidates are sorted by
token id before clustering so results never depend on input order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

log = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-4


@dataclass
class ClusterModel:
    point_ids: list[int]
    vectors: np.ndarray           # (N, D)
    assignments: np.ndarray       # (N,) cluster index per point
    centroids: np.ndarray         # (K, D)
    counts: np.ndarray            # (K,) member counts
    inertia: float

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)


def _sq_dists(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = vectors[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    centroids = np.empty((k, vectors.shape[1]), dtype=np.float64)
    centroids[0] = vectors[int(rng.integers(n))]
    d2 = ((vectors - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[i] = vectors[int(rng.integers(n))]
            continue
        centroids[i] = vectors[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((vectors - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans(vectors: np.ndarray, k: int, seed, max_iter: int = DEFAULT_MAX_ITER,
           tol: float = DEFAULT_TOL, point_ids=None) -> ClusterModel:
    """Deterministic Lloyd iterations from a distance-weighted seeding.

    Effective cluster count is min(k, number of distinct vectors).  Empty
    clusters are repaired by stealing the farthest point from the largest
    cluster, which never increases the objective.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ContractError(f"kmeans needs a non-empty (N, D) array, got {vectors.shape}")
    if k < 1:
        raise ContractError(f"cluster count must be >= 1, got {k}")
    n = vectors.shape[0]
    if point_ids is None:
        point_ids = list(range(n))
    if len(point_ids) != n:
        raise ContractError("point_ids length does not match vector count")
    k = min(k, len(np.unique(vectors, axis=0)))

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(vectors, k, rng)
    assignments = np.zeros(n, dtype=np.int64)
    inertia = np.inf
    for _ in range(max_iter):
        d2 = _sq_dists(vectors, centroids)
        assignments = d2.argmin(axis=1)
        # repair: give each empty cluster the farthest point of the largest one
        for c in range(k):
            if not (assignments == c).any():
                counts = np.bincount(assignments, minlength=k)
                donor = int(counts.argmax())
                members = np.flatnonzero(assignments == donor)
                far = members[int(d2[members, donor].argmax())]
                centroids[c] = vectors[far]
                d2[:, c] = ((vectors - centroids[c]) ** 2).sum(axis=1)
                assignments = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assignments].sum())
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            new_centroids[c] = vectors[assignments == c].mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break
    d2 = _sq_dists(vectors, centroids)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    counts = np.bincount(assignments, minlength=k)
    return ClusterModel(point_ids=list(point_ids), vectors=vectors,
                        assignments=assignments, centroids=centroids,
                        counts=counts, inertia=inertia)


def _canonical_order(candidates, vectors, probs):
    order = np.argsort(np.asarray(candidates, dtype=np.int64), kind="stable")
    cand = [int(candidates[i]) for i in order]
    vecs = np.asarray(vectors, dtype=np.float64)[order]
    p = np.asarray(probs, dtype=np.float64)[order]
    total = p.sum()
    if total <= 0 or not np.isfinite(total):
        raise ContractError("candidate probabilities must have positive finite mass")
    return cand, vecs, p / total


def sample_training_latents(candidates, vectors, probs, k_trials: int, seed,
                            kmeans_k: int = 10) -> list[int]:
    """Ordered distinct latent words for the trials of one bag.

    Clusters the candidates' vectors into min(kmeans_k, |candidates|)
    groups, visits clusters by descending restricted probability mass,
    draws one word per visit proportionally to p(z|x) among the cluster's
    still-unsampled members, and reopens clusters round-robin until
    k_trials words are out.  Asking for more words than exist returns
    every candidate.
    """
    if k_trials < 1:
        raise ContractError(f"k_trials must be >= 1, got {k_trials}")
    cand, vecs, p = _canonical_order(candidates, vectors, probs)
    if k_trials > len(cand):
        log.info("k_trials %d exceeds candidate count %d; returning all",
                 k_trials, len(cand))
        k_trials = len(cand)

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    km_seed, draw_seed = ss.spawn(2)
    model = kmeans(vecs, min(kmeans_k, len(cand)), km_seed, point_ids=cand)
    rng = np.random.default_rng(draw_seed)

    mass = np.array([p[model.members(c)].sum() for c in range(model.k)])
    cluster_order = sorted(range(model.k), key=lambda c: (-mass[c], c))
    remaining = {c: list(model.members(c)) for c in cluster_order}

    chosen: list[int] = []
    while len(chosen) < k_trials:
        progressed = False
        for c in cluster_order:
            if len(chosen) >= k_trials:
                break
            pool = remaining[c]
            if not pool:
                continue
            weights = p[pool]
            total = weights.sum()
            if total <= 0:
                pick = 0  # all-zero restricted mass inside a cluster: take lowest id
            else:
                pick = int(rng.choice(len(pool), p=weights / total))
            chosen.append(cand[pool[pick]])
            pool.pop(pick)
            progressed = True
        if not progressed:
            break
    return chosen


def select_decode_latents(probs: np.ndarray, vector_fn, n_top: int, k: int,
                          seed) -> list[int]:
    """K diverse latent words for decoding.

    Takes the n_top ids by probability (ties to the lower id), builds
    their vectors with vector_fn, clusters into k groups, orders clusters
    by member count then total mass, and returns each cluster's most
    probable member (ties to the vector nearest the centroid, then the
    lower id).  The top-N pool is dominated by words the model gives
    negligible mass, so a geometric representative would usually be one
    of those; taking the probability argmax keeps the output on words
    the model actually proposes while the clustering still forces the
    K picks apart.  Fewer than k non-empty clusters yield a shorter list.
    """
    if k < 1 or n_top < k:
        raise ContractError(f"need n_top >= k >= 1, got n_top={n_top} k={k}")
    probs = np.asarray(probs, dtype=np.float64)
    pos = np.flatnonzero(probs > 0)
    if pos.size == 0:
        raise ContractError("no word has positive probability")
    ranked = pos[np.lexsort((pos, -probs[pos]))]
    top = sorted(int(i) for i in ranked[:n_top])
    vecs = np.stack([vector_fn(i) for i in top]).astype(np.float64)

    top_arr = np.array(top)
    model = kmeans(vecs, min(k, len(top)), seed, point_ids=top)
    mass = np.array([probs[top_arr[model.members(c)]].sum()
                     for c in range(model.k)])
    order = sorted(range(model.k), key=lambda c: (-model.counts[c], -mass[c], c))

    out: list[int] = []
    for c in order[:k]:
        members = model.members(c)
        d2 = ((model.vectors[members] - model.centroids[c]) ** 2).sum(axis=1)
        best = members[np.lexsort((top_arr[members], d2,
                                   -probs[top_arr[members]]))[0]]
        out.append(top[int(best)])
    return out
