"""Candidate generation: p-stable LSH over representation means.

Records are hashed on their concatenated per-attribute mean vectors with
Gaussian random projections; the squared 2-Wasserstein distance between two
diagonal-Gaussian representations is the squared Euclidean distance of the
concatenated (mu, sigma) vectors and therefore never smaller than the squared
distance of the means alone, so Euclidean LSH on means is a sound blocking
surrogate. Probed candidates are reranked by the full distance (including
sigma); small indexes and underfull buckets fall back to exhaustive scans.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .vae import GaussianRepr

DEFAULT_N_TABLES = 16
DEFAULT_N_PROJECTIONS = 8
DEFAULT_TOP_K = 10
# Below this many indexed records, exhaustive ranking is cheaper and exact.
EXHAUSTIVE_FALLBACK_SIZE = 500


@dataclass(frozen=True)
class CandidatePair:
    """An unlabeled candidate with its cached per-attribute squared distances."""

    left_id: str
    right_id: str
    w2_per_attr: np.ndarray  # (m,)
    w2_total: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.left_id, self.right_id)


class LshIndex:
    """Euclidean LSH over concatenated representation means."""

    def __init__(
        self,
        ids: list[str],
        mus: np.ndarray,
        sigmas: np.ndarray,
        arity: int,
        seed: int = 0,
        n_tables: int = DEFAULT_N_TABLES,
        n_projections: int = DEFAULT_N_PROJECTIONS,
        bucket_width: float | None = None,
        exhaustive_below: int = EXHAUSTIVE_FALLBACK_SIZE,
    ):
        self.ids = ids
        self.mus = mus  # (n, m*k)
        self.sigmas = sigmas
        self.arity = arity
        self.n_tables = n_tables
        self.n_projections = n_projections
        n, dim = mus.shape
        rng = np.random.default_rng(seed)
        if bucket_width is None:
            bucket_width = _median_pairwise_distance(mus, rng) / 4.0
        if bucket_width <= 0:
            bucket_width = 1.0
        self.bucket_width = bucket_width
        self.exhaustive = n < exhaustive_below
        self.projections = rng.standard_normal((n_tables, n_projections, dim))
        self.offsets = rng.uniform(0.0, bucket_width, size=(n_tables, n_projections))
        self.tables: list[dict[tuple[int, ...], list[int]]] = []
        for t in range(n_tables):
            keys = np.floor(
                (mus @ self.projections[t].T + self.offsets[t]) / bucket_width
            ).astype(np.int64)
            buckets: dict[tuple[int, ...], list[int]] = {}
            for row, key in enumerate(map(tuple, keys)):
                buckets.setdefault(key, []).append(row)
            self.tables.append(buckets)

    def __len__(self) -> int:
        return len(self.ids)

    def _bucket_keys(self, mu: np.ndarray) -> list[tuple[int, ...]]:
        return [
            tuple(
                np.floor((self.projections[t] @ mu + self.offsets[t]) / self.bucket_width).astype(
                    np.int64
                )
            )
            for t in range(self.n_tables)
        ]

    def _candidate_rows(self, mu: np.ndarray, k: int) -> np.ndarray:
        if self.exhaustive:
            return np.arange(len(self.ids))
        found: set[int] = set()
        for t, key in enumerate(self._bucket_keys(mu)):
            found.update(self.tables[t].get(key, ()))
        if len(found) < k:  # probed buckets too sparse: fall back to a full scan
            return np.arange(len(self.ids))
        return np.fromiter(found, dtype=np.int64)

    def lookup(self, query: GaussianRepr, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
        """Top-k indexed ids ranked by full squared 2-Wasserstein distance."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        mu = query.concat_mu()
        sigma = query.concat_sigma()
        rows = self._candidate_rows(mu, k)
        dist = ((self.mus[rows] - mu) ** 2).sum(axis=1) + ((self.sigmas[rows] - sigma) ** 2).sum(
            axis=1
        )
        # Stable ordering: ties broken by id for reproducibility.
        order = np.lexsort((np.array([self.ids[r] for r in rows]), dist))[:k]
        return [(self.ids[rows[i]], float(dist[i])) for i in order]


def _median_pairwise_distance(mus: np.ndarray, rng: np.random.Generator, sample: int = 200) -> float:
    n = mus.shape[0]
    pick = rng.permutation(n)[: min(n, sample)]
    pts = mus[pick]
    sq = ((pts[:, np.newaxis, :] - pts[np.newaxis, :, :]) ** 2).sum(axis=2)
    upper = sq[np.triu_indices(len(pts), k=1)]
    if upper.size == 0:
        return 0.0
    return float(np.sqrt(np.median(upper)))


def _concat(reprs: Mapping[str, GaussianRepr]) -> tuple[list[str], np.ndarray, np.ndarray, int]:
    ids = list(reprs.keys())
    if not ids:
        raise ValueError("need at least one representation to index")
    arity = reprs[ids[0]].arity
    mus = np.stack([reprs[i].concat_mu() for i in ids])
    sigmas = np.stack([reprs[i].concat_sigma() for i in ids])
    return ids, mus, sigmas, arity


def build_index(
    reprs: Mapping[str, GaussianRepr],
    seed: int = 0,
    n_tables: int = DEFAULT_N_TABLES,
    n_projections: int = DEFAULT_N_PROJECTIONS,
    bucket_width: float | None = None,
    exhaustive_below: int = EXHAUSTIVE_FALLBACK_SIZE,
) -> LshIndex:
    """Hash every representation into all tables; deterministic given the seed."""
    ids, mus, sigmas, arity = _concat(reprs)
    return LshIndex(
        ids=ids,
        mus=mus,
        sigmas=sigmas,
        arity=arity,
        seed=seed,
        n_tables=n_tables,
        n_projections=n_projections,
        bucket_width=bucket_width,
        exhaustive_below=exhaustive_below,
    )


def candidate_pairs(
    left_reprs: Mapping[str, GaussianRepr],
    right_reprs: Mapping[str, GaussianRepr],
    k: int = DEFAULT_TOP_K,
    seed: int = 0,
) -> list[CandidatePair]:
    """The unlabeled pool: each left record paired with its k nearest right
    records, deduplicated, with per-attribute squared distances cached."""
    index = build_index(right_reprs, seed=seed)
    latent_dim = next(iter(left_reprs.values())).latent_dim
    out: dict[tuple[str, str], CandidatePair] = {}
    for left_id, repr_s in left_reprs.items():
        for right_id, _ in index.lookup(repr_s, k=k):
            if left_id == right_id and left_reprs is right_reprs:
                continue  # self-pair when deduplicating one table against itself
            key = (left_id, right_id)
            if left_reprs is right_reprs and (right_id, left_id) in out:
                continue
            if key in out:
                continue
            repr_t = right_reprs[right_id]
            dvec = (repr_s.mu - repr_t.mu) ** 2 + (repr_s.sigma - repr_t.sigma) ** 2
            per_attr = dvec.sum(axis=1)
            out[key] = CandidatePair(
                left_id=left_id,
                right_id=right_id,
                w2_per_attr=per_attr,
                w2_total=float(per_attr.sum()),
            )
    return list(out.values())


def neighbor_lists(
    left_reprs: Mapping[str, GaussianRepr],
    right_reprs: Mapping[str, GaussianRepr],
    k: int = DEFAULT_TOP_K,
    seed: int = 0,
) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    """Ranked top-k neighbor ids in both search directions.

    Returns (left id -> right neighbors, right id -> left neighbors); keeping
    the directions separate avoids id collisions between the two tables.
    """
    left_to_right: dict[str, list[str]] = {}
    right_index = build_index(right_reprs, seed=seed)
    for left_id, repr_s in left_reprs.items():
        left_to_right[left_id] = [rid for rid, _ in right_index.lookup(repr_s, k=k)]
    right_to_left: dict[str, list[str]] = {}
    left_index = build_index(left_reprs, seed=seed)
    for right_id, repr_t in right_reprs.items():
        right_to_left[right_id] = [lid for lid, _ in left_index.lookup(repr_t, k=k)]
    return left_to_right, right_to_left


def save_candidates(pairs: Sequence[CandidatePair], path: str | Path) -> None:
    """Export the candidate pool as CSV left_id,right_id,w2_total."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id", "w2_total"])
        for pair in pairs:
            writer.writerow([pair.left_id, pair.right_id, repr(pair.w2_total)])
