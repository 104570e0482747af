"""LSH candidate generation and distance-reranked lookup."""

import numpy as np
import pytest

from vaer.neighbors import (
    CandidatePair,
    build_index,
    candidate_pairs,
    neighbor_lists,
    save_candidates,
)
from vaer.vae import GaussianRepr


def _repr_from(mu_row: np.ndarray, sigma_value: float = 0.01, m: int = 2) -> GaussianRepr:
    k = mu_row.size // m
    mu = mu_row.reshape(m, k)
    return GaussianRepr(mu=mu, sigma=np.full((m, k), sigma_value))


def _clustered_reprs(rng, n_points, n_clusters, dim, spread=0.05, scale=3.0):
    centers = rng.standard_normal((n_clusters, dim)) * scale
    out = {}
    for i in range(n_points):
        c = i % n_clusters
        out[str(i)] = _repr_from(centers[c] + spread * rng.standard_normal(dim))
    return out


def _w2(a: GaussianRepr, b: GaussianRepr) -> float:
    return float(((a.mu - b.mu) ** 2).sum() + ((a.sigma - b.sigma) ** 2).sum())


class TestBuildIndex:
    def test_identical_mus_identical_bucket_keys(self):
        rng = np.random.default_rng(0)
        mu = rng.standard_normal(8)
        reprs = {"a": _repr_from(mu), "b": _repr_from(mu.copy())}
        index = build_index(reprs, seed=1, exhaustive_below=0)
        for table in index.tables:
            rows_together = [rows for rows in table.values() if len(rows) == 2]
            assert rows_together, "identical vectors must share every bucket"

    def test_index_covers_all_records_per_table(self):
        rng = np.random.default_rng(1)
        reprs = _clustered_reprs(rng, 30, 5, 8)
        index = build_index(reprs, seed=2, exhaustive_below=0)
        for table in index.tables:
            assert sum(len(rows) for rows in table.values()) == 30

    def test_same_seed_same_buckets(self):
        rng = np.random.default_rng(2)
        reprs = _clustered_reprs(rng, 25, 5, 8)
        i1 = build_index(reprs, seed=3, exhaustive_below=0)
        i2 = build_index(reprs, seed=3, exhaustive_below=0)
        assert [t.keys() for t in i1.tables] == [t.keys() for t in i2.tables]
        for t1, t2 in zip(i1.tables, i2.tables):
            assert t1 == t2


class TestLookup:
    def test_indexed_query_returns_itself_first(self):
        rng = np.random.default_rng(3)
        reprs = _clustered_reprs(rng, 20, 4, 8)
        index = build_index(reprs, seed=4)
        top_id, dist = index.lookup(reprs["7"], k=3)[0]
        assert top_id == "7"
        assert dist == 0.0

    def test_small_fixture_matches_brute_force(self):
        # 20-record fixture: exhaustive fallback must reproduce the full
        # squared-distance ranking exactly.
        rng = np.random.default_rng(4)
        reprs = _clustered_reprs(rng, 20, 4, 8)
        index = build_index(reprs, seed=5)
        agree = 0
        for qid, query in reprs.items():
            got = [rid for rid, _ in index.lookup(query, k=10)]
            want = sorted(reprs, key=lambda rid: (_w2(query, reprs[rid]), rid))[:10]
            agree += got == want
        assert agree >= 0.95 * len(reprs)

    def test_lsh_path_recall_against_exhaustive_ranking(self):
        # 1000 clustered records with the LSH tables live: recall@10 of the
        # probed lookup vs the exhaustive top-10 must stay >= 0.95.
        rng = np.random.default_rng(5)
        reprs = _clustered_reprs(rng, 1000, 80, 16)
        index = build_index(reprs, seed=6)
        assert not index.exhaustive
        hits = total = 0
        for qid in list(reprs)[:100]:
            got = {rid for rid, _ in index.lookup(reprs[qid], k=10)}
            want = set(sorted(reprs, key=lambda rid: (_w2(reprs[qid], reprs[rid]), rid))[:10])
            hits += len(got & want)
            total += len(want)
        assert hits / total >= 0.95

    def test_k_validation(self):
        rng = np.random.default_rng(6)
        reprs = _clustered_reprs(rng, 5, 2, 8)
        index = build_index(reprs)
        with pytest.raises(ValueError):
            index.lookup(reprs["0"], k=0)


class TestCandidatePairs:
    def _two_tables(self, rng, n=20):
        left = _clustered_reprs(rng, n, 5, 8)
        # right table: half are near-copies of left (planted duplicates)
        right = {}
        for i in range(n):
            if i < n // 2:
                src = left[str(i)]
                right[str(i)] = GaussianRepr(
                    mu=src.mu + 0.01 * rng.standard_normal(src.mu.shape), sigma=src.sigma
                )
            else:
                right[str(i)] = _repr_from(rng.standard_normal(8) * 3.0)
        return left, right

    def test_pool_size_bounded(self):
        rng = np.random.default_rng(7)
        left, right = self._two_tables(rng)
        pool = candidate_pairs(left, right, k=5)
        assert len(pool) <= len(left) * 5

    def test_planted_duplicates_present(self):
        rng = np.random.default_rng(8)
        left, right = self._two_tables(rng)
        pool_keys = {c.key for c in candidate_pairs(left, right, k=1)}
        for i in range(10):
            assert (str(i), str(i)) in pool_keys

    def test_pairs_unique(self):
        rng = np.random.default_rng(9)
        left, right = self._two_tables(rng)
        pool = candidate_pairs(left, right, k=5)
        keys = [c.key for c in pool]
        assert len(keys) == len(set(keys))

    def test_self_join_deduplicates_unordered(self):
        rng = np.random.default_rng(10)
        reprs = _clustered_reprs(rng, 12, 3, 8)
        pool = candidate_pairs(reprs, reprs, k=4)
        keys = {c.key for c in pool}
        for l, r in keys:
            assert l != r
            assert (r, l) not in keys

    def test_cached_distances_match_definition(self):
        rng = np.random.default_rng(11)
        left, right = self._two_tables(rng)
        pool = candidate_pairs(left, right, k=3)
        for cand in pool[:10]:
            expected = _w2(left[cand.left_id], right[cand.right_id])
            assert cand.w2_total == pytest.approx(expected)
            assert cand.w2_per_attr.sum() == pytest.approx(expected)


def test_save_candidates(tmp_path):
    pairs = [CandidatePair("a", "b", np.array([1.0, 2.0]), 3.0)]
    path = tmp_path / "pool.csv"
    save_candidates(pairs, path)
    assert path.read_text().splitlines() == ["left_id,right_id,w2_total", "a,b,3.0"]


def test_neighbor_lists_directions():
    rng = np.random.default_rng(12)
    left = _clustered_reprs(rng, 10, 2, 8)
    right = {k: GaussianRepr(mu=v.mu + 0.001, sigma=v.sigma) for k, v in left.items()}
    l2r, r2l = neighbor_lists(left, right, k=3)
    assert set(l2r) == set(left)
    assert set(r2l) == set(right)
    assert l2r["0"][0] == "0"
    assert r2l["0"][0] == "0"
