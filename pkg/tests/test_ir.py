"""Intermediate representation providers: LSA, embedding average, precomputed."""

import numpy as np
import pytest

from vaer.corpus import Record, Table
from vaer.ir import (
    EmbeddingTable,
    IRDimensionError,
    MissingIRError,
    PrecomputedIRs,
    encode_record_irs,
    export_irs,
    fit_lsa,
    ir_embedding_average,
    load_embeddings,
    load_precomputed_irs,
    table_irs,
)


def _tfidf_matrix(model, corpus):
    return np.stack([model._tfidf(s) for s in corpus])


class TestFitLsa:
    def test_identical_sentences_identical_irs(self):
        corpus = ["red apple pie", "red apple pie", "green tea", "black tea leaf"]
        model = fit_lsa(corpus, dim=2)
        a = model.value_ir("red apple pie")
        b = model.value_ir("red apple pie")
        np.testing.assert_array_equal(a, b)

    def test_rank_one_corpus_captured_by_one_factor(self):
        # 20 identical sentences over 30 distinct tokens: TF-IDF matrix is rank 1,
        # so one factor must capture (almost) the whole Frobenius norm.
        sent = " ".join(f"tok{i}" for i in range(30))
        corpus = [sent] * 20
        model = fit_lsa(corpus, dim=1)
        X = _tfidf_matrix(model, corpus)
        proj = X @ model.projection.T
        recon = proj @ model.projection
        assert np.linalg.norm(recon) >= 0.99 * np.linalg.norm(X)

    def test_dimension_error_proposes_max(self):
        with pytest.raises(IRDimensionError, match="maximum feasible dimension is 2"):
            fit_lsa(["a b", "c d"], dim=3)

    def test_projection_rows_orthonormal(self):
        rng = np.random.default_rng(5)
        corpus = [
            " ".join(f"w{rng.integers(0, 40)}" for _ in range(6)) for _ in range(50)
        ]
        model = fit_lsa(corpus, dim=8)
        gram = model.projection @ model.projection.T
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-6)

    def test_deterministic_across_fits(self):
        corpus = ["alpha beta", "beta gamma", "gamma delta", "delta alpha epsilon"]
        m1 = fit_lsa(corpus, dim=3)
        m2 = fit_lsa(corpus, dim=3)
        np.testing.assert_array_equal(m1.projection, m2.projection)
        np.testing.assert_array_equal(m1.idf, m2.idf)

    def test_empty_and_oov_values_map_to_zero(self):
        model = fit_lsa(["aa bb", "bb cc", "cc dd"], dim=2)
        np.testing.assert_array_equal(model.value_ir(""), np.zeros(2))
        np.testing.assert_array_equal(model.value_ir("zz yy"), np.zeros(2))

    @pytest.mark.parametrize("n_docs,n_terms,dim", [(20, 30, 4), (50, 80, 10), (50, 80, 25)])
    def test_projection_matches_dense_svd_dot_products(self, n_docs, n_terms, dim):
        # Oracle: dense SVD of the same TF-IDF matrix. The projected vectors
        # must preserve the pairwise dot products of the rank-d approximation.
        rng = np.random.default_rng(n_docs + n_terms + dim)
        corpus = [
            " ".join(f"w{rng.integers(0, n_terms)}" for _ in range(rng.integers(3, 9)))
            for _ in range(n_docs)
        ]
        model = fit_lsa(corpus, dim=dim)
        X = _tfidf_matrix(model, corpus)
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        approx = u[:, :dim] * s[:dim] @ vt[:dim]
        proj = X @ model.projection.T
        np.testing.assert_allclose(proj @ proj.T, approx @ approx.T, atol=1e-5)

    def test_cosine_ordering_on_crafted_corpus(self):
        corpus = [
            "coldplay mylo xyloto",
            "coldplay mylo",
            "coldplay paradise",
            "pink floyd",
            "pink floyd wall",
            "mylo xyloto",
        ]
        model = fit_lsa(corpus, dim=3)

        def cos(a, b):
            va, vb = model.value_ir(a), model.value_ir(b)
            return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))

        near = cos("coldplay mylo xyloto", "coldplay mylo")
        far = cos("coldplay mylo xyloto", "pink floyd")
        assert near > far


class TestEmbeddingAverage:
    def _table(self):
        return EmbeddingTable(vectors={"one": np.array([1.0, 0.0]), "two": np.array([0.0, 1.0])})

    def test_single_token_is_its_vector(self):
        np.testing.assert_array_equal(
            ir_embedding_average(self._table(), "one"), np.array([1.0, 0.0])
        )

    def test_two_tokens_arithmetic_mean(self):
        np.testing.assert_array_equal(
            ir_embedding_average(self._table(), "one two"), np.array([0.5, 0.5])
        )

    def test_all_oov_is_zero_vector(self):
        np.testing.assert_array_equal(
            ir_embedding_average(self._table(), "three four"), np.zeros(2)
        )

    def test_permutation_invariant(self):
        table = self._table()
        np.testing.assert_array_equal(table.value_ir("one two"), table.value_ir("two one"))

    def test_inconsistent_dimensions_rejected(self):
        with pytest.raises(IRDimensionError):
            EmbeddingTable(vectors={"a": np.zeros(2), "b": np.zeros(3)})

    def test_load_word2vec_text(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\nfoo 1.0 2.0 3.0\nbar 0.5 0.5 0.5\n")
        table = load_embeddings(path)
        assert table.dim == 3
        np.testing.assert_array_equal(table.vectors["foo"], [1.0, 2.0, 3.0])

    def test_load_without_header(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("foo 1.0 2.0\nbar 3.0 4.0\n")
        table = load_embeddings(path)
        assert set(table.vectors) == {"foo", "bar"}


def _tables():
    t1 = Table(
        name="left",
        arity=2,
        records=(Record("0", ("aa", "bb")), Record("1", ("cc", "dd"))),
    )
    return t1


class TestPrecomputed:
    def test_round_trip(self, tmp_path):
        table = _tables()
        emb = EmbeddingTable(
            vectors={
                "aa": np.array([1.0, 2.0]),
                "bb": np.array([3.0, 4.0]),
                "cc": np.array([0.25, 0.75]),
                "dd": np.array([1e-17, -5.5]),
            }
        )
        path = tmp_path / "irs.csv"
        export_irs([table], emb, path)
        pre = load_precomputed_irs(path)
        pre.validate(table)
        assert len(pre.irs) == len(table) * table.arity
        np.testing.assert_array_equal(
            pre.record_irs("left", table.records[0]), table_irs(table, emb)[0]
        )

    def test_missing_key_named(self, tmp_path):
        path = tmp_path / "irs.csv"
        path.write_text("table,record_id,attr_index,v0\nleft,0,0,1.0\nleft,0,1,2.0\nleft,1,0,3.0\n")
        pre = load_precomputed_irs(path)
        with pytest.raises(MissingIRError, match=r"\('left', '1', 1\)"):
            pre.validate(_tables())

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "irs.csv"
        path.write_text("table,record_id,attr_index,v0,v1\nleft,0,0,1.0,2.0\nleft,0,1,3.0\n")
        with pytest.raises(IRDimensionError, match="row 3"):
            load_precomputed_irs(path)

    def test_value_level_lookup_unsupported(self):
        pre = PrecomputedIRs(irs={("t", "0", 0): np.zeros(2)})
        with pytest.raises(NotImplementedError):
            pre.value_ir("anything")


class TestEncodeRecordIrs:
    def test_rows_follow_attribute_order(self):
        table = _tables()
        emb = EmbeddingTable(
            vectors={"aa": np.array([1.0, 0.0]), "bb": np.array([0.0, 1.0]),
                     "cc": np.array([2.0, 0.0]), "dd": np.array([0.0, 2.0])}
        )
        matrix = encode_record_irs(table.records[0], emb, "left")
        np.testing.assert_array_equal(matrix, [[1.0, 0.0], [0.0, 1.0]])

    def test_all_empty_values_zero_matrix(self):
        emb = EmbeddingTable(vectors={"x": np.ones(3)})
        record = Record("0", ("", ""))
        np.testing.assert_array_equal(encode_record_irs(record, emb), np.zeros((2, 3)))

    def test_duplicate_records_identical_matrices(self):
        model = fit_lsa(["aa bb", "cc dd", "aa cc"], dim=2)
        r1 = Record("0", ("aa bb", "cc"))
        r2 = Record("1", ("aa bb", "cc"))
        np.testing.assert_array_equal(
            encode_record_irs(r1, model), encode_record_irs(r2, model)
        )
