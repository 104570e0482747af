"""Intermediate representations (IRs) of attribute values.

Each attribute value is treated as a short sentence and mapped to a dense
d-dimensional vector by one of three providers: a latent-semantic-analysis
model fitted on the corpus of all values, averaging of pre-trained word
embeddings, or import of vectors computed offline. All providers are
immutable after fit/load and deterministic, and map empty or fully
out-of-vocabulary values to the zero vector.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import svds

from .corpus import Record, Table, tokenize_value

# Above this element count the TF-IDF matrix stays sparse and truncated SVD
# runs via ARPACK instead of a dense factorization.
_DENSE_SVD_MAX_ELEMENTS = 2_000_000


class IRDimensionError(ValueError):
    """Raised when a requested or loaded IR dimension is infeasible."""


class MissingIRError(KeyError):
    """Raised when a precomputed-vector file does not cover all keys."""


class IRProvider:
    """Base interface: value -> d-dimensional vector, record -> (m, d) matrix."""

    kind: str = "base"
    dim: int = 0

    def value_ir(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def record_irs(self, table_name: str, record: Record) -> np.ndarray:
        """IR matrix of one record; row i represents attribute value i."""
        return np.stack([self.value_ir(v) for v in record.values])

    def fingerprint(self) -> str:
        raise NotImplementedError


def encode_record_irs(record: Record, provider: IRProvider, table_name: str = "") -> np.ndarray:
    """Encode one record into its m x d IR matrix."""
    return provider.record_irs(table_name, record)


def table_irs(table: Table, provider: IRProvider) -> np.ndarray:
    """Encode a whole table into an (n, m, d) tensor, record order preserved."""
    return np.stack([provider.record_irs(table.name, rec) for rec in table.records])


@dataclass
class LsaModel(IRProvider):
    """Truncated-SVD projection of TF-IDF sentence vectors.

    ``projection`` holds the top-d right singular vectors (d x |V|), with
    orthonormal rows. A sentence is projected as tfidf(sentence) @ projection.T.
    """

    vocabulary: dict[str, int]
    idf: np.ndarray
    projection: np.ndarray
    kind: str = "lsa"

    def __post_init__(self):
        self.dim = self.projection.shape[0]

    def _tfidf(self, text: str) -> np.ndarray:
        vec = np.zeros(len(self.vocabulary))
        for token in tokenize_value(text):
            idx = self.vocabulary.get(token)
            if idx is not None:
                vec[idx] += 1.0
        vec *= self.idf
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def value_ir(self, text: str) -> np.ndarray:
        return self.projection @ self._tfidf(text)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"lsa:{self.dim}:{len(self.vocabulary)}".encode())
        h.update(self.idf.tobytes())
        h.update(self.projection.tobytes())
        return h.hexdigest()


def fit_lsa(corpus: Sequence[str], dim: int) -> LsaModel:
    """Fit an LSA model on a corpus of sentences.

    TF-IDF uses raw counts, smoothed idf ln((1+N)/(1+df)) + 1, and l2 row
    normalization. ``dim`` must not exceed min(vocabulary size, number of
    sentences); the error message proposes the maximum feasible value.
    Factorization is deterministic: ARPACK runs from a fixed starting vector
    and singular-vector signs follow a largest-entry-positive convention.
    """
    if not corpus:
        raise ValueError("cannot fit LSA on an empty corpus")
    tokenized = [tokenize_value(s) for s in corpus]
    vocab_tokens = sorted({t for toks in tokenized for t in toks})
    if not vocab_tokens:
        raise ValueError("corpus contains no tokens")
    vocabulary = {t: i for i, t in enumerate(vocab_tokens)}

    n_docs, n_terms = len(corpus), len(vocabulary)
    max_dim = min(n_terms, n_docs)
    if dim < 1 or dim > max_dim:
        raise IRDimensionError(
            f"IR dimension {dim} infeasible for {n_docs} sentences x {n_terms} terms; "
            f"maximum feasible dimension is {max_dim}"
        )

    df = np.zeros(n_terms)
    rows, cols, vals = [], [], []
    for i, toks in enumerate(tokenized):
        counts: dict[int, float] = {}
        for t in toks:
            counts[vocabulary[t]] = counts.get(vocabulary[t], 0.0) + 1.0
        for j in counts:
            df[j] += 1.0
        if counts:
            idx = np.fromiter(counts.keys(), dtype=np.int64)
            cnt = np.fromiter(counts.values(), dtype=np.float64)
            rows.extend([i] * len(idx))
            cols.extend(idx.tolist())
            vals.extend(cnt.tolist())
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0

    matrix = csr_matrix((vals, (rows, cols)), shape=(n_docs, n_terms))
    matrix = matrix.multiply(idf[np.newaxis, :]).tocsr()
    row_norms = np.sqrt(matrix.multiply(matrix).sum(axis=1)).A1
    row_norms[row_norms == 0] = 1.0
    matrix = matrix.multiply(1.0 / row_norms[:, np.newaxis]).tocsr()

    if dim >= max_dim or n_docs * n_terms <= _DENSE_SVD_MAX_ELEMENTS:
        _, _, vt = np.linalg.svd(matrix.toarray(), full_matrices=False)
        vt = vt[:dim]
    else:
        v0 = np.full(min(matrix.shape), 1.0 / np.sqrt(min(matrix.shape)))
        _, s, vt = svds(matrix, k=dim, v0=v0)
        vt = vt[np.argsort(-s)]
    # Fix the sign indeterminacy of singular vectors for reproducibility.
    for row in vt:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return LsaModel(vocabulary=vocabulary, idf=idf, projection=np.ascontiguousarray(vt))


@dataclass
class EmbeddingTable(IRProvider):
    """Pre-trained token embeddings; a value's IR is the mean over its tokens."""

    vectors: dict[str, np.ndarray]
    dim: int = 0
    kind: str = "embedding"

    def __post_init__(self):
        if not self.dim:
            if not self.vectors:
                raise ValueError("embedding table is empty")
            self.dim = len(next(iter(self.vectors.values())))
        for token, vec in self.vectors.items():
            if len(vec) != self.dim:
                raise IRDimensionError(
                    f"token {token!r} has dimension {len(vec)}, expected {self.dim}"
                )

    def value_ir(self, text: str) -> np.ndarray:
        hits = [self.vectors[t] for t in tokenize_value(text) if t in self.vectors]
        if not hits:
            return np.zeros(self.dim)
        return np.mean(hits, axis=0)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"embedding:{self.dim}:{len(self.vectors)}".encode())
        for token in sorted(self.vectors):
            h.update(token.encode())
            h.update(self.vectors[token].tobytes())
        return h.hexdigest()


def ir_embedding_average(table: EmbeddingTable, value: str) -> np.ndarray:
    """Mean embedding of a value's in-vocabulary tokens (zero vector if none)."""
    return table.value_ir(value)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load word2vec-style text embeddings: one ``token v1 ... vD`` line each.

    An optional leading ``count dim`` header line is skipped.
    """
    vectors: dict[str, np.ndarray] = {}
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) == 2 and all(p.lstrip("-").isdigit() for p in first):
            pass  # header line
        elif first:
            vectors[first[0]] = np.array([float(x) for x in first[1:]])
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    return EmbeddingTable(vectors=vectors)


IRKey = tuple[str, str, int]  # (table name, record id, attribute index)


@dataclass
class PrecomputedIRs(IRProvider):
    """Vectors computed offline (e.g. by a contextual language model), keyed
    by (table, record id, attribute index)."""

    irs: dict[IRKey, np.ndarray]
    dim: int = 0
    kind: str = "precomputed"

    def __post_init__(self):
        if not self.dim:
            if not self.irs:
                raise ValueError("precomputed IR map is empty")
            self.dim = len(next(iter(self.irs.values())))

    def value_ir(self, text: str) -> np.ndarray:
        raise NotImplementedError("precomputed IRs are keyed by record, not by value")

    def record_irs(self, table_name: str, record: Record) -> np.ndarray:
        rows = []
        for i in range(len(record.values)):
            key = (table_name, record.id, i)
            if key not in self.irs:
                raise MissingIRError(f"no precomputed IR for {key}")
            rows.append(self.irs[key])
        return np.stack(rows)

    def validate(self, *tables: Table) -> None:
        """Check totality over all (record, attribute) keys of the tables."""
        missing = []
        for table in tables:
            for rec in table.records:
                for i in range(table.arity):
                    if (table.name, rec.id, i) not in self.irs:
                        missing.append((table.name, rec.id, i))
        if missing:
            shown = ", ".join(str(k) for k in missing[:10])
            raise MissingIRError(
                f"{len(missing)} (record, attribute) keys have no precomputed IR; "
                f"first missing: {shown}"
            )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"precomputed:{self.dim}:{len(self.irs)}".encode())
        for key in sorted(self.irs):
            h.update(repr(key).encode())
            h.update(self.irs[key].tobytes())
        return h.hexdigest()


def load_precomputed_irs(path: str | Path) -> PrecomputedIRs:
    """Load a precomputed-IR CSV with columns table,record_id,attr_index,v0..v{d-1}."""
    path = Path(path)
    irs: dict[IRKey, np.ndarray] = {}
    dim: int | None = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["table", "record_id", "attr_index"]:
            raise ValueError(
                f"{path}: expected header table,record_id,attr_index,v0..., got {header}"
            )
        for rownum, row in enumerate(reader, start=2):
            vec = np.array([float(x) for x in row[3:]])
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise IRDimensionError(
                    f"{path}: row {rownum}: vector dimension {len(vec)}, expected {dim}"
                )
            irs[(row[0], row[1], int(row[2]))] = vec
    if dim is None:
        raise ValueError(f"{path}: no vectors found")
    return PrecomputedIRs(irs=irs, dim=dim)


def export_irs(tables: Sequence[Table], provider: IRProvider, path: str | Path) -> None:
    """Write every (record, attribute) IR of the tables to the precomputed format."""
    dim = provider.dim
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["table", "record_id", "attr_index"] + [f"v{i}" for i in range(dim)])
        for table in tables:
            for rec in table.records:
                matrix = provider.record_irs(table.name, rec)
                for i in range(table.arity):
                    writer.writerow(
                        [table.name, rec.id, i] + [repr(float(x)) for x in matrix[i]]
                    )
