"""Embedding containers and cosine-similarity graph construction."""

from dataclasses import dataclass

import numpy as np

from ._validation import DataError


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Row-stacked embedding vectors with unique string ids."""

    ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        X = np.array(self.vectors, dtype=np.float64)
        if X.ndim != 2 or 0 in X.shape:
            raise DataError(f"embedding matrix must be non-empty 2-d, got shape {X.shape}")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != X.shape[0]:
            raise DataError(f"{len(ids)} ids for {X.shape[0]} vectors")
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise DataError(f"duplicate id {dup!r}")
        if not np.all(np.isfinite(X)):
            raise DataError("embedding matrix contains non-finite values")
        zero = np.flatnonzero(np.linalg.norm(X, axis=1) == 0)
        if zero.size:
            raise DataError(f"zero-norm embedding row {int(zero[0])} (id {ids[zero[0]]!r})")
        X.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", X)

    @classmethod
    def from_array(cls, X, prefix="n"):
        X = np.asarray(X)
        return cls(tuple(f"{prefix}{i}" for i in range(X.shape[0])), X)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class GraphRep:
    embeddings: EmbeddingSet
    adjacency: np.ndarray
    threshold: float

    @property
    def n_edges(self):
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))


def _matrix(e):
    if isinstance(e, EmbeddingSet):
        return e.vectors
    X = np.asarray(e, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d embedding matrix, got shape {X.shape}")
    return X


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DataError(f"zero-norm embedding row {int(np.flatnonzero(norms == 0)[0])}")
    return X / norms[:, None]


def cosine_similarity_matrix(a, b):
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``."""
    A, B = _matrix(a), _matrix(b)
    if A.shape[1] != B.shape[1]:
        raise DataError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.clip(_unit_rows(A) @ _unit_rows(B).T, -1.0, 1.0)


def build_graph(e, tau=0.1, binary=False):
    """Threshold pairwise cosine similarity into a weighted adjacency matrix.

    Edge ``(i, j)`` carries weight ``max(cos(x_i, x_j) - tau, 0)``; with
    ``binary=True`` every positive weight becomes 1. Self-loops are dropped.
    """
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [-1, 1], got {tau!r}")
    S = cosine_similarity_matrix(e, e)
    # exact symmetry regardless of matmul rounding
    S = np.triu(S, 1)
    S = S + S.T
    W = np.maximum(S - tau, 0.0)
    np.fill_diagonal(W, 0.0)
    if binary:
        W = (W > 0).astype(np.float64)
    if not isinstance(e, EmbeddingSet):
        e = EmbeddingSet.from_array(e)
    return GraphRep(e, W, float(tau))


def cross_cost_matrix(patches, labels):
    """Cosine distance ``1 - cos`` between every patch and every label."""
    return np.clip(1.0 - cosine_similarity_matrix(patches, labels), 0.0, 2.0)
