"""Post-text vectors, PCA reduction, and per-user embedding features.

Vectors come from a pluggable provider: either a precomputed embedding
file produced by an external sentence encoder, or the built-in
deterministic fallback that feature-hashes character n-grams.  The
fallback uses only integer arithmetic, so its output is bit-identical
across runs and platforms.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import KIND_ORIGINAL, KIND_QUOTE, KIND_RETWEET
from .errors import SuspkitError
from .vectors import EmbeddingMatrix, read_emb1

KIND_ORDER = (KIND_ORIGINAL, KIND_RETWEET, KIND_QUOTE)

# FNV-1a 64-bit constants.
_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


class MissingEmbedding(SuspkitError):
    """An item id has no row in the precomputed embedding file."""


class DimensionMismatch(SuspkitError):
    pass


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, item_ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix: ...


class PrecomputedEmbeddings:
    """Provider backed by an embedding file aligned by item id."""

    def __init__(self, matrix: EmbeddingMatrix):
        self._matrix = matrix
        self._index = matrix.row_index()
        self.dim = matrix.dim

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedEmbeddings":
        return cls(read_emb1(path))

    def embed(self, item_ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix:
        rows = np.empty((len(item_ids), self.dim), dtype=np.float32)
        for i, item in enumerate(item_ids):
            try:
                rows[i] = self._matrix.vectors[self._index[item]]
            except KeyError:
                raise MissingEmbedding(f"no precomputed embedding for {item!r}") from None
        return EmbeddingMatrix(item_ids=list(item_ids), vectors=rows)


def _fnv1a_scalar(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class HashedNgramEncoder:
    """Deterministic fallback encoder: character 3-5-gram feature
    hashing over UTF-8 bytes, signed buckets, L2-normalized rows.

    Texts too short to yield any n-gram are hashed whole, so every row
    has unit norm.
    """

    def __init__(self, dim: int = 768, min_n: int = 3, max_n: int = 5):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.min_n = min_n
        self.max_n = max_n

    def _accumulate(self, hashes: np.ndarray, out: np.ndarray) -> None:
        buckets = (hashes % np.uint64(self.dim)).astype(np.int64)
        signs = 1.0 - 2.0 * (hashes >> np.uint64(63)).astype(np.float64)
        out += np.bincount(buckets, weights=signs, minlength=self.dim)

    def encode(self, text: str) -> np.ndarray:
        data = np.frombuffer(text.encode("utf-8"), dtype=np.uint8)
        out = np.zeros(self.dim)
        seen = False
        for n in range(self.min_n, self.max_n + 1):
            if len(data) < n:
                break
            windows = sliding_window_view(data, n)
            h = np.full(windows.shape[0], _FNV_OFFSET, dtype=np.uint64)
            for j in range(n):
                h = (h ^ windows[:, j].astype(np.uint64)) * _FNV_PRIME
            self._accumulate(h, out)
            seen = True
        if not seen:
            h = _fnv1a_scalar(text.encode("utf-8"))
            out[h % self.dim] = 1.0 - 2.0 * (h >> 63)
        norm = np.linalg.norm(out)
        return out / norm if norm else out

    def embed(self, item_ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix:
        rows = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            rows[i] = self.encode(text)
        return EmbeddingMatrix(item_ids=list(item_ids), vectors=rows)


def embed_documents(
    item_ids: Sequence[str], texts: Sequence[str], provider: EmbeddingProvider
) -> EmbeddingMatrix:
    if len(item_ids) != len(texts):
        raise ValueError("item_ids and texts differ in length")
    return provider.embed(item_ids, texts)


@dataclass
class PcaModel:
    mean: np.ndarray  # (dim_in,)
    components: np.ndarray  # (k, dim_in), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def dim_in(self) -> int:
        return int(self.mean.shape[0])

    @property
    def k(self) -> int:
        return int(self.components.shape[0])


def _sign_convention(components: np.ndarray) -> np.ndarray:
    # Largest-magnitude coordinate of each component made positive.
    out = components.copy()
    for i, comp in enumerate(out):
        j = int(np.argmax(np.abs(comp)))
        if comp[j] < 0:
            out[i] = -comp
    return out


def pca_fit(
    X: np.ndarray | EmbeddingMatrix,
    k: int,
    sample_cap: int = 200_000,
    seed: int = 0,
) -> PcaModel:
    """Fit the k leading principal components of the (centered) rows.

    Exact covariance eigen-decomposition for inputs up to 1024 dims;
    randomized subspace iteration above that.  Data with zero variance
    yields zero explained variance rather than an error.  Fitting uses
    a uniform row sample capped at sample_cap.
    """
    if isinstance(X, EmbeddingMatrix):
        X = X.vectors
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} out of range for {n}x{d} data")
    if n > sample_cap:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(n, size=sample_cap, replace=False))]
        n = sample_cap

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)

    if d <= 1024:
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][:k]
        variance = eigvals[order]
        components = eigvecs[:, order].T
    else:
        variance, components = _subspace_iteration(cov, k, seed)

    variance = np.clip(variance, 0.0, None)
    components = _sign_convention(components)
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def _subspace_iteration(
    cov: np.ndarray, k: int, seed: int, iters: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((cov.shape[0], k + 8)))
    for _ in range(iters):
        Q, _ = np.linalg.qr(cov @ Q)
    # Rayleigh-Ritz on the converged subspace.
    small = Q.T @ cov @ Q
    eigvals, eigvecs = np.linalg.eigh(small)
    order = np.argsort(eigvals)[::-1][:k]
    return eigvals[order], (Q @ eigvecs[:, order]).T


def pca_transform(model: PcaModel, X: np.ndarray | EmbeddingMatrix) -> np.ndarray:
    if isinstance(X, EmbeddingMatrix):
        X = X.vectors
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim_in:
        raise DimensionMismatch(
            f"expected {model.dim_in} input dims, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    return (X - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[1] != model.k:
        raise DimensionMismatch(f"expected {model.k} reduced dims")
    return T @ model.components + model.mean


_PCA_MAGIC = b"PCA1\n"


def save_pca(path: str | Path, model: PcaModel) -> None:
    header = json.dumps({"dim_in": model.dim_in, "k": model.k}).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(_PCA_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(model.mean, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.components, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.explained_variance, dtype="<f4").tobytes())


def load_pca(path: str | Path) -> PcaModel:
    with open(path, "rb") as fh:
        if fh.read(5) != _PCA_MAGIC:
            raise SuspkitError(f"{path}: not a PCA model file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        d, k = header["dim_in"], header["k"]
        mean = np.frombuffer(fh.read(d * 4), dtype="<f4").astype(np.float64)
        comps = np.frombuffer(fh.read(k * d * 4), dtype="<f4").astype(np.float64)
        var = np.frombuffer(fh.read(k * 4), dtype="<f4").astype(np.float64)
    return PcaModel(mean=mean, components=comps.reshape(k, d), explained_variance=var)


def aggregate_post_embeddings(
    post_ids: Sequence[str],
    post_kinds: Sequence[str],
    reduced: EmbeddingMatrix,
    index: dict[str, int] | None = None,
) -> np.ndarray:
    """Mean reduced post vector plus mean one-hot post-kind vector.

    A user with no posts gets an all-NaN sentinel row of the same width.
    """
    width = reduced.dim + len(KIND_ORDER)
    if not post_ids:
        return np.full(width, np.nan)
    if index is None:
        index = reduced.row_index()
    try:
        rows = [index[pid] for pid in post_ids]
    except KeyError as exc:
        raise MissingEmbedding(f"post {exc.args[0]!r} not in reduced matrix") from None
    out = np.empty(width)
    out[: reduced.dim] = reduced.vectors[rows].mean(axis=0)
    kinds = np.zeros(len(KIND_ORDER))
    for kind in post_kinds:
        kinds[KIND_ORDER.index(kind)] += 1
    out[reduced.dim :] = kinds / len(post_kinds)
    return out


def post_embedding_feature_names(dim: int) -> tuple[str, ...]:
    names = [f"post_vec_{i:03d}" for i in range(dim)]
    names += [f"post_kind_{kind}" for kind in KIND_ORDER]
    return tuple(names)
