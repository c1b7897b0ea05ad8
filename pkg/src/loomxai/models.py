"""Pluggable classifier/embedding boundary and geometric queries.

`ClassifierAdapter` is the extension point for real models; `ToyClassifier`
is the deterministic desk-scale implementation used by the demo widgets and
tests. The default projector is exact PCA rather than UMAP: deterministic,
dependency-light, and out-of-sample transform is just the fitted linear map.
UMAP (or anything else with fit/transform) plugs in through the same
projector interface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .dataset import TextDataset

# FNV-1a 32-bit parameters; fixed so token buckets are reproducible across
# platforms and implementations.
FNV_OFFSET_BASIS = 0x811C9DC5
FNV_PRIME = 0x01000193

DEFAULT_DIM = 64
MAX_PCA_DIM = 256

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class NoLabels(Exception):
    pass


class EmptyInput(Exception):
    pass


class TooFewPoints(Exception):
    pass


class DimensionTooLarge(Exception):
    def __init__(self, d: int) -> None:
        super().__init__(f"dimension {d} exceeds the exact-eigendecomposition cap {MAX_PCA_DIM}")
        self.d = d


class BadK(Exception):
    def __init__(self, k: int, n: int) -> None:
        super().__init__(f"k={k} outside [1, {n}]")


class ClassifierAdapter(Protocol):
    """Model boundary: text in, vectors and labels out.

    embed must be deterministic per text; predict's label must be one of
    labels(); scores must be finite.
    """

    def embed(self, text: str) -> np.ndarray: ...

    def predict(self, text: str) -> dict[str, Any]: ...

    def labels(self) -> list[str]: ...


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs (underscore excluded)."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a_32(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def token_bucket(token: str, dim: int) -> int:
    return fnv1a_32(token.encode("utf-8")) % dim


@dataclass(frozen=True)
class ToyClassifier:
    """Centroid classifier over hashed bag-of-words embeddings."""

    dim: int
    centroids: Mapping[str, np.ndarray]  # label -> unit (or zero) vector

    def labels(self) -> list[str]:
        return sorted(self.centroids)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            vec[token_bucket(token, self.dim)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def predict(self, text: str) -> dict[str, Any]:
        if not tokenize(text):
            raise EmptyInput("no tokens in input")
        vec = self.embed(text)
        scores = {label: _cosine(vec, c) for label, c in self.centroids.items()}
        best = min(scores, key=lambda label: (-scores[label], label))
        return {"label": best, "scores": scores}


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def toy_fit(ds: TextDataset, dim: int = DEFAULT_DIM) -> ToyClassifier:
    """Per-class centroid = L2-normalized mean of that class's text embeddings."""
    stub = ToyClassifier(dim=dim, centroids={})
    by_label: dict[str, list[np.ndarray]] = {}
    for record in ds.records:
        if record.label is None:
            continue
        by_label.setdefault(record.label, []).append(stub.embed(record.text))
    if not by_label:
        raise NoLabels("dataset has no labeled records")
    centroids = {}
    for label, vectors in by_label.items():
        mean = np.mean(vectors, axis=0)
        norm = np.linalg.norm(mean)
        centroids[label] = mean / norm if norm > 0 else mean
    return ToyClassifier(dim=dim, centroids=centroids)


class PcaProjector:
    """Exact top-2 PCA with deterministic sign convention.

    Missing principal directions of rank-deficient data are zero-filled, so
    degenerate inputs still produce well-defined coordinates.
    """

    def __init__(self, mean: np.ndarray, components: np.ndarray, coords: np.ndarray) -> None:
        self._mean = mean
        self._components = components  # d x 2
        self._coords = coords

    def transform(self, vector: Sequence[float] | np.ndarray) -> np.ndarray:
        v = np.asarray(vector, dtype=float)
        return (v - self._mean) @ self._components

    def fitted_coords(self) -> np.ndarray:
        return self._coords.copy()


def pca_fit(vectors: Sequence[Sequence[float]] | np.ndarray) -> PcaProjector:
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2:
        raise ValueError("vectors must be a 2-D array")
    n, d = x.shape
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    if d > MAX_PCA_DIM:
        raise DimensionTooLarge(d)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:2]
    top_vals = eigvals[order]
    top_vecs = eigvecs[:, order]
    components = np.zeros((d, 2))
    max_val = float(top_vals[0]) if top_vals.size else 0.0
    tol = max(max_val, 0.0) * 1e-10
    for j in range(min(2, top_vals.size)):
        if top_vals[j] <= tol:
            continue  # rank-deficient direction stays zero
        component = top_vecs[:, j]
        pivot = int(np.argmax(np.abs(component)))
        if component[pivot] < 0:
            component = -component
        components[:, j] = component
    coords = centered @ components
    return PcaProjector(mean=mean, components=components, coords=coords)


def knn(
    coords: Sequence[Sequence[float]] | np.ndarray,
    query: Sequence[float] | np.ndarray,
    k: int,
) -> list[int]:
    """Indices of the k nearest points by Euclidean distance, distance ties
    broken by ascending index."""
    pts = np.asarray(coords, dtype=float)
    n = len(pts)
    if not 1 <= k <= n:
        raise BadK(k, n)
    q = np.asarray(query, dtype=float)
    d2 = np.sum((pts - q) ** 2, axis=1)
    return sorted(range(n), key=lambda i: (d2[i], i))[:k]


def points_in_rect(
    coords: Sequence[Sequence[float]] | np.ndarray,
    rect: Mapping[str, float],
) -> list[int]:
    """Indices inside the rectangle, boundary inclusive, ascending order.
    Corners may arrive in any order; they are normalized first."""
    x0, x1 = sorted((float(rect["x0"]), float(rect["x1"])))
    y0, y1 = sorted((float(rect["y0"]), float(rect["y1"])))
    out = []
    for i, (x, y) in enumerate(np.asarray(coords, dtype=float)):
        if x0 <= x <= x1 and y0 <= y <= y1:
            out.append(i)
    return out
