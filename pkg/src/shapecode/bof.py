"""Bag-of-features channel: dense gradient-orientation descriptors, k-means vocabulary,
hard vector quantization into L1-normalized histograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionError
from .projection import ViewSet

N_CELLS = 4
N_BINS = 8
DESCRIPTOR_DIM = N_CELLS * N_CELLS * N_BINS
CLAMP = 0.2


@dataclass(frozen=True)
class DescriptorBag:
    """All local descriptors of one model, pooled over its views.

    Row ``k`` of ``descriptors`` came from view ``view_index[k]``.
    """

    model_id: str
    descriptors: np.ndarray
    view_index: np.ndarray

    def __len__(self):
        return len(self.descriptors)


def orientation_histogram(image):
    """Per-pixel gradient magnitude split over the two nearest of 8 orientation bins.

    Returns an array of shape ``(H, W, 8)``. Orientation is ``atan2(d/drow, d/dcol)``.
    """
    gy, gx = np.gradient(np.asarray(image, dtype=np.float64))
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    pos = theta / (2 * np.pi / N_BINS)
    lower = np.floor(pos)
    frac = pos - lower
    b0 = lower.astype(np.int64) % N_BINS
    b1 = (b0 + 1) % N_BINS
    out = np.zeros(image.shape + (N_BINS,))
    rows, cols = np.indices(image.shape)
    np.add.at(out, (rows, cols, b0), mag * (1.0 - frac))
    np.add.at(out, (rows, cols, b1), mag * frac)
    return out


def _gaussian_window(patch_size):
    centre = (patch_size - 1) / 2.0
    sigma = patch_size / 2.0
    r = np.arange(patch_size) - centre
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return np.outer(g, g)


def normalize_descriptor(raw):
    """L2-normalize, clamp at 0.2, renormalize. Rows with zero norm stay zero."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    out = np.divide(raw, norm, out=np.zeros_like(raw), where=norm > 0)
    out = np.minimum(out, CLAMP)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return np.divide(out, norm, out=np.zeros_like(out), where=norm > 0)


def image_descriptors(image, grid_step=8, patch_size=16, normalize=True):
    """Descriptors on a regular grid of patches that touch the foreground.

    Returns ``(descriptors, keep)``: the 128-D rows for the kept patches and a
    boolean grid marking which patch positions produced one. Patches with no
    nonzero pixel or with zero gradient everywhere are skipped.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if patch_size > min(h, w) or patch_size % N_CELLS:
        raise ValueError(f"patch_size {patch_size} must be a multiple of {N_CELLS} "
                         f"and fit inside a {h}x{w} image")
    if grid_step < 1:
        raise ValueError("grid_step must be >= 1")
    hist = orientation_histogram(image)
    window = _gaussian_window(patch_size)
    cell = patch_size // N_CELLS
    # (ny, nx, 8, P, P) on the subsampled grid
    patches = sliding_window_view(hist, (patch_size, patch_size), axis=(0, 1))[::grid_step, ::grid_step]
    fg = sliding_window_view(image != 0, (patch_size, patch_size))[::grid_step, ::grid_step].any(axis=(2, 3))
    ny, nx = patches.shape[:2]
    weighted = patches * window
    cells = weighted.reshape(ny, nx, N_BINS, N_CELLS, cell, N_CELLS, cell).sum(axis=(4, 6))
    raw = cells.transpose(0, 1, 3, 4, 2).reshape(ny, nx, DESCRIPTOR_DIM)
    keep = fg & (raw.sum(axis=2) > 0)
    raw = raw[keep]
    return (normalize_descriptor(raw) if normalize else raw), keep


def extract_descriptors(view_set, grid_step=8, patch_size=16):
    """Pool the grid descriptors of every view of one model into a single bag."""
    if isinstance(view_set, ViewSet):
        model_id, stack = view_set.model_id, view_set.to_array()
    else:
        model_id, stack = "", np.asarray(view_set, dtype=np.float64)
    rows, views = [], []
    for k, image in enumerate(stack):
        desc, _ = image_descriptors(image, grid_step, patch_size)
        rows.append(desc)
        views.append(np.full(len(desc), k, dtype=np.int64))
    descriptors = np.concatenate(rows) if rows else np.zeros((0, DESCRIPTOR_DIM))
    view_index = np.concatenate(views) if views else np.zeros(0, dtype=np.int64)
    return DescriptorBag(model_id, descriptors.reshape(-1, DESCRIPTOR_DIM), view_index)


def squared_distances(X, centroids):
    """``||x - c||^2`` for every row pair, clipped at 0."""
    d = (X ** 2).sum(axis=1)[:, None] - 2.0 * X @ centroids.T + (centroids ** 2).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plus_plus(X, k, rng):
    """D^2-weighted seeding; the first centre is drawn uniformly."""
    n = len(X)
    centers = [int(rng.integers(n))]
    closest = squared_distances(X, X[centers[0]][None])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # remaining points all coincide with a centre
            free = np.setdiff1d(np.arange(n), centers)
            idx = int(rng.choice(free))
        centers.append(idx)
        closest = np.minimum(closest, squared_distances(X, X[idx][None])[:, 0])
    return X[centers].copy()


@dataclass(frozen=True)
class Vocabulary:
    centroids: np.ndarray
    seed: int = 0
    n_iter: int = 0
    distortions: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64)
        if c.ndim != 2 or len(c) < 1:
            raise DimensionError("centroids must be a non-empty 2-D array")
        if not np.isfinite(c).all():
            raise ValueError("centroids must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def size(self):
        return len(self.centroids)

    def assign(self, X):
        """Index of the nearest centroid per row (lowest index on ties)."""
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.centroids.shape[1])
        return np.argmin(squared_distances(X, self.centroids), axis=1)


def lloyd(X, centroids, max_iter=100, tol=1e-6):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, distortions, n_iter)`` where ``distortions``
    holds the mean squared distance after each assignment step. Empty
    clusters keep their previous centroid.
    """
    centroids = np.array(centroids, dtype=np.float64)
    distortions = []
    labels = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = squared_distances(X, centroids)
        labels = np.argmin(d, axis=1)
        distortions.append(float(d[np.arange(len(X)), labels].mean()))
        counts = np.bincount(labels, minlength=len(centroids))
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        new = centroids.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    return centroids, labels, distortions, n_iter


def build_vocabulary(descriptors, k=1500, seed=0, max_iter=100, tol=1e-6, max_samples=100_000):
    """k-means++ seeded Lloyd clustering of (a uniform sample of) ``descriptors``."""
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("descriptors must be a 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    if len(X) > max_samples:
        X = X[np.sort(rng.choice(len(X), max_samples, replace=False))]
    if len(X) < k:
        raise ValueError(f"need at least {k} descriptors to build {k} words, got {len(X)}")
    centroids = kmeans_plus_plus(X, k, rng)
    centroids, _, distortions, n_iter = lloyd(X, centroids, max_iter, tol)
    return Vocabulary(centroids, seed, n_iter, tuple(distortions))


@dataclass(frozen=True)
class BofHistogram:
    model_id: str
    values: np.ndarray
    empty: bool = False


def quantize(descriptors, vocab, model_id=None):
    """Hard-assign each descriptor to its nearest word and L1-normalize the counts.

    A model without descriptors gets the uniform histogram and ``empty=True``.
    """
    if isinstance(descriptors, DescriptorBag):
        model_id = descriptors.model_id if model_id is None else model_id
        descriptors = descriptors.descriptors
    X = np.asarray(descriptors, dtype=np.float64).reshape(-1, vocab.centroids.shape[1])
    if len(X) == 0:
        return BofHistogram(model_id or "", np.full(vocab.size, 1.0 / vocab.size), True)
    counts = np.bincount(vocab.assign(X), minlength=vocab.size).astype(np.float64)
    return BofHistogram(model_id or "", counts / counts.sum(), False)


def bof_distance(h1, h2):
    """L1 distance between two histograms."""
    a = h1.values if isinstance(h1, BofHistogram) else np.asarray(h1, dtype=np.float64)
    b = h2.values if isinstance(h2, BofHistogram) else np.asarray(h2, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"histograms differ in size: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def histogram_distance_matrix(histograms):
    H = np.asarray(histograms, dtype=np.float64)
    return np.abs(H[:, None, :] - H[None, :, :]).sum(axis=2)


def _as_bags(view_sets, grid_step, patch_size):
    bags = []
    for vs in view_sets:
        bags.append(vs if isinstance(vs, DescriptorBag) else extract_descriptors(vs, grid_step, patch_size))
    return bags


class BagOfFeatures(TransformerMixin, BaseEstimator):
    """Visual-word histograms of depth-image view sets.

    ``fit`` and ``transform`` take a sequence of ViewSet objects, of
    ``(n_views, H, W)`` arrays, or of precomputed DescriptorBag objects.

    Parameters
    ----------
    n_words : int, default=1500
    grid_step, patch_size : int, default=8, 16
    max_samples : int, default=100000
        Descriptors sampled (uniformly, seeded) for clustering.
    max_iter : int, default=100
    tol : float, default=1e-6
        Stop when no centroid moves further than this.
    random_state : int or None
    """

    def __init__(self, n_words=1500, grid_step=8, patch_size=16, max_samples=100_000,
                 max_iter=100, tol=1e-6, random_state=None):
        self.n_words = n_words
        self.grid_step = grid_step
        self.patch_size = patch_size
        self.max_samples = max_samples
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        bags = _as_bags(X, self.grid_step, self.patch_size)
        pooled = np.concatenate([b.descriptors for b in bags])
        self.vocabulary_ = build_vocabulary(pooled, self.n_words, self.random_state or 0,
                                            self.max_iter, self.tol, self.max_samples)
        self.n_features_in_ = DESCRIPTOR_DIM
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        bags = _as_bags(X, self.grid_step, self.patch_size)
        self.empty_models_ = [b.model_id for b in bags if len(b) == 0]
        return np.stack([quantize(b, self.vocabulary_).values for b in bags])
