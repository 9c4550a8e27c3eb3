"""Code sets and the mean-of-minima set-to-set distance between shapes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionError
from .validation import check_codes


@dataclass(frozen=True)
class CodeSet:
    model_id: str
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.float64)
        if codes.ndim != 2:
            raise DimensionError(f"codes must be (n_views, code_dim), got {codes.shape}")
        if not np.isfinite(codes).all():
            raise ValueError("codes must be finite")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def n_views(self):
        return self.codes.shape[0]

    @property
    def code_dim(self):
        return self.codes.shape[1]


@dataclass(frozen=True)
class DistanceMatrix:
    """Square matrix of shape distances; row = query, column = candidate.

    Not necessarily symmetric.
    """

    ids: tuple
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        ids = tuple(str(i) for i in self.ids)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] != len(ids):
            raise DimensionError(f"{values.shape} matrix does not match {len(ids)} ids")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("distances must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return len(self.ids)


def _check_p(p):
    if not p >= 1:
        raise ValueError(f"norm order p must be >= 1, got {p}")


def pairwise_code_distance(a, b, p=2):
    """p-norm of ``a - b``."""
    _check_p(p)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"code vectors differ in shape: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    if np.isinf(p):
        return float(diff.max(initial=0.0))
    return float(np.sum(diff ** p) ** (1.0 / p))


def _codes(x):
    return x.codes if isinstance(x, CodeSet) else np.asarray(x, dtype=np.float64)


def _cross(a, b, p):
    if np.isinf(p):
        return cdist(a, b, "chebyshev")
    if p == 2:
        return cdist(a, b, "euclidean")
    return cdist(a, b, "minkowski", p=p)


def set_distance(a, b, p=2):
    """Average over the codes of ``a`` of the distance to the nearest code of ``b``.

    Directional: ``set_distance(a, b)`` generally differs from ``set_distance(b, a)``.
    """
    _check_p(p)
    a, b = _codes(a), _codes(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"code sets do not match: {a.shape} vs {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"code sets have {a.shape[0]} and {b.shape[0]} views")
    return float(_cross(a, b, p).min(axis=1).mean())


def distance_matrix(sets, p=2, ids=None):
    """All ordered pairs of ``set_distance``; entry ``[q, x]`` is D(q, x).

    ``sets`` is a list of CodeSet or a ``(n_models, n_views, code_dim)`` array.
    """
    _check_p(p)
    if isinstance(sets, np.ndarray):
        codes = check_codes(sets)
        ids = [str(i) for i in range(len(codes))] if ids is None else ids
    else:
        sets = list(sets)
        if not sets:
            raise ValueError("distance_matrix needs at least one code set")
        shapes = {s.codes.shape for s in sets}
        if len(shapes) != 1:
            raise DimensionError(f"code sets differ in shape: {sorted(shapes)}")
        codes = np.stack([s.codes for s in sets])
        ids = [s.model_id for s in sets] if ids is None else ids
    if len(codes) == 0:
        raise ValueError("distance_matrix needs at least one code set")
    n, n_views, dim = codes.shape
    flat = codes.reshape(n * n_views, dim)
    out = np.empty((n, n))
    for q in range(n):
        cross = _cross(codes[q], flat, p).reshape(n_views, n, n_views)
        out[q] = cross.min(axis=2).mean(axis=0)
    np.fill_diagonal(out, 0.0)
    return DistanceMatrix(tuple(ids), out, {"n_views": n_views, "code_dim": dim, "p": p})
