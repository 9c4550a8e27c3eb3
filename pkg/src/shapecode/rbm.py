"""Restricted Boltzmann Machine with binary or Gaussian-linear units, trained by CD-1."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionError, TrainingDivergedError
from .validation import check_matrix, check_unit_interval

BINARY = "binary"
GAUSSIAN = "gaussian"
UNIT_KINDS = (BINARY, GAUSSIAN)


@dataclass(frozen=True)
class RbmLayer:
    """Parameters of one RBM.

    ``weights`` has shape ``(n_visible, n_hidden)``. Binary visible units
    also accept real values in [0, 1], read as probabilities.
    """

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    visible_kind: str = BINARY
    hidden_kind: str = BINARY

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        a = np.array(self.visible_bias, dtype=np.float64).reshape(-1)
        b = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape != (a.size, b.size):
            raise DimensionError(
                f"weights {w.shape} inconsistent with biases ({a.size}, {b.size})")
        if self.visible_kind not in UNIT_KINDS or self.hidden_kind not in UNIT_KINDS:
            raise ValueError(f"unit kinds must be in {UNIT_KINDS}")
        for arr in (w, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", a)
        object.__setattr__(self, "hidden_bias", b)

    @property
    def n_visible(self):
        return self.weights.shape[0]

    @property
    def n_hidden(self):
        return self.weights.shape[1]

    def is_finite(self):
        return bool(np.isfinite(self.weights).all() and np.isfinite(self.visible_bias).all()
                    and np.isfinite(self.hidden_bias).all())

    def transposed(self):
        """The same machine with the roles of the two layers swapped."""
        return RbmLayer(self.weights.T, self.hidden_bias, self.visible_bias,
                        self.hidden_kind, self.visible_kind)


def init_layer(n_visible, n_hidden, rng, visible_kind=BINARY, hidden_kind=BINARY, scale=0.01):
    """Small zero-mean Gaussian weights, zero biases."""
    rng = np.random.default_rng(rng)
    return RbmLayer(scale * rng.standard_normal((n_visible, n_hidden)),
                    np.zeros(n_visible), np.zeros(n_hidden), visible_kind, hidden_kind)


@dataclass(frozen=True)
class CdConfig:
    learning_rate: float = 0.1
    epochs: int = 40
    batch_size: int = 100
    initial_momentum: float = 0.5
    final_momentum: float = 0.9
    momentum_switch_epoch: int = 5
    weight_decay: float = 0.0002
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def momentum_at(self, epoch):
        return self.initial_momentum if epoch < self.momentum_switch_epoch else self.final_momentum

    def with_(self, **changes):
        return replace(self, **changes)


def _check_vector(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n:
        raise DimensionError(f"{what} has length {x.shape[-1]}, expected {n}")
    return x


def energy(layer, v, h):
    """Joint energy ``-a.v - b.h - v.W.h`` (row-wise for 2-D input)."""
    v = _check_vector(v, layer.n_visible, "v")
    h = _check_vector(h, layer.n_hidden, "h")
    return -(v @ layer.visible_bias) - (h @ layer.hidden_bias) - np.sum((v @ layer.weights) * h, axis=-1)


def hidden_input(layer, v):
    v = _check_vector(v, layer.n_visible, "v")
    return v @ layer.weights + layer.hidden_bias


def visible_input(layer, h):
    h = _check_vector(h, layer.n_hidden, "h")
    return h @ layer.weights.T + layer.visible_bias


def hidden_given_visible(layer, v):
    """``p(h=1|v)`` for binary hiddens, the conditional mean for Gaussian ones."""
    x = hidden_input(layer, v)
    return expit(x) if layer.hidden_kind == BINARY else x


def visible_given_hidden(layer, h):
    x = visible_input(layer, h)
    return expit(x) if layer.visible_kind == BINARY else x


def sample(prob_or_mean, kind, rng):
    """Bernoulli draw for binary units, unit-variance Gaussian draw for the rest."""
    p = np.asarray(prob_or_mean, dtype=np.float64)
    if kind == BINARY:
        if np.any((p < 0) | (p > 1)) or np.isnan(p).any():
            raise ValueError("probabilities must lie in [0, 1]")
        return (rng.random(p.shape) < p).astype(np.float64)
    if kind == GAUSSIAN:
        return p + rng.standard_normal(p.shape)
    raise ValueError(f"unknown unit kind {kind!r}")


class CdStatistics(NamedTuple):
    positive: np.ndarray        # <v h>_data, batch average
    negative: np.ndarray        # <v h>_recon, batch average
    positive_visible: np.ndarray
    negative_visible: np.ndarray
    positive_hidden: np.ndarray
    negative_hidden: np.ndarray
    reconstruction: np.ndarray


def cd1_statistics(layer, batch, rng):
    """Batch-averaged correlations of one contrastive-divergence step.

    Both correlation terms use hidden probabilities (means); only the hidden
    states that drive the confabulation are sampled. The confabulation uses
    visible probabilities directly, without sampling.
    """
    v0 = check_matrix(batch, n_features=layer.n_visible)
    n = len(v0)
    h0 = hidden_given_visible(layer, v0)
    h_states = sample(h0, layer.hidden_kind, rng)
    v1 = visible_given_hidden(layer, h_states)
    h1 = hidden_given_visible(layer, v1)
    return CdStatistics(
        v0.T @ h0 / n, v1.T @ h1 / n,
        v0.mean(axis=0), v1.mean(axis=0),
        h0.mean(axis=0), h1.mean(axis=0),
        v1,
    )


class CdStep(NamedTuple):
    layer: RbmLayer
    reconstruction_error: float
    velocity: tuple


def cd1_update(layer, batch, cfg, rng, velocity=None, epoch=0):
    """One CD-1 parameter update on a mini-batch.

    Returns the new layer, the batch mean squared reconstruction error and
    the momentum buffers to pass to the next call.
    """
    stats = cd1_statistics(layer, batch, rng)
    batch = np.asarray(batch, dtype=np.float64)
    error = float(np.mean((batch - stats.reconstruction) ** 2))

    grad_w = stats.positive - stats.negative - cfg.weight_decay * layer.weights
    grad_a = stats.positive_visible - stats.negative_visible
    grad_b = stats.positive_hidden - stats.negative_hidden
    if velocity is None:
        velocity = (np.zeros_like(grad_w), np.zeros_like(grad_a), np.zeros_like(grad_b))
    momentum = cfg.momentum_at(epoch)
    eps = cfg.learning_rate
    velocity = tuple(momentum * old + eps * g for old, g in zip(velocity, (grad_w, grad_a, grad_b)))

    new = RbmLayer(layer.weights + velocity[0], layer.visible_bias + velocity[1],
                   layer.hidden_bias + velocity[2], layer.visible_kind, layer.hidden_kind)
    if not new.is_finite():
        raise TrainingDivergedError("non-finite parameter after CD-1 update")
    return CdStep(new, error, velocity)


def minibatches(n_samples, batch_size, rng=None):
    """Index arrays for one epoch; shuffled when ``rng`` is given. The last batch may be short."""
    order = np.arange(n_samples) if rng is None else rng.permutation(n_samples)
    return [order[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def train_layer(layer, data, cfg, rng=None, shuffle=True, callback=None):
    """Run ``cfg.epochs`` epochs of CD-1 and return ``(layer, per-epoch errors)``."""
    data = check_matrix(data, n_features=layer.n_visible)
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    velocity = None
    curve = []
    for epoch in range(cfg.epochs):
        errors, sizes = [], []
        for idx in minibatches(len(data), cfg.batch_size, rng if shuffle else None):
            layer, err, velocity = cd1_update(layer, data[idx], cfg, rng, velocity, epoch)
            errors.append(err)
            sizes.append(len(idx))
        curve.append(float(np.average(errors, weights=sizes)))
        if callback is not None:
            callback(epoch, curve[-1])
    return layer, curve


class RBM(TransformerMixin, BaseEstimator):
    """Restricted Boltzmann Machine fitted with one-step contrastive divergence.

    Parameters
    ----------
    n_components : int, default=256
        Number of hidden units.
    hidden_kind : {"binary", "gaussian"}, default="binary"
        ``"gaussian"`` gives linear hidden units with unit-variance noise;
        ``transform`` then returns their means.
    visible_kind : {"binary", "gaussian"}, default="binary"
        Binary visibles accept real inputs in [0, 1].
    learning_rate : float, default=0.1
    n_epochs : int, default=40
    batch_size : int, default=100
    initial_momentum, final_momentum : float, default=0.5, 0.9
        Momentum switches after ``momentum_switch_epoch`` epochs.
    momentum_switch_epoch : int, default=5
    weight_decay : float, default=2e-4
        L2 penalty on the weights, applied every mini-batch.
    init_scale : float, default=0.01
        Standard deviation of the initial weights.
    shuffle : bool, default=True
        Reshuffle the samples every epoch.
    random_state : int or None, default=None

    Attributes
    ----------
    layer_ : RbmLayer
    reconstruction_errors_ : list of float
        Mean squared reconstruction error per epoch.
    n_features_in_ : int
    """

    def __init__(self, n_components=256, hidden_kind=BINARY, visible_kind=BINARY,
                 learning_rate=0.1, n_epochs=40, batch_size=100, initial_momentum=0.5,
                 final_momentum=0.9, momentum_switch_epoch=5, weight_decay=2e-4,
                 init_scale=0.01, shuffle=True, random_state=None, verbose=0):
        self.n_components = n_components
        self.hidden_kind = hidden_kind
        self.visible_kind = visible_kind
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.initial_momentum = initial_momentum
        self.final_momentum = final_momentum
        self.momentum_switch_epoch = momentum_switch_epoch
        self.weight_decay = weight_decay
        self.init_scale = init_scale
        self.shuffle = shuffle
        self.random_state = random_state
        self.verbose = verbose

    def cd_config(self):
        return CdConfig(self.learning_rate, self.n_epochs, self.batch_size,
                        self.initial_momentum, self.final_momentum,
                        self.momentum_switch_epoch, self.weight_decay,
                        0 if self.random_state is None else self.random_state)

    def fit(self, X, y=None):
        X = check_matrix(X)
        if self.visible_kind == BINARY:
            check_unit_interval(X)
        cfg = self.cd_config()
        rng = np.random.default_rng(self.random_state)
        layer = init_layer(X.shape[1], self.n_components, rng, self.visible_kind,
                           self.hidden_kind, self.init_scale)

        def report(epoch, err):
            if self.verbose:
                print(f"[RBM] epoch {epoch + 1}/{cfg.epochs} reconstruction error {err:.6f}")

        self.layer_, self.reconstruction_errors_ = train_layer(
            layer, X, cfg, rng, self.shuffle, report)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def components_(self):
        return self.layer_.weights.T

    @property
    def intercept_hidden_(self):
        return self.layer_.hidden_bias

    @property
    def intercept_visible_(self):
        return self.layer_.visible_bias

    def transform(self, X):
        check_is_fitted(self, "layer_")
        X = check_matrix(X, n_features=self.n_features_in_)
        return hidden_given_visible(self.layer_, X)

    def reconstruct(self, X):
        """Visible probabilities (or means) after one deterministic up-down pass."""
        return visible_given_hidden(self.layer_, self.transform(X))

    def score(self, X, y=None):
        """Negative mean squared reconstruction error."""
        X = check_matrix(X, n_features=self.n_features_in_)
        return -float(np.mean((X - self.reconstruct(X)) ** 2))
