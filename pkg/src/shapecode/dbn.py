"""Greedy layer-wise pretraining of a stack of RBMs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionError, TrainingDivergedError
from .rbm import BINARY, GAUSSIAN, CdConfig, hidden_given_visible, init_layer, train_layer
from .validation import check_matrix, check_unit_interval

PSB_LAYERS = (5184, 1000, 500, 250, 30)
ESB_LAYERS = (5184, 2000, 500, 100, 20)
PRESETS = {"psb": PSB_LAYERS, "esb": ESB_LAYERS}


@dataclass(frozen=True)
class DbnStack:
    layers: tuple
    error_curves: tuple = ()

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a DBN needs at least one layer")
        for lower, upper in zip(layers, layers[1:]):
            if lower.n_hidden != upper.n_visible:
                raise DimensionError(
                    f"layer sizes do not chain: {lower.n_hidden} hidden vs {upper.n_visible} visible")
        kinds = [layer.hidden_kind for layer in layers]
        if kinds[-1] != GAUSSIAN or any(k != BINARY for k in kinds[:-1]):
            raise ValueError("only the top layer may (and must) have Gaussian hidden units")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "error_curves", tuple(tuple(c) for c in self.error_curves))

    @property
    def sizes(self):
        return (self.layers[0].n_visible,) + tuple(layer.n_hidden for layer in self.layers)

    def __len__(self):
        return len(self.layers)


def layer_configs(n_layers, epochs=40, batch_size=100, learning_rate=0.1,
                  top_learning_rate=0.001, seed=0, **kwargs):
    """One CdConfig per layer; the top (Gaussian) layer gets ``top_learning_rate``."""
    return [
        CdConfig(learning_rate=top_learning_rate if k == n_layers - 1 else learning_rate,
                 epochs=epochs, batch_size=batch_size, seed=seed + k, **kwargs)
        for k in range(n_layers)
    ]


def pretrain(X, sizes, configs=None, callback=None, init_scale=0.01):
    """Train each RBM on the hidden activation probabilities of the one below.

    ``sizes`` includes the input dimension, e.g. ``(5184, 1000, 500, 250, 30)``.
    ``callback(layer_index, epoch, error)`` is called after every epoch.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("sizes must list the input dimension and at least one hidden layer")
    X = check_unit_interval(check_matrix(X, n_features=sizes[0]))
    n_layers = len(sizes) - 1
    if configs is None:
        configs = layer_configs(n_layers)
    if len(configs) != n_layers:
        raise ValueError(f"expected {n_layers} configs, got {len(configs)}")

    layers, curves = [], []
    data = X
    for k, cfg in enumerate(configs):
        rng = np.random.default_rng(cfg.seed)
        hidden_kind = GAUSSIAN if k == n_layers - 1 else BINARY
        layer = init_layer(sizes[k], sizes[k + 1], rng, BINARY, hidden_kind, init_scale)
        report = None if callback is None else (lambda e, err, k=k: callback(k, e, err))
        try:
            layer, curve = train_layer(layer, data, cfg, rng, callback=report)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(f"layer {k}: {exc}", layer=k) from exc
        layers.append(layer)
        curves.append(curve)
        if k < n_layers - 1:
            data = hidden_given_visible(layer, data)
    return DbnStack(tuple(layers), tuple(curves))


def propagate_up(stack, v):
    """Deterministic bottom-up pass: sigmoid probabilities, then the linear top mean."""
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != stack.sizes[0]:
        raise DimensionError(f"input has length {x.shape[-1]}, expected {stack.sizes[0]}")
    for layer in stack.layers:
        x = hidden_given_visible(layer, x)
    return x


class DBN(TransformerMixin, BaseEstimator):
    """Deep belief network pretrained greedily with CD-1.

    ``transform`` returns the top-layer Gaussian means, i.e. the code that an
    unfolded autoencoder produces before fine-tuning.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(1000, 500, 250, 30)
        Hidden sizes; the input size is taken from ``X``.
    learning_rate : float, default=0.1
        For the binary-hidden layers.
    top_learning_rate : float, default=0.001
        For the top layer with Gaussian hidden units.
    n_epochs, batch_size : int, default=40, 100
    weight_decay : float, default=2e-4
    random_state : int or None
        Layer ``k`` is seeded with ``random_state + k``.
    """

    def __init__(self, hidden_layer_sizes=PSB_LAYERS[1:], learning_rate=0.1,
                 top_learning_rate=0.001, n_epochs=40, batch_size=100,
                 weight_decay=2e-4, random_state=None, verbose=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.top_learning_rate = top_learning_rate
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.random_state = random_state
        self.verbose = verbose

    def fit(self, X, y=None):
        X = check_matrix(X)
        sizes = (X.shape[1],) + tuple(self.hidden_layer_sizes)
        configs = layer_configs(len(sizes) - 1, self.n_epochs, self.batch_size,
                                self.learning_rate, self.top_learning_rate,
                                seed=self.random_state or 0, weight_decay=self.weight_decay)

        def report(k, epoch, err):
            if self.verbose:
                print(f"[DBN] layer {k} epoch {epoch + 1} reconstruction error {err:.6f}")

        self.stack_ = pretrain(X, sizes, configs, report)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def reconstruction_errors_(self):
        return [list(c) for c in self.stack_.error_curves]

    def transform(self, X):
        check_is_fitted(self, "stack_")
        return propagate_up(self.stack_, check_matrix(X, n_features=self.n_features_in_))
