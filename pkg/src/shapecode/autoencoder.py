"""Deep autoencoder unfolded from a DBN and fine-tuned by backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dbn import PSB_LAYERS, DbnStack, layer_configs, pretrain
from .exceptions import DimensionError, TrainingDivergedError
from .rbm import minibatches
from .validation import check_matrix

SIGMOID = "sigmoid"
LINEAR = "linear"


@dataclass(frozen=True)
class AutoencoderNet:
    """Weights ``(n_in, n_out)``, biases and activation for every layer.

    The first ``n_encoder`` layers form the encoder; their output is the code.
    """

    weights: tuple
    biases: tuple
    activations: tuple
    n_encoder: int
    rmse_curve: tuple = ()

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64).reshape(-1) for b in self.biases)
        activations = tuple(self.activations)
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must have equal length")
        if len(weights) != 2 * self.n_encoder:
            raise ValueError("decoder must have as many layers as the encoder")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or w.shape[1] != b.size:
                raise DimensionError(f"weight {w.shape} does not match bias ({b.size},)")
        for lower, upper in zip(weights, weights[1:]):
            if lower.shape[1] != upper.shape[0]:
                raise DimensionError("layer sizes do not chain")
        sizes = self._sizes(weights)
        if sizes != sizes[::-1]:
            raise DimensionError(f"encoder and decoder do not mirror: {sizes}")
        for act in activations:
            if act not in (SIGMOID, LINEAR):
                raise ValueError(f"unknown activation {act!r}")
        for arr in weights + biases:
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "activations", activations)
        object.__setattr__(self, "rmse_curve", tuple(self.rmse_curve))

    @staticmethod
    def _sizes(weights):
        return (weights[0].shape[0],) + tuple(w.shape[1] for w in weights)

    @property
    def sizes(self):
        return self._sizes(self.weights)

    @property
    def code_dim(self):
        return self.weights[self.n_encoder - 1].shape[1]

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    def parameters(self):
        """Weights followed by biases, in layer order."""
        return list(self.weights) + list(self.biases)

    def with_parameters(self, params, **changes):
        n = len(self.weights)
        return replace(self, weights=tuple(params[:n]), biases=tuple(params[n:]), **changes)


def unfold(stack: DbnStack) -> AutoencoderNet:
    """Encoder from the RBM weights and hidden biases, decoder from their transposes."""
    enc_w = [layer.weights for layer in stack.layers]
    enc_b = [layer.hidden_bias for layer in stack.layers]
    dec_w = [layer.weights.T for layer in reversed(stack.layers)]
    dec_b = [layer.visible_bias for layer in reversed(stack.layers)]
    n = len(stack.layers)
    activations = [SIGMOID] * (n - 1) + [LINEAR] + [SIGMOID] * n
    return AutoencoderNet(tuple(enc_w + dec_w), tuple(enc_b + dec_b), tuple(activations), n)


def _activate(x, kind):
    return expit(x) if kind == SIGMOID else x


def _forward(weights, biases, activations, X, stop=None):
    outputs = [X]
    for k, (w, b, act) in enumerate(zip(weights, biases, activations)):
        if stop is not None and k == stop:
            break
        outputs.append(_activate(outputs[-1] @ w + b, act))
    return outputs


def forward(net, X, stop=None):
    """Layer outputs ``[X, a_1, ..., a_stop]``."""
    return _forward(net.weights, net.biases, net.activations, X, stop)


def _check_input(net, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != net.input_dim:
        raise DimensionError(f"input has length {v.shape[-1]}, expected {net.input_dim}")
    return v


def encode(net, v):
    return forward(net, _check_input(net, v), stop=net.n_encoder)[-1]


def decode(net, code):
    x = np.asarray(code, dtype=np.float64)
    if x.shape[-1] != net.code_dim:
        raise DimensionError(f"code has length {x.shape[-1]}, expected {net.code_dim}")
    for w, b, act in list(zip(net.weights, net.biases, net.activations))[net.n_encoder:]:
        x = _activate(x @ w + b, act)
    return x


def reconstruct(net, v):
    return forward(net, _check_input(net, v))[-1]


def rmse(net, X):
    """Root of the mean squared per-pixel reconstruction error over ``X``."""
    X = np.asarray(X, dtype=np.float64)
    return float(np.sqrt(np.mean((reconstruct(net, X) - X) ** 2)))


def loss_and_gradients(net, X):
    """Loss ``0.5 * sum((recon - X)**2) / n_rows`` and its gradient per parameter.

    Gradients are returned in the order of ``net.parameters()``.
    """
    return _loss_and_gradients(net.weights, net.biases, net.activations,
                               np.asarray(X, dtype=np.float64))


def _loss_and_gradients(weights, biases, activations, X):
    n = len(X)
    outputs = _forward(weights, biases, activations, X)
    diff = outputs[-1] - X
    loss = 0.5 * float(np.sum(diff ** 2)) / n

    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    delta = diff / n
    for k in reversed(range(len(weights))):
        if activations[k] == SIGMOID:
            out = outputs[k + 1]
            delta = delta * out * (1.0 - out)
        grad_w[k] = outputs[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k:
            delta = delta @ weights[k].T
    return loss, grad_w + grad_b


@dataclass(frozen=True)
class FinetuneConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def finetune(net, X, cfg=FinetuneConfig(), callback=None):
    """Mini-batch gradient descent on the squared reconstruction error.

    The returned net carries the dataset RMSE after every epoch in
    ``rmse_curve``. ``callback(epoch, rmse)`` is called once per epoch.
    """
    X = check_matrix(X, n_features=net.input_dim)
    rng = np.random.default_rng(cfg.seed)
    params = [p.copy() for p in net.parameters()]
    n_layers = len(net.weights)
    weights, biases = params[:n_layers], params[n_layers:]
    curve = list(net.rmse_curve)
    for epoch in range(cfg.epochs):
        for idx in minibatches(len(X), cfg.batch_size, rng):
            loss, grads = _loss_and_gradients(weights, biases, net.activations, X[idx])
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
            if not (np.isfinite(loss) and all(np.isfinite(p).all() for p in params)):
                raise TrainingDivergedError(f"fine-tuning diverged in epoch {epoch}", epoch=epoch)
        recon = _forward(weights, biases, net.activations, X)[-1]
        curve.append(float(np.sqrt(np.mean((recon - X) ** 2))))
        if callback is not None:
            callback(epoch, curve[-1])
    return net.with_parameters([p.copy() for p in params], rmse_curve=tuple(curve))


class DeepAutoencoder(TransformerMixin, BaseEstimator):
    """DBN-initialized deep autoencoder; ``transform`` yields the code layer.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(1000, 500, 250, 30)
        Encoder sizes after the input; the last entry is the code size.
    learning_rate, top_learning_rate : float, default=0.1, 0.001
        CD-1 rates for the binary layers and the Gaussian top layer.
    pretrain_epochs : int, default=40
    finetune_learning_rate : float, default=0.01
    finetune_epochs : int, default=100
    batch_size : int, default=100
    random_state : int or None
    """

    def __init__(self, hidden_layer_sizes=PSB_LAYERS[1:], learning_rate=0.1,
                 top_learning_rate=0.001, pretrain_epochs=40, finetune_learning_rate=0.01,
                 finetune_epochs=100, batch_size=100, weight_decay=2e-4,
                 random_state=None, verbose=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.top_learning_rate = top_learning_rate
        self.pretrain_epochs = pretrain_epochs
        self.finetune_learning_rate = finetune_learning_rate
        self.finetune_epochs = finetune_epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.random_state = random_state
        self.verbose = verbose

    def _log(self, msg):
        if self.verbose:
            print(msg)

    def fit(self, X, y=None):
        X = check_matrix(X)
        seed = self.random_state or 0
        sizes = (X.shape[1],) + tuple(self.hidden_layer_sizes)
        configs = layer_configs(len(sizes) - 1, self.pretrain_epochs, self.batch_size,
                                self.learning_rate, self.top_learning_rate, seed,
                                weight_decay=self.weight_decay)
        self.stack_ = pretrain(
            X, sizes, configs,
            lambda k, e, err: self._log(f"[pretrain] layer {k} epoch {e + 1} error {err:.6f}"))
        return self.finetune(X, self.stack_)

    def finetune(self, X, stack):
        """Unfold ``stack`` and fine-tune it on ``X`` (skips pretraining)."""
        X = check_matrix(X, n_features=stack.sizes[0])
        cfg = FinetuneConfig(self.finetune_learning_rate, self.finetune_epochs,
                             self.batch_size, (self.random_state or 0) + 1000)
        self.stack_ = stack
        self.net_ = finetune(unfold(stack), X, cfg,
                             lambda e, r: self._log(f"[finetune] epoch {e + 1} rmse {r:.6f}"))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        return encode(self.net_, check_matrix(X, n_features=self.n_features_in_))

    def inverse_transform(self, codes):
        check_is_fitted(self, "net_")
        return decode(self.net_, check_matrix(codes))

    def reconstruct(self, X):
        check_is_fitted(self, "net_")
        return reconstruct(self.net_, check_matrix(X, n_features=self.n_features_in_))

    def score(self, X, y=None):
        """Negative reconstruction RMSE."""
        check_is_fitted(self, "net_")
        return -rmse(self.net_, check_matrix(X, n_features=self.n_features_in_))
