"""Learning substrate: synthetic non-IID data, softmax regression, local SGD, FedAvg."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericDivergenceError, ProtocolError


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int

    @property
    def size(self) -> int:
        return len(self.y)

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.num_classes)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)


def synth_dataset(
    num_classes: int,
    num_features: int,
    total_samples: int,
    seed,
    separation: float = 1.0,
    conditioning: float = 1.0,
) -> Dataset:
    """Gaussian class-conditional clusters with unit noise around random class means.

    Means are drawn with standard deviation ``separation``; labels are uniform.
    Feature ``j`` is then scaled by a geometric ramp from 1 down to ``1/conditioning``,
    which leaves the Bayes error unchanged but slows gradient descent on the small
    features, as unnormalized inputs do.
    """
    if min(num_classes, num_features, total_samples) < 1:
        raise ConfigurationError("dataset sizes must be positive")
    if conditioning < 1:
        raise ConfigurationError("conditioning must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(num_classes, num_features))
    y = rng.integers(0, num_classes, size=total_samples)
    X = means[y] + rng.normal(size=(total_samples, num_features))
    X *= np.geomspace(1.0, 1.0 / conditioning, num_features)
    return Dataset(X, y, num_classes)


def split_holdout(data: Dataset, test_samples: int) -> tuple[Dataset, Dataset]:
    """Last ``test_samples`` rows become the test set."""
    n = data.size - test_samples
    if n < 1 or test_samples < 1:
        raise ConfigurationError("train and test splits must both be non-empty")
    return data.subset(np.arange(n)), data.subset(np.arange(n, data.size))


def dirichlet_partition(data: Dataset, num_clients: int, alpha: float, seed: int) -> list[Dataset]:
    """Split each class across clients with Dirichlet(alpha) proportions.

    Clients left empty receive one sample from the currently largest client, so every
    client ends up with at least one sample.
    """
    if num_clients < 1 or alpha <= 0:
        raise ConfigurationError("need num_clients >= 1 and alpha > 0")
    if data.size < num_clients:
        raise ConfigurationError(f"{data.size} samples cannot cover {num_clients} clients")
    rng = np.random.default_rng(seed)
    shards: list[list[int]] = [[] for _ in range(num_clients)]
    for c in range(data.num_classes):
        idx = np.nonzero(data.y == c)[0]
        rng.shuffle(idx)
        props = rng.dirichlet(np.full(num_clients, alpha))
        cuts = (np.cumsum(props)[:-1] * len(idx)).astype(int)
        for k, part in enumerate(np.split(idx, cuts)):
            shards[k].extend(part.tolist())
    while True:
        sizes = [len(s) for s in shards]
        empty = [k for k, n in enumerate(sizes) if n == 0]
        if not empty:
            break
        donor = int(np.argmax(sizes))
        shards[empty[0]].append(shards[donor].pop())
    return [data.subset(sorted(s)) for s in shards]


# ---------------------------------------------------------------------------
# Softmax regression
# ---------------------------------------------------------------------------


def param_dim(num_features: int, num_classes: int) -> int:
    return num_features * num_classes + num_classes


def zero_model(num_features: int, num_classes: int) -> np.ndarray:
    return np.zeros(param_dim(num_features, num_classes))


def _unpack(w: np.ndarray, num_features: int, num_classes: int):
    W = w[: num_features * num_classes].reshape(num_features, num_classes)
    return W, w[num_features * num_classes :]


def loss_and_grad(w, X, y, num_classes, anchor=None, lam: float = 0.0) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``(X, y)`` plus the optional proximal term and its gradient."""
    W, b = _unpack(w, X.shape[1], num_classes)
    logits = X @ W + b
    lse = logsumexp(logits, axis=1)
    n = len(y)
    loss = float(np.mean(lse - logits[np.arange(n), y]))
    p = np.exp(logits - lse[:, None])
    p[np.arange(n), y] -= 1.0
    grad = np.concatenate([(X.T @ p).ravel() / n, p.sum(axis=0) / n])
    if lam > 0:
        diff = w - anchor
        loss += 0.5 * lam * float(diff @ diff)
        grad = grad + lam * diff
    return loss, grad


def predict(w: np.ndarray, X: np.ndarray, num_classes: int) -> np.ndarray:
    W, b = _unpack(w, X.shape[1], num_classes)
    return np.argmax(X @ W + b, axis=1)


def evaluate(w: np.ndarray, test: Dataset) -> tuple[float, float]:
    """Top-1 accuracy and mean cross-entropy."""
    if test.size == 0:
        raise ValueError("empty test set")
    W, b = _unpack(w, test.num_features, test.num_classes)
    logits = test.X @ W + b
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(test.size), test.y]))
    acc = float(np.mean(np.argmax(logits, axis=1) == test.y))
    return acc, loss


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float
    batch_size: int
    epochs: int
    regularization: float = 0.0
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0 or self.regularization < 0:
            raise ConfigurationError(f"invalid hyper-parameters: {self}")


def _epoch_rng(seed, epoch: int) -> np.random.Generator:
    key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng([*key, epoch])


def sgd_epochs(w_in, data: Dataset, hp: HyperParams, anchor=None, first_epoch: int = 0) -> np.ndarray:
    """Run ``hp.epochs`` epochs of mini-batch SGD and return the raw parameters.

    Epoch ``e`` shuffles with a generator keyed on ``(seed, e)``, so splitting a run
    into consecutive calls with matching ``first_epoch`` reproduces it exactly.
    """
    if data.size == 0:
        raise ValueError("empty local dataset")
    w = np.array(w_in, dtype=float, copy=True)
    anchor = w.copy() if anchor is None else np.asarray(anchor, dtype=float)
    lam = hp.regularization
    # overflow is detected explicitly below, so numpy's own warnings are silenced
    with np.errstate(over="ignore", invalid="ignore"):
        for e in range(first_epoch, first_epoch + hp.epochs):
            order = _epoch_rng(hp.seed, e).permutation(data.size)
            for start in range(0, data.size, hp.batch_size):
                batch = order[start : start + hp.batch_size]
                loss, grad = loss_and_grad(w, data.X[batch], data.y[batch], data.num_classes, anchor, lam)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    raise NumericDivergenceError(f"non-finite loss or gradient in epoch {e}")
                # grad is already the batch mean, i.e. (1/|B|) * sum of per-sample gradients
                w -= hp.learning_rate * grad
                if not np.all(np.isfinite(w)):
                    raise NumericDivergenceError(f"parameters overflowed in epoch {e}")
    return w


def local_sgd(w_in, data: Dataset, hp: HyperParams, anchor=None, first_epoch: int = 0) -> np.ndarray:
    """Local training as a client reports it: ``D_k * w_out``."""
    return data.size * sgd_epochs(w_in, data, hp, anchor, first_epoch)


def global_update(
    contributions: Sequence[tuple[int, np.ndarray]] | Mapping[object, tuple[int, np.ndarray]],
    pre_weighted: bool = False,
) -> np.ndarray:
    """Sample-weighted average of client models.

    ``pre_weighted`` marks parameters already multiplied by their sample count.
    Coordinates are summed with ``math.fsum`` so the result does not depend on the
    order of contributions.
    """
    items = [contributions[k] for k in sorted(contributions)] if isinstance(contributions, Mapping) else list(contributions)
    if not items:
        raise ProtocolError("no contributions to aggregate")
    dims = {np.shape(w) for _, w in items}
    if len(dims) != 1:
        raise ProtocolError(f"contribution dimensions differ: {sorted(dims)}")
    total = sum(int(d) for d, _ in items)
    if total <= 0:
        raise ProtocolError("total sample count must be positive")
    terms = np.stack([np.asarray(w, dtype=float) if pre_weighted else d * np.asarray(w, dtype=float) for d, w in items])
    summed = np.array([math.fsum(col) for col in terms.T])
    return summed / total
