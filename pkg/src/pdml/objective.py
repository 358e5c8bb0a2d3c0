"""Logistic loss, the label-debiased loss and the per-server objectives.

Three variants of a server's objective are supported:

``original``
    mean logistic loss on the true labels (evaluation only),
``modified``
    mean debiased loss on the reported labels,
``perturbed``
    ``modified`` plus the fixed linear term ``eta_i^T w / n``.

All three carry the regulariser ``(a / n) * ||w||^2 / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidEpsilon

VARIANTS = ("original", "modified", "perturbed")


def _check_eps(epsilon):
    if epsilon is None or math.isnan(epsilon) or epsilon <= 0:
        raise InvalidEpsilon(f"epsilon must be > 0, got {epsilon}")


def _inv_expm1(epsilon):
    """1 / (e^eps - 1), zero at eps = inf."""
    if math.isinf(epsilon):
        return 0.0
    return 1.0 / math.expm1(epsilon)


def loss(y, margin):
    """``log(1 + exp(-y * margin))``, stable for large ``|margin|``."""
    return np.logaddexp(0.0, -np.asarray(y) * np.asarray(margin))


def loss_dmargin(y, margin):
    """Derivative of :func:`loss` with respect to the margin."""
    y = np.asarray(y)
    return -y * _sigmoid(-y * np.asarray(margin))


def loss_d2margin(margin):
    """Second derivative; identical for both labels."""
    s = _sigmoid(np.asarray(margin))
    return s * (1.0 - s)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def modified_loss(y_reported, margin, epsilon):
    """``(e^eps l(y', m) - l(-y', m)) / (e^eps - 1)``.

    Written as ``l(y') + (l(y') - l(-y')) / (e^eps - 1)``, which is the same
    quantity but keeps precision for both small and large ``eps``.
    """
    _check_eps(epsilon)
    a = loss(y_reported, margin)
    b = loss(-np.asarray(y_reported), margin)
    return a + (a - b) * _inv_expm1(epsilon)


def modified_loss_dmargin(y_reported, margin, epsilon):
    _check_eps(epsilon)
    a = loss_dmargin(y_reported, margin)
    b = loss_dmargin(-np.asarray(y_reported), margin)
    return a + (a - b) * _inv_expm1(epsilon)


def debias_factor(epsilon):
    """``(e^eps + 1) / (e^eps - 1)``; tends to 1 as eps grows."""
    _check_eps(epsilon)
    if math.isinf(epsilon):
        return 1.0
    return 1.0 / math.tanh(epsilon / 2.0)


def modified_loss_lipschitz(epsilon, c2):
    return c2 * debias_factor(epsilon)


@dataclass(frozen=True)
class LossModel:
    """Logistic loss over the ball ``||w|| <= W_bound`` with ``||x|| <= x_bound``.

    ``c1, c2, c3`` bound the loss, its gradient and its Hessian in ``w`` over
    that class.
    """

    W_bound: float = 10.0
    x_bound: float = 1.0
    kind: str = "logistic"

    def __post_init__(self):
        if self.kind != "logistic":
            raise ValueError(f"unsupported loss {self.kind!r}")

    @property
    def c1(self) -> float:
        return float(np.logaddexp(0.0, self.W_bound * self.x_bound))

    @property
    def c2(self) -> float:
        return self.x_bound

    @property
    def c3(self) -> float:
        return 0.25 * self.x_bound**2


@dataclass
class ObjectiveSpec:
    """Everything that defines the global objective apart from the data.

    ``eta`` is an ``(n, d)`` array of fixed linear perturbations (or None for
    no perturbation); ``kappa`` and ``varrho`` are the strong-convexity and
    Hessian bounds of the regulariser ``||w||^2 / 2`` (both 1).
    """

    a: float
    n: int
    epsilon: float = math.inf
    loss: LossModel = field(default_factory=LossModel)
    eta: np.ndarray | None = None
    R: float = 0.0
    kappa: float = 1.0
    varrho: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("regularisation weight a must be positive")
        _check_eps(self.epsilon)
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=float)
            if self.eta.shape[0] != self.n:
                raise DimensionMismatch(f"eta has {self.eta.shape[0]} rows for n={self.n}")
            if np.max(np.abs(self.eta)) > self.R * (1 + 1e-12):
                raise ValueError("some |eta| entry exceeds R")

    @property
    def kappa_hat(self) -> float:
        return self.a * self.kappa

    @property
    def c1(self):
        return self.loss.c1

    @property
    def c2(self):
        return self.loss.c2

    @property
    def c3(self):
        return self.loss.c3

    def eta_for(self, i: int, d: int) -> np.ndarray:
        if self.eta is None:
            return np.zeros(d)
        if self.eta.shape[1] != d:
            raise DimensionMismatch(f"eta has dimension {self.eta.shape[1]}, classifier has {d}")
        return self.eta[i]


def lipschitz_gradient_constant(spec: ObjectiveSpec) -> float:
    """Gradient Lipschitz constant ``n c3 + a varrho`` of the global objective."""
    return spec.n * spec.c3 + spec.a * spec.varrho


def generate_eta(n: int, d: int, R: float, seed) -> np.ndarray:
    """``n`` vectors with i.i.d. Uniform[-R, R] coordinates."""
    if R < 0:
        raise ValueError("R must be non-negative")
    if R == 0:
        return np.zeros((n, d))
    return np.random.default_rng(seed).uniform(-R, R, size=(n, d))


# --------------------------------------------------------------------------
# local objectives used by the solvers

class LogisticObjective:
    """One server's objective as a smooth function with value/gradient/Hessian.

    ``epsilon = inf`` makes the debiased loss coincide with the plain loss.
    """

    def __init__(self, X, y, a, n, epsilon=math.inf, eta=None):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.m = self.X.shape[0]
        self.d = self.X.shape[1]
        self.reg = a / n
        self.epsilon = epsilon
        self.lin = np.zeros(self.d) if eta is None else np.asarray(eta, dtype=float) / n

    def _check(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.d,):
            raise DimensionMismatch(f"classifier has shape {w.shape}, expected ({self.d},)")
        return w

    def value(self, w):
        w = self._check(w)
        z = self.X @ w
        return float(np.mean(modified_loss(self.y, z, self.epsilon)) + 0.5 * self.reg * w @ w + self.lin @ w)

    def gradient(self, w):
        w = self._check(w)
        g = modified_loss_dmargin(self.y, self.X @ w, self.epsilon)
        return self.X.T @ g / self.m + self.reg * w + self.lin

    def hessian(self, w):
        w = self._check(w)
        s = loss_d2margin(self.X @ w)
        return (self.X.T * s) @ self.X / self.m + self.reg * np.eye(self.d)


class QuadraticObjective:
    """``weight/2 * ||w - center||^2 + lin^T w``; used for toy problems."""

    def __init__(self, center, weight=1.0, lin=None):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.d = self.center.shape[0]
        self.weight = float(weight)
        self.lin = np.zeros(self.d) if lin is None else np.asarray(lin, dtype=float)

    def value(self, w):
        r = np.asarray(w) - self.center
        return float(0.5 * self.weight * r @ r + self.lin @ w)

    def gradient(self, w):
        return self.weight * (np.asarray(w) - self.center) + self.lin

    def hessian(self, w):
        return self.weight * np.eye(self.d)


def make_local_objective(shard, spec: ObjectiveSpec, variant: str = "modified") -> LogisticObjective:
    """Build server ``shard.server_id``'s objective of the requested variant."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant == "original":
        return LogisticObjective(shard.X, shard.labels("true"), spec.a, spec.n)
    eta = spec.eta_for(shard.server_id, shard.d) if variant == "perturbed" else None
    return LogisticObjective(shard.X, shard.labels("reported"), spec.a, spec.n, spec.epsilon, eta)


def local_objective(shard, w, spec: ObjectiveSpec, variant: str = "modified") -> float:
    return make_local_objective(shard, spec, variant).value(w)


def local_gradient(shard, w, spec: ObjectiveSpec, variant: str = "modified") -> np.ndarray:
    return make_local_objective(shard, spec, variant).gradient(w)


def local_hessian(shard, w, spec: ObjectiveSpec, variant: str = "modified") -> np.ndarray:
    return make_local_objective(shard, spec, variant).hessian(w)
