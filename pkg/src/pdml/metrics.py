"""Evaluation quantities: empirical risk, consensus error, accuracy, averaging.

Everything here scores classifiers against the *true* labels with the
original logistic loss; training code never calls into this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyTestSet
from .objective import loss


@dataclass
class IterationRecord:
    """State of the network after round ``t``.

    ``w_snapshot`` holds the exact primal iterates, ``wtilde_snapshot`` the
    perturbed copies that were exchanged, ``wbar_snapshot`` the running
    averages of ``w``. Risks are per server; ``risk_bar_per_server`` scores
    the running averages.
    """

    t: int
    risk_per_server: np.ndarray
    consensus_norm_gap: float
    consensus_vec_gap: float
    w_snapshot: np.ndarray
    wtilde_snapshot: np.ndarray
    wbar_snapshot: np.ndarray
    noise_norms: np.ndarray
    risk_bar_per_server: np.ndarray | None = None
    gamma_sum_norm: float = 0.0

    @property
    def consensus_error(self) -> float:
        return self.consensus_norm_gap

    @property
    def risk(self) -> float:
        return float(np.sum(self.risk_per_server))

    def to_dict(self) -> dict:
        """Flat record with stable field names (one NDJSON line)."""
        out = {"t": self.t}
        for i, r in enumerate(self.risk_per_server):
            out[f"risk_{i}"] = float(r)
        out["risk"] = self.risk
        if self.risk_bar_per_server is not None:
            for i, r in enumerate(self.risk_bar_per_server):
                out[f"risk_bar_{i}"] = float(r)
            out["risk_bar"] = float(np.sum(self.risk_bar_per_server))
        out["consensus_norm_gap"] = self.consensus_norm_gap
        out["consensus_vec_gap"] = self.consensus_vec_gap
        for i, v in enumerate(self.noise_norms):
            out[f"theta_norm_{i}"] = float(v)
        out["gamma_sum_norm"] = self.gamma_sum_norm
        return out


def _as_matrix(ws):
    ws = np.asarray(ws, dtype=float)
    if ws.ndim != 2:
        raise DimensionMismatch("expected an (n, d) array of classifiers")
    return ws


def consensus_error(ws) -> float:
    """Largest gap ``| ||w_i|| - ||w_l|| |`` between classifier norms."""
    norms = np.linalg.norm(_as_matrix(ws), axis=1)
    return float(norms.max() - norms.min())


def consensus_vec_gap(ws) -> float:
    """Largest pairwise distance ``||w_i - w_l||``."""
    ws = _as_matrix(ws)
    diff = ws[:, None, :] - ws[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


def server_risk(w, shard, a: float, n: int) -> float:
    """``J_i(w)``: mean logistic loss on the true labels plus ``(a/n)||w||^2/2``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (shard.d,):
        raise DimensionMismatch(f"classifier has shape {w.shape}, data has d={shard.d}")
    return float(np.mean(loss(shard.y_true, shard.X @ w)) + 0.5 * a / n * (w @ w))


def risk_per_server(ws, shards, a: float) -> np.ndarray:
    n = len(shards)
    ws = np.asarray(ws, dtype=float)
    if ws.ndim == 1:
        ws = np.broadcast_to(ws, (n, ws.shape[0]))
    if ws.shape[0] != n:
        raise DimensionMismatch(f"{ws.shape[0]} classifiers for {n} shards")
    return np.array([server_risk(ws[i], shards[i], a, n) for i in range(n)])


def empirical_risk(ws, shards, spec) -> float:
    """``J({w_i}) = sum_i J_i(w_i)``; a single ``w`` is shared by all servers."""
    return float(np.sum(risk_per_server(ws, shards, spec.a)))


def accuracy(w, test) -> float:
    """Fraction of test points with ``sign(w^T x) == y_true`` (``sign(0) = +1``).

    ``test`` may be a :class:`~pdml.data.Dataset`, an ``(X, y)`` pair or an
    iterable of :class:`~pdml.data.DataSample`.
    """
    if hasattr(test, "X") and hasattr(test, "y_true"):
        X, y = test.X, test.y_true
    elif isinstance(test, tuple) and len(test) == 2:
        X, y = test
    else:
        samples = list(test)
        if not samples:
            raise EmptyTestSet("test set is empty")
        X = np.stack([s.x for s in samples])
        y = np.array([s.y_true for s in samples])
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise EmptyTestSet("test set is empty")
    w = np.asarray(w, dtype=float)
    if X.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"classifier has d={w.shape[0]}, data has d={X.shape[1]}")
    pred = np.where(X @ w >= 0, 1, -1)
    return float(np.mean(pred == np.asarray(y)))


def aggregate_classifier(history) -> np.ndarray:
    """Batch average ``(1/t) sum_k w(k)`` of a server's iterates."""
    h = np.asarray(history, dtype=float)
    if h.shape[0] < 1:
        raise ValueError("history must contain at least one iterate")
    return h.mean(axis=0)


@dataclass
class RunningAverage:
    """Incremental version of :func:`aggregate_classifier`."""

    total: np.ndarray | None = None
    count: int = 0

    def update(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        self.total = w.copy() if self.total is None else self.total + w
        self.count += 1
        return self.value

    @property
    def value(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no iterates recorded")
        return self.total / self.count


@dataclass
class AccuracySummary:
    """Accuracy of each server's final and averaged classifier."""

    final: list[float] = field(default_factory=list)
    averaged: list[float] = field(default_factory=list)

    @property
    def mean_final(self) -> float:
        return float(np.mean(self.final))

    @property
    def mean_averaged(self) -> float:
        return float(np.mean(self.averaged))


def summarize_accuracy(ws, wbars, test) -> AccuracySummary:
    return AccuracySummary(
        final=[accuracy(w, test) for w in np.asarray(ws)],
        averaged=[accuracy(w, test) for w in np.asarray(wbars)],
    )
