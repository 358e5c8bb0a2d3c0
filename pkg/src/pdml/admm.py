"""Fully distributed consensus ADMM with optional privacy perturbations.

Each server ``i`` keeps a primal ``w_i`` and a dual ``gamma_i`` and only talks
to its neighbours ``N_i``. One synchronous round is

    w_i(t+1)      = argmin_w  J_i(w) + gamma_i(t)^T w
                              + beta * sum_{l in N_i} ||w - (wt_i(t) + wt_l(t)) / 2||^2
    wt_i(t+1)     = w_i(t+1) + theta_i(t+1),   theta_i(t) ~ N(0, rho^(t-1) V_i^2 I)
    gamma_i(t+1)  = gamma_i(t) + beta * sum_{l in N_i} (wt_i(t+1) - wt_l(t+1))

where ``wt`` are the copies actually sent over the links. Without primal
perturbation ``wt = w`` and the recursion is plain decentralized ADMM. The
primal subproblem is solved by damped Newton.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InnerSolverDiverged, PDMLError
from .metrics import IterationRecord, consensus_error, consensus_vec_gap
from .objective import LogisticObjective, ObjectiveSpec
from .topology import Graph

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
MAX_BACKTRACKS = 50


@dataclass
class ServerState:
    id: int
    w: np.ndarray
    gamma: np.ndarray
    wtilde: np.ndarray
    objective: object
    neighbors: tuple[int, ...]
    w_sum: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        if self.w_sum is None:
            self.w_sum = np.zeros_like(self.w)

    @property
    def wbar(self) -> np.ndarray:
        return self.w_sum / self.t if self.t else self.w.copy()


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-server Gaussian noise with variance ``rho^(t-1) V_i^2`` at round ``t``."""

    V: tuple[float, ...] | float = 0.0
    rho: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if np.any(np.asarray(self.V) < 0):
            raise ValueError("noise scales V_i must be non-negative")

    def V_of(self, server: int) -> float:
        V = np.asarray(self.V, dtype=float)
        return float(V) if V.ndim == 0 else float(V[server])

    def variance(self, t: int, server: int) -> float:
        if t < 1:
            raise ValueError("rounds are numbered from 1")
        return self.rho ** (t - 1) * self.V_of(server) ** 2

    def draw(self, t: int, server: int, d: int) -> np.ndarray:
        """``theta_i(t)``; depends only on ``(seed, server, t)``."""
        var = self.variance(t, server)
        if var == 0.0:
            return np.zeros(d)
        rng = np.random.default_rng([self.seed, server, t])
        return math.sqrt(var) * rng.standard_normal(d)

    def total_initial_variance(self, d: int) -> float:
        """``sum_i d V_i^2``."""
        V = np.asarray(self.V, dtype=float)
        return float(d * np.sum(V**2)) if V.ndim else float(d * V**2)


@dataclass
class AdmmConfig:
    beta: float
    T: int
    inner_tol: float = 1e-8
    inner_max_iters: int = 100
    perturb_primal: bool = False
    perturb_objective: bool = False
    variant: str = "modified_loss"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if self.variant not in ("original_loss", "modified_loss"):
            raise ValueError(f"unknown variant {self.variant!r}")


# --------------------------------------------------------------------------
# inner solver

def newton_minimize(f, grad, hess, w0, tol=1e-8, max_iters=100):
    """Damped Newton with Armijo backtracking.

    Returns ``(w, grad_norm, iterations)``. Stops when ``||grad|| <= tol``.
    Once the predicted decrease drops below the round-off level of ``f`` the
    Armijo test is meaningless, and a full step is accepted if it shrinks the
    gradient instead.
    """
    w = np.array(w0, dtype=float, copy=True)
    g = grad(w)
    gn = float(np.linalg.norm(g))
    k = 0
    while gn > tol and k < max_iters:
        k += 1
        try:
            p = -np.linalg.solve(hess(w), g)
        except np.linalg.LinAlgError:
            p = -g
        slope = float(g @ p)
        if not slope < 0:
            p, slope = -g, -gn * gn
        fw = f(w)
        if -slope <= 1e-13 * max(1.0, abs(fw)):
            cand = w + p
            g_new = grad(cand)
            gn_new = float(np.linalg.norm(g_new))
            if not gn_new < gn:
                break
        else:
            step = 1.0
            for _ in range(MAX_BACKTRACKS):
                cand = w + step * p
                if f(cand) <= fw + ARMIJO_C * step * slope:
                    break
                step *= ARMIJO_SHRINK
            else:
                break
            g_new = grad(cand)
            gn_new = float(np.linalg.norm(g_new))
        if not np.isfinite(gn_new):
            break
        w, g, gn = cand, g_new, gn_new
    return w, gn, k


def _subproblem(state: ServerState, wt_self, wt_nbrs, beta):
    """Value, gradient and Hessian of server ``i``'s primal subproblem."""
    obj = state.objective
    N = len(wt_nbrs)
    anchor = beta * (N * wt_self + np.sum(wt_nbrs, axis=0))
    mids = [0.5 * (wt_self + wl) for wl in wt_nbrs]
    gamma = state.gamma
    d = gamma.shape[0]

    def f(w):
        prox = sum(float((w - m) @ (w - m)) for m in mids)
        return obj.value(w) + float(gamma @ w) + beta * prox

    def grad(w):
        return obj.gradient(w) + gamma + 2.0 * beta * N * w - anchor

    def hess(w):
        return obj.hessian(w) + 2.0 * beta * N * np.eye(d)

    return f, grad, hess


def primal_update(state: ServerState, neighbor_ws: dict, cfg: AdmmConfig, spec: ObjectiveSpec | None = None, t: int = 0):
    """Minimise the local augmented Lagrangian of ``state`` (warm start at ``w_i``).

    ``neighbor_ws`` maps server ids in ``N_i`` and ``i`` itself to the
    exchanged classifiers of the previous round.
    """
    missing = [l for l in (state.id, *state.neighbors) if l not in neighbor_ws]
    if missing:
        raise KeyError(f"server {state.id} is missing classifiers from {missing}")
    wt_self = np.asarray(neighbor_ws[state.id], dtype=float)
    wt_nbrs = [np.asarray(neighbor_ws[l], dtype=float) for l in state.neighbors]
    f, grad, hess = _subproblem(state, wt_self, wt_nbrs, cfg.beta)
    w, gn, _ = newton_minimize(f, grad, hess, state.w, cfg.inner_tol, cfg.inner_max_iters)
    if not np.isfinite(gn) or gn > 100.0 * cfg.inner_tol:
        raise InnerSolverDiverged(
            f"inner Newton stopped with gradient norm {gn:.3e} (tol {cfg.inner_tol:g})",
            iteration=t,
            server=state.id,
        )
    return w


def perturb_primal(w, sched: NoiseSchedule | None, t: int, server: int):
    """``w + theta_i(t)``; identity when there is no schedule or ``V_i = 0``."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    w = np.asarray(w, dtype=float)
    if sched is None:
        return w.copy()
    return w + sched.draw(t, server, w.shape[0])


def dual_update(state: ServerState, own_and_neighbor_ws: dict, beta: float) -> np.ndarray:
    wi = np.asarray(own_and_neighbor_ws[state.id], dtype=float)
    inc = np.zeros_like(wi)
    for l in state.neighbors:
        inc += wi - np.asarray(own_and_neighbor_ws[l], dtype=float)
    return state.gamma + beta * inc


# --------------------------------------------------------------------------
# driver

@dataclass(frozen=True)
class Message:
    """A classifier sent over a link, tagged with the round that produced it."""

    sender: int
    t: int
    w: np.ndarray


def build_objectives(shards, cfg: AdmmConfig, spec: ObjectiveSpec):
    """Per-server training objectives built from the reported labels only."""
    eps = spec.epsilon if cfg.variant == "modified_loss" else math.inf
    out = []
    for s in shards:
        eta = spec.eta_for(s.server_id, s.d) if cfg.perturb_objective else None
        out.append(LogisticObjective(s.X, s.labels("reported"), spec.a, spec.n, eps, eta))
    return out


def default_evaluator(shards, spec: ObjectiveSpec):
    """Per-server true-label risk, or None when the shards carry no true labels."""
    from .metrics import risk_per_server

    if shards is None:
        return None
    return lambda ws: risk_per_server(ws, shards, spec.a)


@dataclass
class RunResult:
    records: list[IterationRecord]
    states: list[ServerState] = field(default_factory=list)

    @property
    def w(self) -> np.ndarray:
        return np.stack([s.w for s in self.states])

    @property
    def wbar(self) -> np.ndarray:
        return np.stack([s.wbar for s in self.states])

    @property
    def gamma(self) -> np.ndarray:
        return np.stack([s.gamma for s in self.states])

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]


def run(
    graph: Graph,
    shards,
    cfg: AdmmConfig,
    spec: ObjectiveSpec | None = None,
    sched: NoiseSchedule | None = None,
    *,
    objectives=None,
    evaluator=None,
    workers: int = 1,
    callback=None,
) -> RunResult:
    """Run ``cfg.T`` synchronous rounds from ``w(0) = 0, gamma(0) = 0``.

    Parameters
    ----------
    shards
        Local data (labels read from ``y_reported``). May be None when
        ``objectives`` is given directly.
    objectives
        Optional list of per-server objects exposing ``value``, ``gradient``
        and ``hessian``; overrides the logistic objectives built from shards.
    evaluator
        ``ws -> per-server risk``; defaults to the true-label logistic risk.
    workers
        Thread count for the primal phase; output is identical for any value.
    callback
        Called with each :class:`IterationRecord` as it is produced.
    """
    if objectives is None:
        if shards is None or spec is None:
            raise ValueError("need shards and spec, or explicit objectives")
        if len(shards) != graph.n:
            raise DimensionMismatch(f"{len(shards)} shards for {graph.n} servers")
        objectives = build_objectives(shards, cfg, spec)
        if evaluator is None:
            evaluator = default_evaluator(shards, spec)
    if len(objectives) != graph.n:
        raise DimensionMismatch(f"{len(objectives)} objectives for {graph.n} servers")
    d = objectives[0].d
    use_noise = sched if cfg.perturb_primal else None

    states = [
        ServerState(id=i, w=np.zeros(d), gamma=np.zeros(d), wtilde=np.zeros(d), objective=objectives[i], neighbors=graph.neighbors[i])
        for i in range(graph.n)
    ]
    inbox = {i: Message(i, 0, np.zeros(d)) for i in range(graph.n)}
    records = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def primal(i, t):
        s = states[i]
        view = {}
        for l in (i, *s.neighbors):
            msg = inbox[l]
            if msg.t != t - 1:
                raise PDMLError(f"server {i} read round-{msg.t} data from {l} during round {t}")
            view[l] = msg.w
        return primal_update(s, view, cfg, spec, t)

    try:
        for t in range(1, cfg.T + 1):
            if pool is None:
                new_w = [primal(i, t) for i in range(graph.n)]
            else:
                new_w = list(pool.map(lambda i: primal(i, t), range(graph.n)))
            thetas = []
            for s, w in zip(states, new_w):
                s.w = w
                s.wtilde = perturb_primal(w, use_noise, t, s.id)
                thetas.append(float(np.linalg.norm(s.wtilde - w)))
                s.w_sum = s.w_sum + w
                s.t = t
            # barrier: publish every server's round-t classifier
            inbox = {s.id: Message(s.id, t, s.wtilde) for s in states}
            view = {l: m.w for l, m in inbox.items()}
            for s in states:
                s.gamma = dual_update(s, view, cfg.beta)

            W = np.stack([s.w for s in states])
            Wt = np.stack([s.wtilde for s in states])
            Wbar = np.stack([s.wbar for s in states])
            risk = evaluator(W) if evaluator else np.full(graph.n, np.nan)
            risk_bar = evaluator(Wbar) if evaluator else None
            rec = IterationRecord(
                t=t,
                risk_per_server=np.asarray(risk, dtype=float),
                consensus_norm_gap=consensus_error(W),
                consensus_vec_gap=consensus_vec_gap(W),
                w_snapshot=W,
                wtilde_snapshot=Wt,
                wbar_snapshot=Wbar,
                noise_norms=np.array(thetas),
                risk_bar_per_server=None if risk_bar is None else np.asarray(risk_bar, dtype=float),
                gamma_sum_norm=float(np.linalg.norm(np.sum([s.gamma for s in states], axis=0))),
            )
            records.append(rec)
            if callback is not None:
                callback(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(records=records, states=states)
