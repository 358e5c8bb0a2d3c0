"""Convergence parameters, generalization bounds and Rademacher estimates.

Notation: for a PSD matrix ``M``, ``s_max(M)`` and ``s_min(M)`` are its
largest and smallest nonzero eigenvalues; squares of those enter every
formula below (``s2_*``). ``kappa`` is the strong-convexity modulus of the
objective and ``varrho`` its gradient Lipschitz constant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoFeasibleParams, RhoOutOfRange, SolverDiverged
from .objective import debias_factor, lipschitz_gradient_constant
from .topology import Graph, SpectralProfile

DEFAULT_DELTA = 0.05


# --------------------------------------------------------------------------
# centralized reference optimum

def centralized_optimum(objectives, w0=None, tol=1e-10, max_iters=200) -> np.ndarray:
    """Minimiser of ``sum_i J_i(w)`` over a single shared ``w`` (Newton).

    ``objectives`` is a list of objects with ``value``, ``gradient`` and
    ``hessian``; use :func:`~pdml.objective.make_local_objective` to build the
    modified or perturbed variants from shards.
    """
    from .admm import newton_minimize

    d = objectives[0].d
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    w, gn, _ = newton_minimize(
        lambda v: sum(o.value(v) for o in objectives),
        lambda v: np.sum([o.gradient(v) for o in objectives], axis=0),
        lambda v: np.sum([o.hessian(v) for o in objectives], axis=0),
        w, tol=tol, max_iters=max_iters,
    )
    if not gn <= tol:
        raise SolverDiverged(f"centralized Newton stopped at gradient norm {gn:.3e}")
    return w


# --------------------------------------------------------------------------
# step-size parameter search

@dataclass(frozen=True)
class ObjectiveConstants:
    """Curvature constants of the stacked objective."""

    kappa: float
    varrho: float

    @classmethod
    def from_spec(cls, spec) -> "ObjectiveConstants":
        return cls(kappa=spec.kappa_hat, varrho=lipschitz_gradient_constant(spec))


@dataclass(frozen=True)
class ParamGrid:
    b: tuple[float, ...] = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
    lambda1: tuple[float, ...] = tuple(np.geomspace(1.01, 100.0, 25))
    lambda2: tuple[float, ...] = (1.1, 2.0, 10.0)
    alpha_fraction: tuple[float, ...] = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class ConvergenceParams:
    b: float
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    alpha: float
    phi: float
    M1: float
    M2: float
    beta_theory: float
    C: float
    H2: float
    margin: float
    H1: float | None = None
    H3: float | None = None
    r_opt: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("r_opt")
        return out


def _squares(profile: SpectralProfile):
    return dict(
        pmax=profile.sigma_max_Lplus**2,
        pmin=profile.sigma_min_Lplus**2,
        qmin=profile.sigma_min_Q**2,
        lbar=profile.sigma_max_Lbar**2,
    )


def phi_value(profile: SpectralProfile, k: ObjectiveConstants, lambda1: float) -> float:
    s = _squares(profile)
    core = 2 * k.kappa * s["qmin"] * s["pmin"] / (k.varrho**2 * s["pmin"] + 2 * k.kappa * s["pmax"])
    return (lambda1 - 1) / lambda1 * core


def condition_margin(profile: SpectralProfile, b: float, phi: float) -> float:
    """Left side of the feasibility condition; feasible iff positive."""
    s = _squares(profile)
    return (1 - b) * (1 + phi) * s["pmin"] - s["pmax"]


def _m1(s, b, phi, lambda2):
    num = b * (1 + phi) * s["pmin"] * (1 - 1 / lambda2)
    return num / (4 * b * s["pmin"] * (1 - 1 / lambda2) + 16 * s["lbar"])


def _m2(s, b, phi):
    return ((1 - b) * (1 + phi) * s["pmin"] - s["pmax"]) / (4 * s["pmax"] + 4 * (1 - b) * s["pmin"])


def evaluate_params(profile, k: ObjectiveConstants, b, lambda1, lambda2, alpha) -> ConvergenceParams:
    """All derived step-size quantities for one grid point (no feasibility check)."""
    s = _squares(profile)
    rho2 = k.varrho**2
    phi = phi_value(profile, k, lambda1)
    M1, M2 = _m1(s, b, phi, lambda2), _m2(s, b, phi)
    lam3 = 1 + 2 * k.kappa * s["pmax"] / (rho2 * s["pmin"])
    lam4 = 1 + math.sqrt((rho2 * s["pmin"] + 2 * k.kappa * s["pmax"]) / (alpha * lam3 * rho2 * s["pmin"]))
    beta = math.sqrt(lambda1 * lam3 * (lam4 - 1) * rho2 / (lam4 * (lambda1 - 1) * s["pmax"] * s["qmin"]))
    C = (1 + 4 * alpha) * s["pmax"] / ((1 - b) * (1 + phi - 4 * alpha) * s["pmin"])
    inner = math.sqrt(phi) + math.sqrt(2 * (lambda1 - 1) * s["qmin"] / (alpha * lambda1 * lam3 * rho2))
    H2 = b * (lambda2 - 1) / (1 - b) + (
        4 * phi * lambda1 * s["lbar"] / s["qmin"] + s["pmax"] * inner**2
    ) / ((1 - b) * (1 + phi) * (1 + phi - 4 * alpha) * s["pmin"])
    return ConvergenceParams(
        b=b, lambda1=lambda1, lambda2=lambda2, lambda3=lam3, lambda4=lam4, alpha=alpha,
        phi=phi, M1=M1, M2=M2, beta_theory=beta, C=C, H2=H2,
        margin=condition_margin(profile, b, phi),
    )


def search_convergence_params(
    profile: SpectralProfile,
    constants,
    grid: ParamGrid | None = None,
    *,
    graph: Graph | None = None,
    w_opt=None,
    grads_at_opt=None,
) -> ConvergenceParams:
    """Grid search for the feasible tuple with the smallest ``C``.

    ``constants`` is an :class:`ObjectiveConstants` or an object spec. Ties in
    ``C`` go to the larger feasibility margin, then to the first grid point.
    If ``graph``, ``w_opt`` (the shared optimum) and ``grads_at_opt`` (the
    ``(n, d)`` per-server gradients there) are given, ``H1`` and ``H3`` are
    filled in for ``w(0) = 0`` and ``r(0) = 0``.

    Raises
    ------
    NoFeasibleParams
        If no grid point satisfies the condition; carries the largest margin
        seen.
    """
    k = constants if isinstance(constants, ObjectiveConstants) else ObjectiveConstants.from_spec(constants)
    grid = grid or ParamGrid()
    best = None
    closest = -math.inf
    for b, l1 in itertools.product(grid.b, grid.lambda1):
        phi = phi_value(profile, k, l1)
        margin = condition_margin(profile, b, phi)
        closest = max(closest, margin)
        if margin <= 0:
            continue
        s = _squares(profile)
        for l2 in grid.lambda2:
            bound = min(_m1(s, b, phi, l2), _m2(s, b, phi))
            for frac in grid.alpha_fraction:
                p = evaluate_params(profile, k, b, l1, l2, frac * bound)
                if not p.C < 1:
                    continue
                if best is None or (p.C, -p.margin) < (best.C, -best.margin):
                    best = p
    if best is None:
        raise NoFeasibleParams(
            f"feasibility condition fails on the whole grid (largest margin {closest:.4g}, "
            f"ratio s2_max/s2_min(L+) = {profile.sigma_max_Lplus**2 / profile.sigma_min_Lplus**2:.4g})",
            closest_margin=closest,
        )
    if graph is not None and w_opt is not None:
        fill_initial_terms(best, graph, w_opt, grads_at_opt)
    return best


def r_optimal(graph: Graph, grads_at_opt, beta: float) -> np.ndarray:
    """Minimum-norm solution of ``Q r + grad / (2 beta) = 0`` as an ``(n, d)`` array.

    ``Q`` is singular; the stacked gradients at the consensus optimum sum to
    zero and so lie in its range.
    """
    vals, vecs = np.linalg.eigh(graph.laplacian() / 2.0)
    top = vals.max()
    inv = np.array([1.0 / math.sqrt(v) if v > 1e-9 * top else 0.0 for v in vals])
    q_pinv = (vecs * inv) @ vecs.T
    return -q_pinv @ np.asarray(grads_at_opt, dtype=float) / (2.0 * beta)


def fill_initial_terms(params: ConvergenceParams, graph: Graph, w_opt, grads_at_opt, w0=None, r0=None):
    """Set ``H1`` and ``H3`` for the given starting point (defaults are zeros)."""
    w_opt = np.asarray(w_opt, dtype=float)
    n, d = graph.n, w_opt.shape[0]
    w0 = np.zeros((n, d)) if w0 is None else np.asarray(w0, dtype=float)
    r0 = np.zeros((n, d)) if r0 is None else np.asarray(r0, dtype=float)
    gap = w0 - w_opt[None, :]
    params.r_opt = r_optimal(graph, grads_at_opt, params.beta_theory)
    s2max = params_s2max(graph)
    params.H1 = float(np.sum(gap**2) + 4.0 / ((1 + 4 * params.alpha) * s2max) * np.sum((r0 - params.r_opt) ** 2))
    params.H3 = float(np.sum(r0**2) + weighted_sq_norm(graph, gap))
    return params


def params_s2max(graph: Graph) -> float:
    return float(np.linalg.eigvalsh(graph.signless_laplacian()).max() ** 2)


def weighted_sq_norm(graph: Graph, v) -> float:
    """``||v||^2_{L+/2}`` for a stacked ``(n, d)`` vector."""
    v = np.asarray(v, dtype=float)
    return float(0.5 * np.sum(v * (graph.signless_laplacian() @ v)))


def iterate_bound_rhs(params: ConvergenceParams, theta_sq_norms) -> np.ndarray:
    """``C^t (H1 + sum_{k<=t} C^-k H2 ||theta(k)||^2)`` for ``t = 1..len(theta)``."""
    if params.H1 is None:
        raise ValueError("H1 is not set; pass the optimum to the search or call fill_initial_terms")
    th = np.asarray(theta_sq_norms, dtype=float)
    out = np.empty(th.shape[0])
    acc = 0.0
    for t in range(1, th.shape[0] + 1):
        # acc = sum_{k<=t} C^(t-k) x_k
        acc = params.C * acc + th[t - 1]
        out[t - 1] = params.C**t * params.H1 + params.H2 * acc
    return out


# --------------------------------------------------------------------------
# Rademacher complexity and generalization bounds

def rademacher_complexity(shard_or_X, W_bound: float, trials: int = 200, seed=0) -> tuple[float, float]:
    """Monte-Carlo estimate of the empirical Rademacher complexity of the ball
    ``||w|| <= W_bound``; returns ``(mean, standard error)``.

    The supremum over the ball is ``W_bound * ||sum_j nu_j x_j||`` exactly.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    X = np.asarray(getattr(shard_or_X, "X", shard_or_X), dtype=float)
    m = X.shape[0]
    rng = np.random.default_rng(seed)
    vals = np.empty(trials)
    for k in range(trials):
        nu = rng.integers(0, 2, size=m) * 2.0 - 1.0
        vals[k] = W_bound * np.linalg.norm(nu @ X) / m
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), se


def generalization_term(epsilon, c1, c2, rad, m, delta=DEFAULT_DELTA) -> float:
    """``4 (e^eps+1)/(e^eps-1) sum_i (c2 Rad_i + 2 c1 sqrt(2 ln(4/delta) / m_i))``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rad = np.asarray(rad, dtype=float)
    m = np.asarray(m, dtype=float)
    per = c2 * rad + 2 * c1 * np.sqrt(2 * math.log(4 / delta) / m)
    return float(4 * debias_factor(epsilon) * np.sum(per))


def corollary_bounds(spec, rad, m, delta=DEFAULT_DELTA) -> tuple[float, float]:
    """``(corollary1, corollary2)``; the first adds ``R^2 / (n kappa)``."""
    c2 = generalization_term(spec.epsilon, spec.c1, spec.c2, rad, m, delta) / spec.n
    c1 = c2 + spec.R**2 / (spec.n * spec.kappa_hat)
    return c1, c2


@dataclass
class BoundReport:
    """Closed-form bounds as functions of the round ``t``.

    ``noise_total`` is ``sum_i d V_i^2``. The two ``eta`` terms bound
    ``sum_i eta_i^T (w_opt - wbar_i)``, which vanishes identically when
    ``R = 0``; they are dropped in that case.
    """

    n: int
    C: float
    H1: float
    H2: float
    H3: float
    H3_unperturbed: float
    beta: float
    rho: float
    R: float
    kappa: float
    noise_total: float
    spectral_factor: float
    generalization: float
    corollary1: float
    corollary2: float
    delta: float = DEFAULT_DELTA

    def components(self, t) -> dict:
        t = np.asarray(t, dtype=float)
        eta_on = self.R > 0
        geo = (self.C / (1 - self.C)) * (self.H1 + self.rho * self.H2 / (self.C - self.rho) * self.noise_total)
        return {
            "geometric": (geo / (2 * t)) if eta_on else 0.0 * t,
            "eta_quadratic": self.n * self.R**2 / 2 if eta_on else 0.0,
            "dual": self.beta / t * (self.H3 + self.spectral_factor * self.noise_total / (1 - self.rho)),
            "eta_optimum_shift": self.R**2 / (self.n * self.kappa),
            "generalization": self.generalization,
        }

    def theorem1_bound(self, t):
        return sum(self.components(t).values())

    def theorem3_components(self, t) -> dict:
        t = np.asarray(t, dtype=float)
        return {"dual": self.beta / t * self.H3_unperturbed, "generalization": self.generalization}

    def theorem3_bound(self, t):
        return sum(self.theorem3_components(t).values())

    def to_text(self, ts=(1, 10, 100, 1000), header: str | None = None) -> str:
        lines = []
        if header:
            lines.extend("# " + h for h in header.splitlines())
        lines.append("[constants]")
        for key in ("n", "C", "H1", "H2", "H3", "H3_unperturbed", "beta", "rho", "R", "kappa",
                    "noise_total", "spectral_factor", "delta"):
            lines.append(f"{key} = {getattr(self, key):.10g}")
        lines.append("[corollaries]")
        lines.append(f"corollary1 = {self.corollary1:.10g}")
        lines.append(f"corollary2 = {self.corollary2:.10g}")
        for t in ts:
            lines.append(f"[t = {t}]")
            for name, v in self.components(t).items():
                lines.append(f"theorem1.{name} = {float(v):.10g}")
            lines.append(f"theorem1.total = {float(self.theorem1_bound(t)):.10g}")
            for name, v in self.theorem3_components(t).items():
                lines.append(f"theorem3.{name} = {float(v):.10g}")
            lines.append(f"theorem3.total = {float(self.theorem3_bound(t)):.10g}")
        return "\n".join(lines) + "\n"


def bound_report(
    params: ConvergenceParams,
    profile: SpectralProfile,
    spec,
    sched,
    rad,
    m,
    d: int,
    *,
    graph: Graph,
    w_hat_opt,
    delta=DEFAULT_DELTA,
) -> BoundReport:
    """Assemble a :class:`BoundReport` from searched parameters.

    ``w_hat_opt`` is the optimum of the unperturbed objective (used by the
    noise-free bound); ``params`` must carry ``H1``/``H3`` for the perturbed
    optimum.

    Raises
    ------
    RhoOutOfRange
        If the decay rate is not in ``(0, C)``.
    """
    rho = sched.rho
    if not 0 < rho < params.C:
        raise RhoOutOfRange(f"rho = {rho} must lie in (0, C) with C = {params.C:.6g}")
    if params.H1 is None or params.H3 is None:
        raise ValueError("params lack H1/H3")
    spectral_factor = profile.sigma_max_Lplus**2 / (2 * profile.sigma_max_Lminus**2) + 2 * profile.sigma_max_Q**2
    gen = generalization_term(spec.epsilon, spec.c1, spec.c2, rad, m, delta)
    cor1, cor2 = corollary_bounds(spec, rad, m, delta)
    gap = -np.broadcast_to(np.asarray(w_hat_opt, dtype=float), (graph.n, d))
    return BoundReport(
        n=graph.n, C=params.C, H1=params.H1, H2=params.H2, H3=params.H3,
        H3_unperturbed=weighted_sq_norm(graph, gap), beta=params.beta_theory, rho=rho,
        R=spec.R, kappa=spec.kappa_hat, noise_total=sched.total_initial_variance(d),
        spectral_factor=spectral_factor, generalization=gen, corollary1=cor1, corollary2=cor2,
        delta=delta,
    )


def theorem1_bound(report: BoundReport, t):
    return report.theorem1_bound(t)


def theorem3_bound(report: BoundReport, t):
    return report.theorem3_bound(t)

