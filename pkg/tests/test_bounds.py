import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdml.admm import AdmmConfig, NoiseSchedule, run
from pdml.bounds import (
    ConvergenceParams,
    ObjectiveConstants,
    ParamGrid,
    bound_report,
    centralized_optimum,
    condition_margin,
    corollary_bounds,
    evaluate_params,
    generalization_term,
    iterate_bound_rhs,
    phi_value,
    r_optimal,
    rademacher_complexity,
    search_convergence_params,
    theorem1_bound,
    theorem3_bound,
    weighted_sq_norm,
)
from pdml.errors import NoFeasibleParams, RhoOutOfRange, SolverDiverged
from pdml.objective import LogisticObjective, ObjectiveSpec, QuadraticObjective
from pdml.synthetic import gaussian_blobs
from pdml.topology import build_graph, lplus, q_matrix, spectral_profile

UNIT = ObjectiveConstants(kappa=1.0, varrho=1.0)
K2 = build_graph(2, [(0, 1)])
CENTERS = np.array([[1.0, -2.0], [3.0, 0.5]])


def complete(n):
    return build_graph(n, itertools.combinations(range(n), 2))


def k2_params():
    w_opt = CENTERS.mean(axis=0)
    grads = w_opt[None, :] - CENTERS
    return search_convergence_params(spectral_profile(K2, 2), UNIT, graph=K2, w_opt=w_opt, grads_at_opt=grads), w_opt


class TestSearch:
    def test_k2_feasible(self):
        p, _ = k2_params()
        assert 0 < p.C < 1 and p.margin > 0
        assert 0 < p.alpha < min(p.M1, p.M2)
        assert p.beta_theory > 0 and p.H1 > 0 and p.H2 > 0

    @pytest.mark.parametrize("n", [3, 4])
    def test_small_complete_graphs_infeasible(self, n):
        with pytest.raises(NoFeasibleParams) as exc:
            search_convergence_params(spectral_profile(complete(n)), UNIT)
        assert exc.value.closest_margin < 0

    def test_path_infeasible(self):
        with pytest.raises(NoFeasibleParams):
            search_convergence_params(spectral_profile(build_graph(3, [(0, 1), (1, 2)])), UNIT)

    def test_margin_matches_c_below_one(self):
        # alpha < M2 exactly when C < 1
        prof = spectral_profile(K2)
        for b, l1 in [(0.1, 2.0), (0.3, 50.0)]:
            phi = phi_value(prof, UNIT, l1)
            if condition_margin(prof, b, phi) <= 0:
                continue
            p = evaluate_params(prof, UNIT, b, l1, 2.0, 1e-6)
            for frac in (0.5, 0.99, 1.01, 1.5):
                q = evaluate_params(prof, UNIT, b, l1, 2.0, frac * p.M2)
                assert (q.C < 1) == (frac < 1)

    @given(st.floats(0.05, 0.9), st.floats(1.05, 100), st.floats(1e-4, 0.2), st.floats(1e-4, 0.2))
    @settings(max_examples=60, deadline=None)
    def test_c_increasing_in_alpha(self, b, l1, a1, a2):
        prof = spectral_profile(K2)
        lo, hi = sorted((a1, a2))
        p, q = evaluate_params(prof, UNIT, b, l1, 2.0, lo), evaluate_params(prof, UNIT, b, l1, 2.0, hi)
        if 1 + p.phi - 4 * hi > 0:
            assert p.C <= q.C

    def test_phi_increases_with_lambda1(self):
        prof = spectral_profile(K2)
        vals = [phi_value(prof, UNIT, l) for l in (1.01, 2, 10, 100)]
        assert vals == sorted(vals) and vals[0] > 0

    def test_spec_constants(self):
        spec = ObjectiveSpec(a=0.5, n=4)
        k = ObjectiveConstants.from_spec(spec)
        assert k.kappa == 0.5 and k.varrho == pytest.approx(4 * 0.25 + 0.5)

    def test_as_dict_skips_r_opt(self):
        p, _ = k2_params()
        d = p.as_dict()
        assert "r_opt" not in d and d["C"] == p.C


class TestIterateBound:
    def test_empirical_bound_two_servers(self):
        p, w_opt = k2_params()
        objs = [QuadraticObjective(c) for c in CENTERS]
        worst = 0.0
        for seed in range(20):
            sched = NoiseSchedule(V=0.5, rho=0.5 * p.C, seed=seed)
            res = run(K2, None, AdmmConfig(beta=p.beta_theory, T=60, inner_tol=1e-12, perturb_primal=True),
                      sched=sched, objectives=objs)
            lhs = np.array([np.sum((r.wtilde_snapshot - w_opt) ** 2) for r in res])
            theta_sq = np.array([np.sum(r.noise_norms**2) for r in res])
            rhs = iterate_bound_rhs(p, theta_sq)
            assert np.all(lhs <= rhs)
            worst = max(worst, float(np.max(lhs / rhs)))
        assert worst < 1

    def test_rhs_recursion(self):
        p = ConvergenceParams(b=0.1, lambda1=2, lambda2=2, lambda3=1, lambda4=2, alpha=0.01, phi=0.1,
                              M1=1, M2=1, beta_theory=1, C=0.5, H2=2.0, margin=1, H1=3.0)
        th = np.array([1.0, 0.0, 4.0])
        direct = [p.C**t * (p.H1 + sum(p.C ** -k * p.H2 * th[k - 1] for k in range(1, t + 1))) for t in (1, 2, 3)]
        assert np.allclose(iterate_bound_rhs(p, th), direct)
        p.H1 = None
        with pytest.raises(ValueError):
            iterate_bound_rhs(p, th)

    def test_r_optimal_solves_system(self):
        g = complete(4)
        rng = np.random.default_rng(0)
        grads = rng.normal(size=(4, 3))
        grads -= grads.mean(axis=0)
        r = r_optimal(g, grads, beta=0.7)
        Q = q_matrix(g, 3)
        assert np.allclose(Q @ r.ravel() + grads.ravel() / 1.4, 0, atol=1e-10)

    def test_weighted_norm(self):
        g = complete(3)
        v = np.arange(6.0).reshape(3, 2)
        assert weighted_sq_norm(g, v) == pytest.approx(0.5 * v.ravel() @ lplus(g, 2) @ v.ravel())


class TestRademacher:
    def test_single_point_exact(self):
        X = np.array([[0.6, 0.8]])
        mean, se = rademacher_complexity(X, W_bound=2.0, trials=10)
        assert mean == pytest.approx(2.0) and se == pytest.approx(0.0)

    def test_orthonormal_rows(self):
        # ||sum nu_j e_j|| = sqrt(m) for every sign vector
        m = 16
        mean, _ = rademacher_complexity(np.eye(m), W_bound=1.0, trials=5)
        assert mean == pytest.approx(math.sqrt(m) / m)

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_jensen_upper_bound(self, seed):
        X = gaussian_blobs(50, d=4, seed=seed).X
        mean, se = rademacher_complexity(X, 3.0, trials=200, seed=seed)
        bound = 3.0 * math.sqrt(np.sum(X**2)) / 50
        assert mean <= bound + 4 * se + 1e-12

    def test_invalid_trials(self):
        with pytest.raises(ValueError):
            rademacher_complexity(np.eye(2), 1.0, trials=0)


class TestGeneralization:
    def test_value(self):
        g = generalization_term(math.inf, c1=2.0, c2=1.0, rad=[0.1, 0.2], m=[100, 100], delta=0.05)
        per = 0.1 + 0.2 + 2 * (2 * 2.0 * math.sqrt(2 * math.log(80) / 100))
        assert g == pytest.approx(4 * per)

    def test_decreasing_in_epsilon(self):
        vals = [generalization_term(e, 1.0, 1.0, [0.1], [100]) for e in (0.2, 0.5, 1, 5)]
        assert vals == sorted(vals, reverse=True)

    def test_corollaries(self):
        spec = ObjectiveSpec(a=0.5, n=2, R=1.0, eta=np.zeros((2, 3)))
        c1, c2 = corollary_bounds(spec, [0.1, 0.1], [50, 50])
        assert c1 - c2 == pytest.approx(1.0 / (2 * 0.5))

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            generalization_term(1.0, 1, 1, [0.1], [10], delta=1.5)


class TestReport:
    def report(self, V=0.3, R=0.5, rho_frac=0.5):
        p, w_opt = k2_params()
        spec = ObjectiveSpec(a=1.0, n=2, R=R, eta=np.full((2, 2), R))
        sched = NoiseSchedule(V=V, rho=rho_frac * p.C)
        return bound_report(p, spectral_profile(K2, 2), spec, sched, [0.1, 0.1], [100, 100], 2,
                            graph=K2, w_hat_opt=w_opt)

    def test_reduces_to_noise_free(self):
        rep = self.report(V=0.0, R=0.0)
        for t in (1, 7, 100):
            comps = rep.components(t)
            assert comps["geometric"] == 0 and comps["eta_quadratic"] == 0 and comps["eta_optimum_shift"] == 0
            assert comps["dual"] == pytest.approx(rep.theorem3_components(t)["dual"])
            assert theorem1_bound(rep, t) == pytest.approx(theorem3_bound(rep, t))

    def test_monotone(self):
        for t in (1, 50):
            assert self.report(R=0.2).theorem1_bound(t) < self.report(R=0.4).theorem1_bound(t)
            assert self.report(V=0.1).theorem1_bound(t) < self.report(V=0.2).theorem1_bound(t)

    def test_one_over_t(self):
        rep = self.report()
        ts = np.array([10.0, 100.0, 1000.0])
        const = rep.components(1e12)
        decaying = [sum(v - const[k] for k, v in rep.components(t).items()) for t in ts]
        slope = np.polyfit(np.log(ts), np.log(decaying), 1)[0]
        assert slope == pytest.approx(-1.0, abs=1e-9)

    def test_rho_out_of_range(self):
        with pytest.raises(RhoOutOfRange):
            self.report(rho_frac=1.2)

    def test_text(self):
        text = self.report().to_text(ts=(1, 10), header="hdr")
        assert text.startswith("# hdr\n[constants]")
        assert "theorem1.total" in text and "[t = 10]" in text


class TestCentralized:
    def test_gradient_vanishes(self):
        data = gaussian_blobs(80, d=3, seed=0)
        objs = [LogisticObjective(data.X[k::2], data.y_true[k::2], 0.1, 2) for k in (0, 1)]
        w = centralized_optimum(objs)
        assert np.linalg.norm(sum(o.gradient(w) for o in objs)) <= 1e-10

    def test_quadratic_mean(self):
        objs = [QuadraticObjective(c) for c in CENTERS]
        assert np.allclose(centralized_optimum(objs), CENTERS.mean(axis=0))

    def test_diverged(self):
        objs = [QuadraticObjective(c) for c in CENTERS]
        with pytest.raises(SolverDiverged):
            centralized_optimum(objs, tol=0.0, max_iters=0)


def test_default_grid():
    g = ParamGrid()
    assert g.b[0] == 0.05 and g.b[-1] == 0.95 and len(g.lambda1) == 25

