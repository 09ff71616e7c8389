import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset
from egohpo.acquisition import (
    AcquisitionContext,
    SearchBudget,
    expected_improvement,
    maximize_ei,
    propose_batch,
    q_expected_improvement,
    qei_estimate,
)
from egohpo.doe import lhs_sample
from egohpo.errors import DomainError
from egohpo.gp import KernelParams, build_model, fit


def mc_ei(mean, sd, f_min, n, rng):
    """Oracle: average improvement over draws from N(mean, sd^2)."""
    y = rng.normal(mean, sd, n)
    imp = np.maximum(f_min - y, 0.0)
    return imp.mean(), imp.std(ddof=1) / math.sqrt(n)


class TestExpectedImprovement:
    def test_deterministic_improvement(self):
        assert expected_improvement(0.2, 0.0, 1.0) == pytest.approx(0.8, abs=1e-15)

    def test_no_improvement_possible(self):
        assert expected_improvement(1.5, 0.0, 1.0) == 0.0

    def test_at_incumbent_unit_sd(self):
        ei = expected_improvement(1.0, 1.0, 1.0)
        assert ei == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
        est, se = mc_ei(1.0, 1.0, 1.0, 10**7, np.random.default_rng(0))
        assert abs(ei - est) <= 3 * se
        assert ei == pytest.approx(0.39894, abs=1e-5)

    def test_far_above_incumbent_vanishes(self):
        assert expected_improvement(10.0, 1.0, 0.0) <= 1e-6

    def test_vectorized(self):
        out = expected_improvement(np.array([0.2, 1.5, 1.0]), np.array([0.0, 0.0, 1.0]), 1.0)
        np.testing.assert_allclose(out, [0.8, 0.0, 1 / math.sqrt(2 * math.pi)], atol=1e-12)

    @pytest.mark.parametrize("args", [(np.nan, 1.0, 0.0), (0.0, np.inf, 0.0), (0.0, 1.0, np.nan), (0.0, -1.0, 0.0)])
    def test_bad_inputs(self, args):
        with pytest.raises(DomainError):
            expected_improvement(*args)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(1)
        hits = 0
        for _ in range(30):
            m, s, f = rng.normal(), rng.uniform(0.1, 2.0), rng.normal()
            est, se = mc_ei(m, s, f, 10**6, rng)
            hits += abs(expected_improvement(m, s, f) - est) <= 3 * se
        assert hits >= 29

    @settings(max_examples=200, deadline=None)
    @given(m=st.floats(-5, 5), dm=st.floats(0, 5), s=st.floats(0.01, 3), f=st.floats(-5, 5))
    def test_nonincreasing_in_mean(self, m, dm, s, f):
        assert expected_improvement(m + dm, s, f) <= expected_improvement(m, s, f) + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(gap=st.floats(0, 5), s=st.floats(0, 3), ds=st.floats(0, 3), f=st.floats(-5, 5))
    def test_nondecreasing_in_sd_above_incumbent(self, gap, s, ds, f):
        assert expected_improvement(f + gap, s + ds, f) >= expected_improvement(f + gap, s, f) - 1e-12


@pytest.fixture
def model2d():
    rng = np.random.default_rng(4)
    X, y = random_dataset(rng, 12, 2)
    return fit(X, y)


class TestQei:
    def test_single_point_matches_analytic(self, model2d):
        ctx = AcquisitionContext(f_min=float(model2d.y.min()), mc_samples=20000, seed=3)
        x = np.array([[0.31, 0.77]])
        mu, var = model2d.predict(x)
        est, se = qei_estimate(model2d, x, ctx)
        assert abs(est - expected_improvement(mu[0], math.sqrt(var[0]), ctx.f_min)) <= 3 * se

    def test_duplicate_rows(self, model2d):
        ctx = AcquisitionContext(f_min=float(model2d.y.min()), mc_samples=20000, seed=3)
        x = np.array([[0.31, 0.77]])
        mu, var = model2d.predict(x)
        ei = expected_improvement(mu[0], math.sqrt(var[0]), ctx.f_min)
        est, se = qei_estimate(model2d, np.vstack([x, x]), ctx)
        assert abs(est - ei) <= 3 * se + 1e-6

    def test_duplicates_unbiased_at_small_variance(self):
        # near a training point the posterior sd is tiny; any fixed jitter
        # would decorrelate the copies and inflate the estimate
        X = lhs_sample(2, 15, seed=3).points
        y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
        model = build_model(X, y, KernelParams([2.0, 2.0], 1e-8))
        i = int(np.argmin(y))
        x = X[[i]] + 1e-3
        mu, var = model.predict(x)
        assert math.sqrt(var[0]) < 1e-2 * model.scale
        f_min = float(mu[0]) + 0.5 * math.sqrt(var[0])
        ei = expected_improvement(mu[0], math.sqrt(var[0]), f_min)
        z = []
        for seed in range(40):
            ctx = AcquisitionContext(f_min=f_min, mc_samples=4096, seed=seed)
            est, se = qei_estimate(model, np.vstack([x, x, x]), ctx)
            z.append((est - ei) / se)
        assert abs(np.mean(z)) < 0.6

    def test_two_distant_points_dominate(self, model2d):
        ctx = AcquisitionContext(f_min=float(model2d.y.min()), mc_samples=20000, seed=9)
        Xq = np.array([[0.02, 0.05], [0.97, 0.93]])
        mu, var = model2d.predict(Xq)
        eis = expected_improvement(mu, np.sqrt(var), ctx.f_min)
        est, se = qei_estimate(model2d, Xq, ctx)
        assert est >= eis.max() - 3 * se

    def test_row_permutation_invariant(self, model2d):
        ctx = AcquisitionContext(f_min=float(model2d.y.min()), mc_samples=4096, seed=11)
        Xq = np.random.default_rng(0).random((4, 2))
        base = q_expected_improvement(model2d, Xq, ctx)
        for perm in ([3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]):
            assert q_expected_improvement(model2d, Xq[perm], ctx) == base

    def test_deterministic_given_seed(self, model2d):
        ctx = AcquisitionContext(f_min=float(model2d.y.min()), mc_samples=2000, seed=5)
        Xq = np.array([[0.1, 0.2], [0.8, 0.4]])
        assert q_expected_improvement(model2d, Xq, ctx) == q_expected_improvement(model2d, Xq, ctx)

    def test_needs_enough_samples(self, model2d):
        with pytest.raises(DomainError):
            q_expected_improvement(model2d, [[0.5, 0.5]], AcquisitionContext(0.0, mc_samples=10))


def bowl_model():
    """GP on a bowl whose minimum at (0.62, 0.38) lies away from every sample."""
    centre = np.array([0.62, 0.38])
    X = lhs_sample(2, 14, seed=2).points
    X = X[np.linalg.norm(X - centre, axis=1) > 0.15]
    y = np.sum((X - centre) ** 2, axis=1)
    return fit(X, y), centre


class TestProposeBatch:
    def test_first_point_near_grid_argmax(self):
        model, _ = bowl_model()
        f_min = float(model.y.min())
        g = np.linspace(0, 1, 101)
        G = np.array(np.meshgrid(g, g, indexing="ij")).reshape(2, -1).T
        mu, var = model.predict(G)
        grid_best = G[np.argmax(expected_improvement(mu, np.sqrt(var), f_min))]
        batch = propose_batch(model, 2, 1, AcquisitionContext(f_min, seed=0))
        assert np.linalg.norm(batch.points[0] - grid_best) <= 0.05

    def test_q1_single_point(self, model2d):
        b = propose_batch(model2d, 2, 1, AcquisitionContext(float(model2d.y.min())), kind="ei")
        assert b.points.shape == (1, 2) and b.q == 1 and b.qei is None

    def test_q4_distinct_in_cube(self, model2d):
        b = propose_batch(model2d, 2, 4, AcquisitionContext(float(model2d.y.min()), seed=1))
        assert b.q == 4
        assert np.all((b.points >= 0) & (b.points <= 1))
        dist = np.linalg.norm(b.points[:, None] - b.points[None], axis=2)
        assert dist[np.triu_indices(4, 1)].min() >= 1e-9
        assert b.qei is not None and b.qei >= 0

    def test_first_pick_beats_every_start(self, model2d):
        f_min = float(model2d.y.min())
        budget = SearchBudget(multistarts=16, local_steps=30)
        ctx = AcquisitionContext(f_min, seed=4)
        b = propose_batch(model2d, 2, 1, ctx, budget, kind="ei")
        seed0 = int(np.random.SeedSequence(4).spawn(1)[0].generate_state(1)[0])
        starts = lhs_sample(2, 16, seed0).points
        mu, var = model2d.predict(starts)
        assert b.scores[0] >= expected_improvement(mu, np.sqrt(var), f_min).max()

    def test_deterministic(self, model2d):
        ctx = AcquisitionContext(float(model2d.y.min()), seed=8)
        a = propose_batch(model2d, 2, 3, ctx)
        b = propose_batch(model2d, 2, 3, ctx)
        assert np.array_equal(a.points, b.points) and a.qei == b.qei

    def test_degenerate_flag(self, model2d):
        ctx = AcquisitionContext(float(model2d.y.min()) - 1e6, seed=0)
        b = propose_batch(model2d, 2, 2, ctx, SearchBudget(8, 5))
        assert b.degenerate
        assert b.q == 2
        assert np.linalg.norm(b.points[0] - b.points[1]) >= 1e-9

    def test_maximize_ei_sorted(self, model2d):
        x, v = maximize_ei(model2d, float(model2d.y.min()), SearchBudget(10, 20), seed=0)
        assert np.all(np.diff(v) <= 0)

    def test_bad_arguments(self, model2d):
        ctx = AcquisitionContext(0.0)
        with pytest.raises(DomainError):
            propose_batch(model2d, 2, 0, ctx)
        with pytest.raises(DomainError):
            propose_batch(model2d, 3, 1, ctx)
        with pytest.raises(DomainError):
            propose_batch(model2d, 2, 1, ctx, kind="ucb")
