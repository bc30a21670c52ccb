import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_graph, random_graph
from ssnmf.core import HyperspectralImage, objective
from ssnmf.data import SceneSpec, synthesize_scene
from ssnmf.errors import ParameterError, ShapeError
from ssnmf.evaluation import evaluate
from ssnmf.experiments import TrialSettings, solve_variant
from ssnmf.graph import NeighborGraph
from ssnmf.solver import (SolverConfig, abundance_step, endmember_step,
                          init_abundances, init_endmembers, rescale, run,
                          unmix, update_abundances, update_endmembers)

EPS = 1e-12


def random_instance(rng, L=6, K=3, N=10):
    return (rng.uniform(0.1, 1, (L, N)), rng.uniform(0.1, 1, (L, K)),
            rng.uniform(0.1, 1, (K, N)))


class TestSolverConfig:
    @pytest.mark.parametrize("kw", [dict(k=0), dict(k=2, lam=-1), dict(k=2, alpha=-1),
                                    dict(k=2, tau=0), dict(k=2, max_iter=0),
                                    dict(k=2, epsilon=0), dict(k=2, norm_mode="frob")])
    def test_validation(self, kw):
        with pytest.raises(ParameterError):
            SolverConfig(**kw)

    def test_variant_names(self):
        assert SolverConfig(2).variant == "nmf"
        assert SolverConfig(2, alpha=1).variant == "l1-nmf"
        assert SolverConfig(2, lam=1).variant == "graph-nmf"
        assert SolverConfig(2, lam=1, alpha=1).variant == "ssnmf"

    def test_defaults(self):
        c = SolverConfig(3)
        assert (c.tau, c.max_iter, c.epsilon, c.norm_mode) == (1e-5, 500, 1e-12, "l2_columns")


class TestInitEndmembers:
    def test_single_pick_is_a_pixel(self, rng):
        Y = rng.uniform(size=(5, 30))
        M = init_endmembers(Y, 1, seed=4).data
        assert any(np.array_equal(M[:, 0], Y[:, n]) for n in range(30))

    def test_crosses_orthogonal_classes(self):
        a, b = np.array([1.0, 0, 0]), np.array([0, 0.5, 1.0])
        Y = np.column_stack([a * s for s in (1, 2, 3)] + [b * s for s in (1, 2, 3, 4)])
        for seed in range(10):
            M = init_endmembers(Y, 2, seed).data
            classes = {int(M[0, j] > 0) for j in range(2)}
            assert classes == {0, 1}

    def test_deterministic(self, rng):
        Y = rng.uniform(size=(5, 300))
        np.testing.assert_array_equal(init_endmembers(Y, 4, 9).data,
                                      init_endmembers(Y, 4, 9).data)

    def test_k_larger_than_n(self):
        with pytest.raises(ParameterError):
            init_endmembers(np.ones((3, 2)), 3)


class TestInitAbundances:
    def test_single_endmember_is_one(self):
        np.testing.assert_array_equal(init_abundances(1, 7, 0).data, 1.0)

    def test_columns_sum_to_one(self):
        A = init_abundances(4, 100, 3).data
        np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)
        assert A.min() > 0

    def test_deterministic(self):
        np.testing.assert_array_equal(init_abundances(3, 9, 5).data,
                                      init_abundances(3, 9, 5).data)


class TestUpdateEndmembers:
    def test_fixed_point(self, rng):
        _, M, A = random_instance(rng)
        M2 = update_endmembers(M @ A, M, A).data
        np.testing.assert_allclose(M2, M, rtol=1e-9)

    def test_zero_is_absorbing(self, rng):
        Y, M, A = random_instance(rng)
        M[2, 1] = 0
        assert update_endmembers(Y, M, A).data[2, 1] == 0

    def test_scalar_loop(self, rng):
        Y, M, A = random_instance(rng, 3, 2, 4)
        expected = np.zeros_like(M)
        for l in range(3):
            for k in range(2):
                num = sum(Y[l, n] * A[k, n] for n in range(4))
                den = sum(M[l, j] * A[j, n] * A[k, n] for j in range(2) for n in range(4))
                expected[l, k] = M[l, k] * num / (den + EPS)
        np.testing.assert_allclose(update_endmembers(Y, M, A).data, expected, rtol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            update_endmembers(np.ones((3, 4)), np.ones((3, 2)), np.ones((2, 5)))


class TestUpdateAbundances:
    def test_fixed_point(self, rng):
        _, M, A = random_instance(rng)
        np.testing.assert_allclose(update_abundances(M @ A, M, A).data, A, rtol=1e-9)

    def test_reduces_to_plain_nmf(self, rng):
        Y, M, A = random_instance(rng)
        plain = A * (M.T @ Y) / (M.T @ M @ A + EPS)
        np.testing.assert_array_equal(update_abundances(Y, M, A).data, plain)

    def test_scalar_loop(self, rng):
        Y, M, A = random_instance(rng, 4, 2, 2)
        W = np.array([[0, 0.7], [0.7, 0]])
        lam, alpha = 0.4, 0.3
        MtY, MtM = M.T @ Y, M.T @ M
        expected = np.zeros_like(A)
        for k in range(2):
            for n in range(2):
                aw = sum(A[k, i] * W[i, n] for i in range(2))
                ad = A[k, n] * sum(W[:, n])
                mma = sum(MtM[k, j] * A[j, n] for j in range(2))
                expected[k, n] = A[k, n] * (MtY[k, n] + lam * aw) / (mma + lam * ad + alpha + EPS)
        got = update_abundances(Y, M, A, dense_graph(W), lam, alpha).data
        np.testing.assert_allclose(got, expected, rtol=1e-13)

    def test_gradient_descent_form(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 30))
            Y, M, A = random_instance(rng, 5, 3, n)
            g = random_graph(n, rng)
            lam, alpha = rng.uniform(0, 1, 2)
            # gradient of the full objective for A > 0, lasso included
            R = M @ A - Y
            grad = M.T @ R + lam * (A * g.degrees - A @ g.weights.toarray()) + alpha
            v = -A / (M.T @ M @ A + lam * A * g.degrees + alpha)
            got = update_abundances(Y, M, A, g, lam, alpha, epsilon=1e-300).data
            np.testing.assert_allclose(got, A + v * grad, rtol=0, atol=1e-8)

    def test_needs_graph_for_lambda(self, rng):
        Y, M, A = random_instance(rng)
        with pytest.raises(ParameterError):
            update_abundances(Y, M, A, None, lam=1.0)
        with pytest.raises(ShapeError):
            update_abundances(Y, M, A, NeighborGraph.empty(3), lam=1.0)


class TestUpdateMonotonicity:
    """Each individual multiplicative step never raises the objective."""

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31))
    def test_steps_do_not_increase_objective(self, seed):
        rng = np.random.default_rng(seed)
        L, K, N = rng.integers(2, 30), rng.integers(1, 6), rng.integers(2, 100)
        Y, M, A = random_instance(rng, L, K, N)
        g = random_graph(int(N), rng)
        lam, alpha = rng.uniform(0, 1, 2)
        f = lambda M, A: objective(Y, M, A, g, lam, alpha).total
        for _ in range(10):
            before = f(M, A)
            A = abundance_step(Y, M, A, g, lam, alpha)
            mid = f(M, A)
            M = endmember_step(Y, M, A)
            after = f(M, A)
            assert mid <= before * (1 + 1e-10)
            assert after <= mid * (1 + 1e-10)
            M, A = rescale(M, A)
            M, A = M.data, A.data


class TestRescale:
    def test_unit_columns_unchanged(self, rng):
        M = rng.uniform(size=(5, 3))
        M /= np.linalg.norm(M, axis=0)
        A = rng.uniform(size=(3, 8))
        M2, A2 = rescale(M, A)
        np.testing.assert_allclose(M2.data, M, rtol=1e-15)
        np.testing.assert_allclose(A2.data, A, rtol=1e-15)

    def test_gauge_fixing(self, rng):
        M = rng.uniform(size=(5, 3))
        M /= np.linalg.norm(M, axis=0)
        A = rng.uniform(size=(3, 8))
        M2, A2 = rescale(3 * M, A / 3)
        np.testing.assert_allclose(M2.data, M, rtol=1e-14)
        np.testing.assert_allclose(A2.data, A, rtol=1e-14)

    def test_product_and_fit_preserved(self, rng):
        for _ in range(100):
            Y, M, A = random_instance(rng, 7, 4, 12)
            M *= rng.uniform(0.01, 100, size=4)
            M2, A2 = rescale(M, A)
            P = M @ A
            assert np.linalg.norm(M2.data @ A2.data - P) / np.linalg.norm(P) < 1e-12
            assert objective(Y, M2, A2).fit == pytest.approx(objective(Y, M, A).fit,
                                                             rel=1e-12)

    def test_l1_mode(self, rng):
        M2, A2 = rescale(rng.uniform(size=(4, 2)), rng.uniform(size=(2, 3)), "l1_columns")
        np.testing.assert_allclose(M2.data.sum(axis=0), 1.0, rtol=1e-14)

    def test_zero_column_skipped(self, rng):
        M = rng.uniform(size=(4, 2))
        M[:, 1] = 0
        with pytest.warns(UserWarning):
            M2, _ = rescale(M, rng.uniform(size=(2, 3)))
        assert np.all(M2.data[:, 1] == 0)


def reference_nmf(Y, M, A, iterations):
    for _ in range(iterations):
        A = A * (M.T @ Y) / (M.T @ M @ A + EPS)
        M = M * (Y @ A.T) / (M @ A @ A.T + EPS)
        norms = np.sqrt((M ** 2).sum(axis=0))
        M, A = M / norms, A * norms[:, None]
    return M, A


class TestRun:
    def test_reduces_to_plain_nmf(self, rng):
        Y = rng.uniform(size=(20, 64))
        M0, A0 = init_endmembers(Y, 4, 1).data, init_abundances(4, 64, 2).data
        res = run(Y, None, SolverConfig(4, tau=1e-300, max_iter=50), M0=M0, A0=A0)
        M, A = reference_nmf(Y, M0, A0, 50)
        assert res.iterations == 50
        np.testing.assert_allclose(res.endmembers.data, M, rtol=0, atol=1e-12)
        np.testing.assert_allclose(res.abundances.data, A, rtol=0, atol=1e-12)

    def test_plain_nmf_trace_non_increasing(self, rng):
        for _ in range(20):
            Y = rng.uniform(size=(int(rng.integers(3, 30)), int(rng.integers(10, 100))))
            res = run(Y, None, SolverConfig(3, max_iter=100, seed=int(rng.integers(1e6))))
            t = res.totals()
            assert np.all(np.diff(t) <= 1e-10 * t[:-1])

    def test_result_contract(self, rng):
        Y = rng.uniform(size=(8, 36))
        g = random_graph(36, rng)
        res = run(Y, g, SolverConfig(3, lam=0.3, alpha=0.2, max_iter=40))
        assert res.abundances.data.min() >= 0 and res.endmembers.data.min() >= 0
        assert len(res.objective_trace) == res.iterations
        np.testing.assert_allclose(np.linalg.norm(res.endmembers.data, axis=0), 1.0,
                                   rtol=1e-12)
        assert set(res.wall_times) == {"graph_build", "iterate"}
        assert res.trace_rows()[0][0] == 0 and len(res.trace_rows()) == res.iterations + 1

    def test_stopping_rule(self, rng):
        Y = rng.uniform(size=(8, 30))
        res = run(Y, None, SolverConfig(2, tau=1e-3))
        t = res.totals()
        assert res.converged
        assert abs(t[-2] - t[-1]) / t[-2] < 1e-3
        assert np.all(np.abs(np.diff(t[:-1])) / t[:-2] >= 1e-3)

    def test_deterministic(self, rng):
        Y = rng.uniform(size=(8, 30))
        a = run(Y, None, SolverConfig(3, max_iter=20, seed=5))
        b = run(Y, None, SolverConfig(3, max_iter=20, seed=5))
        np.testing.assert_array_equal(a.abundances.data, b.abundances.data)

    def test_fixed_point(self, rng):
        M = rng.uniform(0.1, 1, (10, 3))
        A = rng.uniform(0.1, 1, (3, 25))
        Y = M @ A
        res = run(Y, None, SolverConfig(3, max_iter=1), M0=M, A0=A)
        P = res.endmembers.data @ res.abundances.data
        assert np.linalg.norm(P - Y) / np.linalg.norm(Y) < 1e-8

    def test_lasso_shrinks_abundances(self, rng):
        img, _ = synthesize_scene(SceneSpec(12, 12, 3, 20, seed=1))
        plain = run(img, None, SolverConfig(3, seed=2))
        sparse = run(img, None, SolverConfig(3, alpha=0.5, seed=2))
        last = sparse.objective_trace[-1]
        assert last.lasso == pytest.approx(0.5 * sparse.abundances.data.sum(), rel=1e-12)
        assert last.graph == 0
        assert sparse.abundances.data.sum() < plain.abundances.data.sum()

    def test_graph_must_match(self, rng):
        with pytest.raises(ShapeError):
            run(rng.uniform(size=(5, 10)), NeighborGraph.empty(9), SolverConfig(2, lam=1))

    def test_unmix_builds_graph(self):
        img, _ = synthesize_scene(SceneSpec(10, 10, 3, 15, seed=0))
        res = unmix(img, SolverConfig(3, lam=0.1, alpha=0.1, max_iter=30))
        assert res.wall_times["graph_build"] > 0

    def test_beats_plain_nmf_on_small_scenes(self):
        wins = 0
        for seed in range(20):
            img, truth = synthesize_scene(SceneSpec(8, 8, 3, 20, seed, blob_count=1))
            settings = TrialSettings(k=3)
            nmf, _, _ = solve_variant(img, "nmf", settings, seed)
            ss, _, _ = solve_variant(img, "ssnmf", settings, seed)
            wins += evaluate(ss, truth).mean_sad < evaluate(nmf, truth).mean_sad
        assert wins >= 16
