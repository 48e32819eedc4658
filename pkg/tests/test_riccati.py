import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from pldimu.lti import RationalTF, StateSpace, TFMatrix, freq_response, is_hurwitz, lft_lower, \
    tf_to_ss
from pldimu.riccati import (
    CareProblem, InfeasibleError, RiccatiError, UnstableSystemError, care_residual, hinf_norm,
    ric, solve_care, synthesize_hinf,
)


def sweep_norm(sys, n=4000):
    w = np.r_[0.0, np.logspace(-4, 4, n)]
    return max(np.linalg.norm(freq_response(sys, wk), 2) for wk in w)


class TestCare:
    def test_scalar(self):
        X = solve_care(CareProblem([[0.0]], [[1.0]], [[1.0]], [[1.0]]))
        assert abs(X[0, 0] - 1.0) < 1e-10

    def test_scalar_shifted(self):
        # A=1: X^2 - 2X - 1 = 0 -> X = 1 + sqrt(2); A=-1: X = sqrt(2) - 1
        X = solve_care(CareProblem([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))
        assert abs(X[0, 0] - (np.sqrt(2) - 1)) < 1e-10
        X = solve_care(CareProblem([[1.0]], [[1.0]], [[1.0]], [[1.0]]))
        assert abs(X[0, 0] - (1 + np.sqrt(2))) < 1e-10

    def test_double_integrator(self):
        X = solve_care(CareProblem([[0, 1], [0, 0]], [[0], [1]], np.eye(2), [[1.0]]))
        expect = np.array([[np.sqrt(3), 1], [1, np.sqrt(3)]])
        assert np.abs(X - expect).max() < 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 10_000))
    def test_matches_scipy(self, n, m, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        Q = rng.normal(size=(n, n))
        Q = Q @ Q.T + 0.1 * np.eye(n)
        R = np.eye(m) * rng.uniform(0.5, 2)
        p = CareProblem(A, B, Q, R)
        X = solve_care(p)
        ref = scipy.linalg.solve_continuous_are(A, B, Q, R)
        assert np.abs(X - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())
        assert care_residual(p, X) <= 1e-8 * max(1.0, np.abs(X).max()) ** 2
        closed = A - B @ np.linalg.solve(R, B.T @ X)
        assert np.linalg.eigvals(closed).real.max() < 0
        assert np.allclose(X, X.T)

    def test_axis_eigenvalues_rejected(self):
        # uncontrollable, unobservable oscillator: Hamiltonian eigenvalues on the axis
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(RiccatiError):
            solve_care(CareProblem(A, np.zeros((2, 1)), np.zeros((2, 2)), [[1.0]]))

    def test_validation(self):
        with pytest.raises(ValueError):
            CareProblem([[0.0]], [[1.0]], [[1.0]], [[-1.0]])
        with pytest.raises(ValueError):
            CareProblem(np.eye(2), np.ones((2, 1)), [[1, 2], [0, 1]], [[1.0]])

    def test_ric_shape(self):
        with pytest.raises(RiccatiError):
            ric(np.zeros((3, 3)))


class TestHinfNorm:
    def test_lag(self):
        g, w = hinf_norm(tf_to_ss(RationalTF([1], [1, 1])))
        assert g == pytest.approx(1.0, rel=1e-3)
        assert w == pytest.approx(0.0, abs=1e-6)

    def test_resonator(self):
        g, w = hinf_norm(tf_to_ss(RationalTF([1], [1, 0.2, 1])))
        # peak 1 / (2 zeta sqrt(1 - zeta^2)) at sqrt(1 - 2 zeta^2)
        assert g == pytest.approx(5.0252, rel=1e-3)
        assert w == pytest.approx(np.sqrt(0.98), rel=1e-2)

    def test_static(self):
        assert hinf_norm(StateSpace.static([[3.0, 4.0]]))[0] == pytest.approx(5.0)

    def test_unstable(self):
        with pytest.raises(UnstableSystemError):
            hinf_norm(tf_to_ss(RationalTF([1], [1, -1])))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
    def test_against_sweep(self, n, ny, nu, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n))
        A -= (np.linalg.eigvals(A).real.max() + rng.uniform(0.05, 1.0)) * np.eye(n)
        sys = StateSpace(A, rng.normal(size=(n, nu)), rng.normal(size=(ny, n)),
                         rng.normal(size=(ny, nu)))
        g, _ = hinf_norm(sys, tol=1e-4)
        ref = sweep_norm(sys)
        # the sweep can only undershoot the true peak
        assert g >= ref * (1 - 1e-4)
        assert g <= ref * (1 + 5e-3)


def mixed_sensitivity(ws=0.5):
    """``[W_S e; e]`` from ``[w; u]`` with ``G = 1/(s+1)`` and a control penalty."""
    G = tf_to_ss(RationalTF([1], [1, 1]))
    A, B, C = G.A, G.B, G.C
    return StateSpace(A, np.hstack([np.zeros((1, 1)), B]),
                      np.vstack([-ws * C, np.zeros((1, 1)), -C]),
                      [[ws, 0.0], [0.0, 0.1], [1.0, 0.0]])


class TestSynthesis:
    def test_static_gain_bound(self):
        r = synthesize_hinf(mixed_sensitivity(), 1, 1)
        # |W_S S| at infinite frequency is 0.5 for any strictly proper loop
        assert r.gamma >= 0.5
        assert r.gamma <= 0.5 * 1.05

    def test_self_certification(self):
        tol = 1e-3
        r = synthesize_hinf(mixed_sensitivity(2.0), 1, 1, tol=tol)
        cl = lft_lower(mixed_sensitivity(2.0), r.controller, 1, 1)
        assert is_hurwitz(cl)[0]
        assert hinf_norm(cl, 1e-4)[0] <= r.gamma * (1 + 5 * tol)
        assert r.closed_loop_norm <= r.gamma * (1 + 5 * tol)

    @settings(max_examples=12, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 10_000))
    def test_random_plants_certify(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(n, n))
        B1, B2 = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
        C1, C2 = rng.normal(size=(1, n)), rng.normal(size=(1, n))
        p = StateSpace(A, np.hstack([B1, B2]), np.vstack([C1, np.zeros((1, n)), C2]),
                       [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        tol = 1e-3
        try:
            r = synthesize_hinf(p, 1, 1, tol=tol)
        except InfeasibleError:
            return
        cl = lft_lower(p, r.controller, 1, 1)
        assert is_hurwitz(cl)[0]
        assert hinf_norm(cl, 1e-4)[0] <= r.gamma * (1 + 5 * tol)

    def test_feedthrough_lower_bound(self):
        # z1 = w1 directly and no control can reach it: gamma >= 1
        p = StateSpace([[-1.0]], [[0.0, 0.0, 1.0]], [[0.0], [0.0], [1.0]],
                       [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        r = synthesize_hinf(p, 1, 1)
        assert 1.0 <= r.gamma <= 1.0 + 2e-3

    def test_gamma_range_infeasible(self):
        with pytest.raises(InfeasibleError):
            synthesize_hinf(mixed_sensitivity(), 1, 1, gamma_range=(0.1, 0.4))

    def test_weighted_two_by_two(self):
        # diagonal MIMO mixed sensitivity: the two channels decouple
        G = TFMatrix.diag([RationalTF([1], [1, 1]), RationalTF([2], [1, 3])]).to_ss()
        n = G.nstates
        p = StateSpace(G.A, np.hstack([np.zeros((n, 2)), G.B]),
                       np.vstack([-0.5 * G.C, np.zeros((2, n)), -G.C]),
                       np.block([[0.5 * np.eye(2), np.zeros((2, 2))],
                                 [np.zeros((2, 2)), 0.1 * np.eye(2)],
                                 [np.eye(2), np.zeros((2, 2))]]))
        r = synthesize_hinf(p, 2, 2)
        assert 0.5 <= r.gamma <= 0.5 * 1.05
