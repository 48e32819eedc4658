import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import one_link_bounds
from pldimu.lti import RationalTF, StateSpace, TFMatrix, freq_response, lft_lower
from pldimu.robot import (
    PAPER_2R_WEIGHTS, ModelError, TwoLinkParams, WeightSpec, augment, build_pldi,
    build_uncertain_plant, channel_sizes, complementary_weight, dynamics_rhs,
    input_affine_decompose, jacobian_bounds, kinematic_bounds, make_weights, paper_2r_bounds,
    performance_structure, sensitivity_weight, state_jacobian, two_link, vertex_matrices,
)

P = TwoLinkParams()


def analytic_minv(c):
    """``M(q2)^-1`` of the 2R arm as a function of ``cos q2``."""
    a1, a2, a3 = P.a1, P.a2, P.a3
    det = a1 * a2 - a2 ** 2 - (a3 * c) ** 2
    return np.array([[a2, -(a2 + a3 * c)], [-(a2 + a3 * c), a1 + 2 * a3 * c]]) / det


def analytic_mdot(q, qd):
    s = np.sin(q[1])
    return -P.a3 * s * qd[1] * np.array([[2.0, 1.0], [1.0, 0.0]])


class TestModel:
    def test_inertia_is_positive_definite(self):
        arm = two_link()
        q = np.random.default_rng(0).uniform(-np.pi, np.pi, (500, 2))
        assert np.linalg.eigvalsh(arm.inertia(q)).min() > 0

    def test_inverse_inertia_matches_closed_form(self):
        arm = two_link()
        for q2 in np.linspace(-np.pi, np.pi, 13):
            Minv = np.linalg.inv(arm.inertia(np.array([0.3, q2])))
            np.testing.assert_allclose(Minv, analytic_minv(np.cos(q2)), rtol=1e-12)

    def test_skew_symmetry(self):
        arm = two_link()
        rng = np.random.default_rng(7)
        q = rng.uniform(-np.pi, np.pi, (1000, 2))
        qd = rng.uniform(-1.5, 1.5, (1000, 2))
        C = arm.coriolis(q, qd)
        worst = 0.0
        for k in range(1000):
            N = analytic_mdot(q[k], qd[k]) - 2 * C[k]
            worst = max(worst, np.abs(N + N.T).max())
        assert worst <= 1e-8

    def test_rest_is_equilibrium(self):
        arm = two_link()
        np.testing.assert_array_equal(dynamics_rhs(arm, np.zeros(4), np.zeros(2)), np.zeros(4))

    def test_input_affine(self):
        arm = two_link()
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, (50, 4))
        u = rng.uniform(-10, 10, (50, 2))
        f0, f = input_affine_decompose(arm, x)
        np.testing.assert_allclose(dynamics_rhs(arm, x, u), f0 + np.einsum("kij,kj->ki", f, u),
                                   atol=1e-12)

    def test_invalid_parameters(self):
        with pytest.raises(ModelError):
            TwoLinkParams(1.0, 1.0, 1.0)
        with pytest.raises(ModelError):
            two_link(q_domain=((1.0, -1.0),) * 2)
        with pytest.raises(ModelError):
            two_link(damping=[[1.0, 2.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def bounds():
    return jacobian_bounds(two_link())


class TestJacobianBounds:

    def test_b_entries_match_closed_form_extrema(self, bounds):
        c = np.linspace(-1, 1, 20001)
        minv = np.array([analytic_minv(ck) for ck in c])
        lo, hi = minv.min(axis=0), minv.max(axis=0)
        # the sampled grid may miss the extremal angle; the margin must still bracket it
        assert np.all(bounds.b_lo[2:] <= lo) and np.all(bounds.b_hi[2:] >= hi)
        assert np.all(bounds.b_lo[2:] >= lo - 0.011 * np.abs(lo))
        assert np.all(bounds.b_hi[2:] <= hi + 0.011 * np.abs(hi))

    def test_b_entries_within_two_percent_of_published(self, bounds):
        published = {(2, 0): (0.0286, 0.0312), (2, 1): (-0.0461, -0.0164),
                     (3, 0): (-0.0461, -0.0164), (3, 1): (0.0848, 0.144)}
        for (i, j), (lo, hi) in published.items():
            assert abs(bounds.b_lo[i, j] - lo) <= 0.02 * abs(lo)
            assert abs(bounds.b_hi[i, j] - hi) <= 0.02 * abs(hi)

    def test_kinematic_rows_exact(self, bounds):
        np.testing.assert_array_equal(bounds.a_lo[:2], [[0, 0, 1, 0], [0, 0, 0, 1]])
        np.testing.assert_array_equal(bounds.a_hi[:2], bounds.a_lo[:2])
        np.testing.assert_array_equal(bounds.b_lo[:2], 0.0)

    def test_covering(self, bounds):
        arm = two_link()
        rng = np.random.default_rng(2024)
        n = 10_000
        x = np.column_stack([rng.uniform(*arm.q_domain[0], n), rng.uniform(*arm.q_domain[1], n),
                             rng.uniform(*arm.qd_domain[0], n), rng.uniform(*arm.qd_domain[1], n)])
        u = np.column_stack([rng.uniform(*arm.u_domain[0], n), rng.uniform(*arm.u_domain[1], n)])
        Jx, Ju = state_jacobian(arm, x, u)
        inside = [bounds.contains(Jx[k], Ju[k], tol=1e-9) for k in range(n)]
        assert all(inside)

    def test_density_guard(self):
        with pytest.raises(ModelError):
            jacobian_bounds(two_link(), density=1)


class TestPLDI:
    def test_vertex_count(self):
        pldi = build_pldi(paper_2r_bounds())
        assert len(pldi) == 1024
        assert pldi.C.tolist() == [[1, 0, 0, 0], [0, 1, 0, 0]]

    def test_sampled_is_seeded(self):
        a = build_pldi(paper_2r_bounds(), "sampled", k=16, seed=5)
        b = build_pldi(paper_2r_bounds(), "sampled", k=16, seed=5)
        np.testing.assert_array_equal(a.signs, b.signs)
        with pytest.raises(ModelError):
            build_pldi(paper_2r_bounds(), "sampled")
        with pytest.raises(ModelError):
            build_pldi(paper_2r_bounds(), "corners")

    def test_vertices_are_interval_endpoints(self):
        bounds = paper_2r_bounds()
        for A, B in build_pldi(bounds, "sampled", k=10, seed=1).vertices:
            assert bounds.contains(A, B, tol=1e-12)
            hit = np.isclose(A, bounds.a_lo) | np.isclose(A, bounds.a_hi)
            assert hit.all()

    def test_lft_matches_vertices(self):
        bounds = paper_2r_bounds()
        up = build_uncertain_plant(bounds)
        rng = np.random.default_rng(11)
        for signs in rng.choice([-1.0, 1.0], size=(20, up.n_delta)):
            A, B = vertex_matrices(bounds, signs)
            G = up.at(signs)
            assert np.abs(G.A - A).max() <= 1e-8
            assert np.abs(G.B - B).max() <= 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=10, max_size=10))
    def test_lft_is_affine_in_delta(self, delta):
        bounds = paper_2r_bounds()
        up = build_uncertain_plant(bounds)
        G = up.at(delta)
        A0, B0 = bounds.midpoint()
        for d, par in zip(delta, up.parameters):
            tgt = A0 if par.matrix == "A" else B0
            tgt[par.row, par.col] += d * par.half_width
        assert np.abs(G.A - A0).max() <= 1e-8 and np.abs(G.B - B0).max() <= 1e-8
        assert bounds.contains(G.A, G.B, tol=1e-9)

    def test_delta_count_checked(self):
        with pytest.raises(ModelError):
            build_uncertain_plant(paper_2r_bounds()).at(np.zeros(3))

    def test_no_uncertainty(self):
        bounds = kinematic_bounds(1, {("A", 1, 0): (-1, -1), ("B", 1, 0): (1, 1)})
        up = build_uncertain_plant(bounds)
        assert up.n_delta == 0
        assert up.at([]) is up.nominal


class TestWeights:
    def test_published_coefficients(self):
        W_S, W_T = make_weights(PAPER_2R_WEIGHTS)
        np.testing.assert_allclose(W_S[0, 0].num, [0.5, 0.5])
        np.testing.assert_allclose(W_S[0, 0].den, [1.0, 0.005])
        c = W_S[1, 1].num[0]
        assert round(c, 4) == 0.3333
        # |1/3 - 0.3333| is 1e-4 of 1/3 in exact arithmetic; allow for rounding
        assert abs(c - 0.3333) <= 1e-4 * c * (1 + 1e-9)
        np.testing.assert_allclose(W_S[1, 1].num[1], 0.1)
        np.testing.assert_allclose(W_S[1, 1].den, [1.0, 0.002])
        np.testing.assert_allclose(W_T[0, 0].num, [1.0, 10.0])
        np.testing.assert_allclose(W_T[0, 0].den, [0.01, 21.0])
        np.testing.assert_allclose(W_T[1, 1].num, [1.0, 12.0])
        np.testing.assert_allclose(W_T[1, 1].den, [0.01, 36.0])
        assert W_S[0, 1].num == (0.0,) and W_T[1, 0].num == (0.0,)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1, 10), st.floats(1e-3, 1), st.floats(1e-2, 10))
    def test_asymptotes(self, M, A, wb):
        ws = sensitivity_weight(M, A, wb)
        assert abs(1 / ws(0.0)) == pytest.approx(A, rel=1e-9)
        assert abs(1 / ws(1e9j * wb)) == pytest.approx(M, rel=1e-6)
        wt = complementary_weight(M, A, wb)
        assert abs(1 / wt(0.0)) == pytest.approx(M, rel=1e-9)
        assert abs(1 / wt(1e9j * wb)) == pytest.approx(A, rel=1e-6)

    def test_validation(self):
        with pytest.raises(ModelError):
            WeightSpec((0.5,), (0.1,), (1.0,), (2.0,), (0.1,), (20.0,))
        with pytest.raises(ModelError):
            WeightSpec((2.0,), (0.1,), (1.0,), (2.0,), (0.1,), (5.0,))
        with pytest.raises(ModelError):
            WeightSpec((2.0, 2.0), (0.1,), (1.0,), (2.0,), (0.1,), (20.0,))


class TestAugment:
    def test_channels_close_to_sensitivities(self):
        up = build_uncertain_plant(paper_2r_bounds())
        W_S, W_T = make_weights(PAPER_2R_WEIGHTS)
        Pa = augment(up, W_S, W_T)
        sizes = channel_sizes(up)
        assert Pa.shape == (sizes["n_v"] + sizes["n_z"] + sizes["n_y"],
                            sizes["n_d"] + sizes["n_w"] + sizes["n_u"])
        assert performance_structure(up).n_out == sizes["n_v"] + sizes["n_z"]
        K = TFMatrix.diag([RationalTF([50.0, 20.0], [1.0, 30.0])] * 2).to_ss()
        cl = lft_lower(Pa, K, 2, 2)
        p = up.n_delta
        for w in (0.05, 1.0, 20.0):
            G = up.nominal.C @ np.linalg.solve(1j * w * np.eye(4) - up.nominal.A, up.nominal.B)
            S = np.linalg.inv(np.eye(2) + G @ K(w))
            T = np.eye(2) - S
            M = freq_response(cl, w)
            np.testing.assert_allclose(M[p:p + 2, p:p + 2], W_S(1j * w) @ S, rtol=1e-7, atol=1e-12)
            np.testing.assert_allclose(M[p + 2:p + 4, p:p + 2], W_T(1j * w) @ T, rtol=1e-7,
                                       atol=1e-12)

    def test_delta_loop_matches_perturbed_plant(self):
        up = build_uncertain_plant(one_link_bounds())
        delta = np.array([0.3, -0.7, 0.9])
        G = up.at(delta)
        w = 2.0
        ref = G.C @ np.linalg.solve(1j * w * np.eye(2) - G.A, G.B)
        M = freq_response(up.uncertainty_map, w)
        p = up.n_delta
        D = np.diag(delta)
        got = M[p:, p:] + M[p:, :p] @ D @ np.linalg.solve(np.eye(p) - M[:p, :p] @ D, M[:p, p:])
        np.testing.assert_allclose(got, ref, rtol=1e-10)

    def test_weight_shape_checked(self):
        up = build_uncertain_plant(paper_2r_bounds())
        w = TFMatrix.diag([RationalTF([1.0], [1.0])])
        with pytest.raises(ModelError):
            augment(up, w, w)
        assert isinstance(StateSpace.static([[1.0]]), StateSpace)
