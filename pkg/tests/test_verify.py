import numpy as np
import pytest

from oracles import ONE_LINK_WEIGHTS, SMALL_GRID, one_link_bounds
from pldimu.lti import RationalTF, StateSpace, TFMatrix, freq_response, tf_to_ss
from pldimu.robot import (
    build_pldi, build_uncertain_plant, kinematic_bounds, make_weights, two_link,
)
from pldimu.verify import (
    SimulationDiverged, VerificationError, check_weight_bounds, monte_carlo_freq,
    plant_response, simulate_closed_loop, vertex_stability,
)

PD = TFMatrix.diag([RationalTF([40.0, 100.0], [0.01, 1.0])] * 2).to_ss()


def pid_like(kp, kd, m=1):
    """``kp + kd s / (0.01 s + 1)`` per channel."""
    return TFMatrix.diag([RationalTF([0.01 * kp + kd, kp], [0.01, 1.0])] * m).to_ss()


class TestVertices:
    def test_scalar_oracle(self):
        bounds = kinematic_bounds(1, {("A", 1, 0): (-1.0, 1.0), ("A", 1, 1): (-1.0, -1.0),
                                      ("B", 1, 0): (1.0, 1.0)})
        pldi = build_pldi(bounds)
        r = vertex_stability(StateSpace.static([[2.0]]), pldi)
        # q'' = a q - q' - 2 q: stable iff a < 2
        assert r.all_stable
        r = vertex_stability(StateSpace.static([[0.5]]), pldi)
        assert r.n_unstable == 1 and r.signs[r.worst].tolist() == [1.0]
        assert r.worst_abscissa > 0

    def test_matches_direct_eigenvalues(self):
        bounds = one_link_bounds()
        pldi = build_pldi(bounds)
        k = pid_like(5.0, 2.0)
        r = vertex_stability(k, pldi)
        for (A, B), absc in zip(pldi.vertices, r.abscissa):
            G = StateSpace(A, B, pldi.C, np.zeros((1, 1)))
            from pldimu.lti import feedback, series, spectral_abscissa
            loop = feedback(series(k, G))
            assert spectral_abscissa(loop) == pytest.approx(absc, abs=1e-9)

    def test_shape_check(self):
        with pytest.raises(VerificationError):
            vertex_stability(StateSpace.static(np.eye(2)), build_pldi(one_link_bounds()))


class TestEnvelope:
    def setup_method(self):
        self.up = build_uncertain_plant(one_link_bounds())
        self.W_S, self.W_T = make_weights(ONE_LINK_WEIGHTS)

    def test_nominal_first_and_seeded(self):
        k = pid_like(5.0, 2.0)
        a = monte_carlo_freq(k, self.up, 5, 3, self.W_S, self.W_T, SMALL_GRID)
        b = monte_carlo_freq(k, self.up, 5, 3, self.W_S, self.W_T, SMALL_GRID)
        np.testing.assert_array_equal(a.s_curves, b.s_curves)
        assert a.s_curves.shape == (6, len(SMALL_GRID), 1, 1)
        w = SMALL_GRID.points
        G = plant_response(self.up.nominal, w)
        S = 1 / (1 + G[:, 0, 0] * freq_response(k, w)[:, 0, 0])
        np.testing.assert_allclose(a.s_curves[0, :, 0, 0], np.abs(S), rtol=1e-10)
        np.testing.assert_allclose(a.t_curves[0, :, 0, 0], np.abs(1 - S), rtol=1e-10)

    def test_envelope_dominates_samples(self):
        r = monte_carlo_freq(pid_like(5.0, 2.0), self.up, 8, 0, self.W_S, self.W_T, SMALL_GRID)
        assert np.all(r.s_envelope >= r.s_curves)
        s, t = r.channel_ratios()
        check = check_weight_bounds(r, slack=1.0)
        assert check.worst_ratio == pytest.approx(max(s.max(), t.max()))
        assert check.passed == (check.worst_ratio <= 1.0)
        assert r.margin_db == pytest.approx(-20 * np.log10(check.worst_ratio))

    def test_slack(self):
        r = monte_carlo_freq(pid_like(5.0, 2.0), self.up, 3, 0, self.W_S, self.W_T, SMALL_GRID)
        ratio = check_weight_bounds(r).worst_ratio
        assert check_weight_bounds(r, slack=ratio * 1.001).passed
        assert not check_weight_bounds(r, slack=ratio * 0.999).passed

    def test_unstable_nominal_rejected(self):
        with pytest.raises(VerificationError):
            monte_carlo_freq(StateSpace.static([[-10.0]]), self.up, 2, 0, self.W_S, self.W_T,
                             SMALL_GRID)

    def test_unstable_samples_fail_check(self):
        # a gain that barely stabilizes the midpoint loses some samples
        up = build_uncertain_plant(kinematic_bounds(
            1, {("A", 1, 0): (-1.0, 3.0), ("A", 1, 1): (-1.0, -1.0), ("B", 1, 0): (1.0, 1.0)}))
        r = monte_carlo_freq(StateSpace.static([[1.5]]), up, 40, 0, self.W_S, self.W_T,
                             SMALL_GRID)
        assert r.unstable
        assert not check_weight_bounds(r, slack=1e9).passed
        assert r.s_curves.shape[0] == 41 - len(r.unstable)


class TestSimulation:
    def test_linear_arm_matches_analytic(self):
        # unit inertia, no Coriolis: q'' = k (r - q) is an undamped oscillator
        from pldimu.robot import RobotModel

        def no_coriolis(q, qd):
            return np.zeros(np.broadcast_shapes(q.shape, qd.shape)[:-1] + (1, 1))

        arm = RobotModel(1, lambda q: np.ones(q.shape[:-1] + (1, 1)), no_coriolis, [[0.0]],
                         [(-10, 10)], [(-10, 10)], [(-100, 100)])
        k = StateSpace.static([[4.0]])
        tr = simulate_closed_loop(arm, k, [1.0], 2.0, dt=1e-3)
        np.testing.assert_allclose(tr.y[:, 0], 1 - np.cos(2 * tr.t), atol=1e-9)
        np.testing.assert_allclose(tr.u[:, 0], 4 * np.cos(2 * tr.t), atol=1e-8)

    def test_dt_halving(self):
        arm = two_link()
        tr1 = simulate_closed_loop(arm, PD, [0.5, -0.3], 2.0, dt=1e-3)
        tr2 = simulate_closed_loop(arm, PD, [0.5, -0.3], 2.0, dt=5e-4)
        delta = np.abs(tr1.y - tr2.y[::2]).max() / np.abs(tr2.y).max()
        assert delta <= 1e-6

    def test_tracking(self):
        tr = simulate_closed_loop(two_link(), PD, [0.5, -0.3], 15.0, dt=1e-3)
        assert np.abs(tr.error[-1]).max() < 1e-2
        assert tr.xk.shape == (len(tr.t), PD.nstates)

    def test_step_size_guard(self):
        with pytest.raises(VerificationError):
            simulate_closed_loop(two_link(), PD, [0.1, 0.1], 1.0, dt=2e-3)
        with pytest.raises(VerificationError):
            simulate_closed_loop(two_link(), StateSpace.static([[1.0]]), [0.1, 0.1], 1.0)

    def test_divergence(self):
        # positive feedback on the arm blows up
        with pytest.raises(SimulationDiverged):
            simulate_closed_loop(two_link(), StateSpace.static(-1e4 * np.eye(2)), [1.0, 1.0],
                                 50.0, dt=1e-3)

    def test_callable_reference(self):
        tr = simulate_closed_loop(two_link(), PD, lambda t: np.array([np.sin(t), 0.0]), 1.0)
        np.testing.assert_allclose(tr.r[:, 0], np.sin(tr.t))


def test_plant_response_handles_axis_poles():
    G = tf_to_ss(RationalTF([1.0], [1.0, 0.0, 0.0]))
    w = np.array([0.5, 2.0])
    np.testing.assert_allclose(plant_response(G, w)[:, 0, 0], -1 / w ** 2, rtol=1e-12)
