import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from scbf.errors import InsufficientData
from scbf.montecarlo import (
    FixedPolicyController,
    OpenLoopController,
    SafetyCurve,
    SimConfig,
    bicycle_circle_reference,
    constant_reference,
    estimate_safety_curve,
    fit_decay_rate,
    simulate,
    wilson_interval,
    write_safety_curve_csv,
    write_trajectory_csv,
)
from scbf.semigroup import PolicyTable, PropagationConfig
from scbf.spectral import initial_field, power_iteration
from scbf.systems import make_benchmark


def dirichlet_series(t: float, terms: int = 50) -> float:
    """Survival of standard Brownian motion on [-1, 1] started at 0."""
    return sum(
        (4.0 / (k * math.pi)) * math.sin(k * math.pi / 2.0)
        * math.exp(-((k * math.pi / 2.0) ** 2) * t / 2.0)
        for k in range(1, 2 * terms, 2)
    )


@pytest.fixture(scope="module")
def brownian():
    return make_benchmark("brownian_1d")


class TestSimulate:
    def test_frozen_dynamics(self):
        sys = make_benchmark("brownian_1d", {"sigma": 0.0})
        cfg = SimConfig(t_end=0.5, trials=1, seed=0,
                        controller=OpenLoopController([0.0]))
        traj = simulate(sys, cfg, [0.3])
        assert np.all(traj.states == 0.3)
        assert np.all(traj.alive)

    def test_killed_stays_killed(self):
        sys = make_benchmark("di_omni", grid_counts=(21, 41))
        cfg = SimConfig(t_end=3.0, trials=1, seed=5,
                        controller=OpenLoopController([0.0]))
        traj = simulate(sys, cfg, [0.9, 1.8])  # near the corner, dies fast
        assert traj.killed
        k = int(np.argmin(traj.alive))
        assert not traj.alive[k:].any()
        assert np.all(traj.states[k:] == traj.states[k])
        assert np.all(traj.inputs[k:] == 0.0)

    def test_deterministic_in_seed_and_trial(self, brownian):
        cfg = SimConfig(t_end=0.2, trials=4, seed=9,
                        controller=OpenLoopController([0.0]))
        a = simulate(brownian, cfg, [0.1], trial=2)
        b = simulate(brownian, cfg, [0.1], trial=2)
        c = simulate(brownian, cfg, [0.1], trial=3)
        assert np.array_equal(a.states, b.states)
        assert not np.array_equal(a.states, c.states)


class TestSafetyCurve:
    def test_survival_starts_at_one_and_decreases(self, brownian):
        cfg = SimConfig(t_end=0.5, trials=400, seed=3,
                        controller=OpenLoopController([0.0]))
        curve = estimate_safety_curve(brownian, cfg, [0.0])
        assert curve.survival_fraction[0] == 1.0
        assert np.all(np.diff(curve.alive_counts) <= 0)

    def test_brownian_against_heat_kernel_series(self, brownian):
        # [DERIVED] Dirichlet heat kernel series; dt = 1e-4 keeps the
        # discrete-exit bias below the 99% interval resolution.
        cfg = SimConfig(t_end=1.0, trials=10000, seed=2024,
                        controller=OpenLoopController([0.0]), dt=1e-4)
        curve = estimate_safety_curve(brownian, cfg, [0.0], confidence=0.99)
        z = dirichlet_series(1.0)
        assert curve.wilson_low[-1] <= z <= curve.wilson_high[-1]

    def test_thread_count_invariance(self, brownian):
        cfg = SimConfig(t_end=0.3, trials=600, seed=42,
                        controller=OpenLoopController([0.0]))
        c1 = estimate_safety_curve(brownian, cfg, [0.0], threads=1)
        c4 = estimate_safety_curve(brownian, cfg, [0.0], threads=4)
        assert np.array_equal(c1.alive_counts, c4.alive_counts)

    def test_seed_determinism_and_sensitivity(self, brownian):
        base = dict(t_end=0.3, trials=500, controller=OpenLoopController([0.0]))
        c1 = estimate_safety_curve(brownian, SimConfig(seed=1, **base), [0.0])
        c2 = estimate_safety_curve(brownian, SimConfig(seed=1, **base), [0.0])
        c3 = estimate_safety_curve(brownian, SimConfig(seed=2, **base), [0.0])
        assert np.array_equal(c1.alive_counts, c2.alive_counts)
        assert not np.array_equal(c1.alive_counts, c3.alive_counts)

    def test_ci_width_shrinks_like_sqrt_n(self, brownian):
        widths = []
        for trials in (100, 1000, 10000):
            cfg = SimConfig(t_end=0.5, trials=trials, seed=8,
                            controller=OpenLoopController([0.0]), dt=5e-3)
            curve = estimate_safety_curve(brownian, cfg, [0.0])
            k = curve.times.size // 2
            widths.append(curve.wilson_high[k] - curve.wilson_low[k])
        assert 2.0 <= widths[0] / widths[1] <= 5.0
        assert 2.0 <= widths[1] / widths[2] <= 5.0

    def test_bound_attached(self, brownian):
        pol = PolicyTable.zero(brownian)
        res = power_iteration(brownian, pol, PropagationConfig(horizon=0.5),
                              initial_field(brownian, "bump"), tol=1e-6)
        cfg = SimConfig(t_end=0.5, trials=200, seed=4,
                        controller=FixedPolicyController(pol))
        curve = estimate_safety_curve(brownian, cfg, [0.0], bound=res)
        assert curve.theoretical_bound is not None
        assert curve.theoretical_bound[0] == pytest.approx(1.0, abs=1e-6)


class TestFitDecayRate:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 3.0, 400)
        s = np.exp(-1.2424 * t)
        curve = SafetyCurve(t, s, s, s, 1, np.ones_like(t, dtype=np.int64))
        assert fit_decay_rate(curve, 0.5) == pytest.approx(1.2424, abs=1e-6)

    def test_insufficient_data(self):
        t = np.linspace(0.0, 1.0, 50)
        s = np.where(t < 0.2, 1.0, 0.0)
        curve = SafetyCurve(t, s, s, s, 1, (s > 0).astype(np.int64))
        with pytest.raises(InsufficientData):
            fit_decay_rate(curve, 0.5)

    def test_brownian_rate(self, brownian):
        cfg = SimConfig(t_end=3.0, trials=10000, seed=6,
                        controller=OpenLoopController([0.0]), dt=1e-3)
        curve = estimate_safety_curve(brownian, cfg, [0.0])
        rate = fit_decay_rate(curve, 0.5)
        assert abs(rate - math.pi**2 / 8.0) / (math.pi**2 / 8.0) < 0.10


class TestWilson:
    def test_edge_cases(self):
        lo, hi = wilson_interval(np.array([0, 10]), 10)
        assert lo[0] == 0.0 and hi[0] < 0.5
        assert hi[1] == pytest.approx(1.0, abs=1e-12) and lo[1] > 0.5

    def test_unknown_confidence(self):
        with pytest.raises(ValueError):
            wilson_interval(np.array([1]), 10, confidence=0.5)


class TestCsv:
    def test_round_trip_stability(self, tmp_path, brownian):
        cfg = SimConfig(t_end=0.05, trials=20, seed=1,
                        controller=OpenLoopController([0.0]))
        traj = simulate(brownian, cfg, [0.0])
        curve = estimate_safety_curve(brownian, cfg, [0.0])
        write_trajectory_csv(traj, tmp_path / "t.csv")
        write_safety_curve_csv(curve, tmp_path / "c.csv")
        t_bytes = (tmp_path / "t.csv").read_bytes()
        c_bytes = (tmp_path / "c.csv").read_bytes()
        write_trajectory_csv(traj, tmp_path / "t.csv")
        write_safety_curve_csv(curve, tmp_path / "c.csv")
        assert (tmp_path / "t.csv").read_bytes() == t_bytes
        assert (tmp_path / "c.csv").read_bytes() == c_bytes


class TestReferences:
    def test_constant(self):
        ref = constant_reference([0.03, 300.0])
        out = ref(0.0, np.zeros((4, 3)))
        assert_allclose(out, np.tile([0.03, 300.0], (4, 1)))

    def test_circle_tracker_shapes_and_bounds(self):
        ref = bicycle_circle_reference()
        X = np.array([[1.5, 0.0, np.pi / 2, 1.0],
                      [0.0, 2.5, np.pi, 0.5]])
        U = ref(0.0, X)
        assert U.shape == (2, 2)
        assert np.all(np.abs(U) <= 1.0)
        # on schedule: steady left steering (circle curvature), speed on hold
        assert 0.0 < U[0, 0] < 0.8
        assert abs(U[0, 1]) < 0.1

    def test_circle_tracker_chases_schedule(self):
        # far behind schedule, the chase vector points across the circle
        ref = bicycle_circle_reference()
        behind = np.array([[1.5, 0.0, np.pi / 2, 1.0]])
        t_late = 0.5 * np.pi * 1.5  # target is a quarter turn ahead by now
        U = ref(t_late, behind)
        assert U[0, 0] == 1.0  # hard-left chase
