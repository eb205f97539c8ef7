"""Euler-Maruyama simulation of the killed closed loop and survival statistics.

Each trial integrates ``x <- x + f dt + sigma sqrt(dt) xi`` with standard
normal draws per noise channel, killing (flagging and freezing) the
trajectory at the first step whose state exits the safe set.  Exit testing
happens at discrete steps only; sub-step crossings are ignored (a bias of
order sqrt(dt), kept below Monte Carlo noise by the default ``dt = 1e-3``).

Reproducibility contract: trial ``i`` draws from its own counter-based
Philox stream keyed by ``(seed, i)``, and the whole noise block of a trial
is materialized in one call, so the scalar path, the vectorized chunked
path, and any thread count produce bit-identical results.  Survival is
aggregated as integer counts per time sample.

The survival curve carries Wilson confidence intervals and, when a barrier
is supplied, the probabilistic lower bound  psi(x0)/||psi|| * exp(-gamma t).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientData
from .grid import ScalarField, interpolate, sup_norm
from .safety_filter import FilterSpec, filter_input_batch
from .semigroup import PolicyTable
from .systems import SystemModel

__all__ = [
    "FixedPolicyController",
    "ScbfQpController",
    "OpenLoopController",
    "SimConfig",
    "Trajectory",
    "SafetyCurve",
    "constant_reference",
    "bicycle_circle_reference",
    "simulate",
    "estimate_safety_curve",
    "fit_decay_rate",
    "wilson_interval",
    "write_trajectory_csv",
    "write_safety_curve_csv",
]

_Z = {0.95: 1.959963984540054, 0.99: 2.5758293035489004}

# Noise blocks are pre-drawn per chunk; the chunk size balances numpy call
# overhead against memory and cannot affect results (each trial owns an
# independent stream and aggregation is integer counts).
_CHUNK_BYTES = 128 * 2**20
_CHUNK_MIN = 256
_CHUNK_MAX = 4096


def _chunk_size(trials: int, n_steps: int, n_w: int) -> int:
    by_memory = _CHUNK_BYTES // max(1, n_steps * n_w * 8)
    return int(min(trials, max(_CHUNK_MIN, min(_CHUNK_MAX, by_memory))))


def constant_reference(u):
    """Reference policy holding a constant input."""
    u = np.asarray(u, dtype=float).ravel()

    def ref(t, X):
        return np.tile(u, (np.atleast_2d(X).shape[0], 1))

    return ref


def bicycle_circle_reference(radius: float = 1.5, speed: float = 1.0,
                             phase: float = 0.0, lead: float = 0.5,
                             k_heading: float = 2.0, k_speed: float = 1.0):
    """Track a point moving counter-clockwise around a circle at fixed speed.

    The target advances at ``speed`` along the circle regardless of where
    the vehicle is (``lead`` seconds ahead of the nominal schedule), and
    the controller chases it: steer toward the target, regulate forward
    speed.  Deliberately not a safe policy: when the noise delays the
    vehicle, the chase vector cuts across the obstacle region.
    """
    omega = speed / radius

    def ref(t, X):
        X = np.atleast_2d(X)
        x, y, th, v = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
        ang = phase + omega * (t + lead)
        th_des = np.arctan2(radius * np.sin(ang) - y, radius * np.cos(ang) - x)
        dth = np.mod(th_des - th + np.pi, 2.0 * np.pi) - np.pi
        delta = np.clip(k_heading * dth, -1.0, 1.0)
        a = np.clip(k_speed * (speed - v), -1.0, 1.0)
        return np.stack([delta, a], axis=1)

    return ref


@dataclass(frozen=True)
class FixedPolicyController:
    policy: PolicyTable

    def inputs(self, sys, t, X):
        from .grid import _interp_stack

        u = _interp_stack(self.policy.spec, self.policy.inputs.T, X)
        return np.clip(u, sys.input_lower, sys.input_upper)


@dataclass(frozen=True)
class ScbfQpController:
    spec: FilterSpec
    reference: callable

    def inputs(self, sys, t, X):
        u_ref = self.reference(t, X)
        u, _ = filter_input_batch(self.spec, X, u_ref)
        return u


@dataclass(frozen=True)
class OpenLoopController:
    u: np.ndarray

    def inputs(self, sys, t, X):
        u = np.asarray(self.u, dtype=float).ravel()
        return np.tile(np.clip(u, sys.input_lower, sys.input_upper),
                       (np.atleast_2d(X).shape[0], 1))


@dataclass(frozen=True)
class SimConfig:
    """One simulation job: step size, horizon, trial count, seed, controller."""

    t_end: float
    trials: int
    seed: int
    controller: object
    dt: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if self.trials < 1:
            raise ValueError("need at least one trial")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    alive: np.ndarray

    @property
    def killed(self) -> bool:
        return not bool(self.alive[-1])


@dataclass
class SafetyCurve:
    times: np.ndarray
    survival_fraction: np.ndarray
    wilson_low: np.ndarray
    wilson_high: np.ndarray
    trials: int
    alive_counts: np.ndarray
    theoretical_bound: np.ndarray | None = None


def _trial_noise(seed: int, trial: int, n_steps: int, n_w: int) -> np.ndarray:
    """The full standard-normal block of one trial from its Philox stream."""
    gen = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                    trial & 0xFFFFFFFFFFFFFFFF]))
    return gen.standard_normal((n_steps, n_w))


def _advance_batch(sys, cfg, controller, X, alive, noise_k, t):
    """One Euler-Maruyama step for all alive rows of a batch.

    Returns the updated states and alive flags plus the inputs applied to
    the previously-alive rows.
    """
    if not np.any(alive):
        return X, alive, np.zeros((0, sys.n_u))
    Xa = X[alive]
    U = controller.inputs(sys, t, Xa)
    F = sys.drift(Xa, U)
    S = sys.diffusion(Xa, U)
    Xn = Xa + F * cfg.dt + np.einsum("bij,bj->bi", S, noise_k[alive]) * math.sqrt(cfg.dt)
    X = X.copy()
    X[alive] = Xn
    still = sys.contains(Xn)
    alive = alive.copy()
    alive[np.nonzero(alive)[0][~still]] = False
    return X, alive, U


def simulate(sys: SystemModel, cfg: SimConfig, x0: np.ndarray,
             trial: int = 0) -> Trajectory:
    """One killed closed-loop path; deterministic in (seed, trial)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if not bool(sys.contains(x0)[0]):
        raise ValueError("initial state is outside the safe set")
    n = cfg.n_steps
    noise = _trial_noise(cfg.seed, trial, n, sys.n_w)
    times = np.arange(n + 1) * cfg.dt
    states = np.empty((n + 1, sys.n_x))
    inputs = np.zeros((n + 1, sys.n_u))
    alive = np.ones(n + 1, dtype=bool)
    X = x0[None, :].copy()
    ok = np.ones(1, dtype=bool)
    states[0] = x0
    for k in range(n):
        X, ok, U = _advance_batch(sys, cfg, cfg.controller, X, ok,
                                  noise[k][None, :], times[k])
        inputs[k] = U[0]
        states[k + 1] = X[0]
        alive[k + 1] = ok[0]
        if not ok[0]:
            states[k + 1:] = X[0]
            alive[k + 1:] = False
            break
    return Trajectory(times, states, inputs, alive)


def _curve_chunk(sys, cfg, x0, lo_trial, hi_trial):
    B = hi_trial - lo_trial
    n = cfg.n_steps
    noise = np.stack([
        _trial_noise(cfg.seed, i, n, sys.n_w) for i in range(lo_trial, hi_trial)
    ])
    X = np.tile(np.asarray(x0, dtype=float), (B, 1))
    alive = np.ones(B, dtype=bool)
    counts = np.zeros(n + 1, dtype=np.int64)
    counts[0] = B
    for k in range(n):
        X, alive, _ = _advance_batch(sys, cfg, cfg.controller, X, alive,
                                     noise[:, k, :], k * cfg.dt)
        counts[k + 1] = int(np.sum(alive))
        if counts[k + 1] == 0:
            break
    return counts


def estimate_safety_curve(sys: SystemModel, cfg: SimConfig, x0: np.ndarray,
                          bound=None, threads: int = 1,
                          confidence: float = 0.95) -> SafetyCurve:
    """Empirical survival probability with Wilson intervals.

    ``bound`` is any object with ``psi`` and ``gamma`` attributes (an
    EigenResult or a FilterSpec); when given, the theoretical lower bound
    ``psi(x0)/||psi|| * exp(-gamma t)`` is attached to the curve.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if not bool(sys.contains(x0)[0]):
        raise ValueError("initial state is outside the safe set")
    n = cfg.n_steps
    chunk = _chunk_size(cfg.trials, n, sys.n_w)
    ranges = [(lo, min(lo + chunk, cfg.trials))
              for lo in range(0, cfg.trials, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda r: _curve_chunk(sys, cfg, x0, r[0], r[1]), ranges
            ))
    else:
        parts = [_curve_chunk(sys, cfg, x0, lo, hi) for lo, hi in ranges]
    counts = np.sum(parts, axis=0, dtype=np.int64)
    times = np.arange(n + 1) * cfg.dt
    frac = counts / cfg.trials
    low, high = wilson_interval(counts, cfg.trials, confidence)
    theo = None
    if bound is not None:
        psi: ScalarField = bound.psi
        level = interpolate(psi, x0) / sup_norm(psi)
        theo = level * np.exp(-bound.gamma * times)
    return SafetyCurve(times, frac, low, high, cfg.trials, counts, theo)


def wilson_interval(successes, n: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if confidence not in _Z:
        raise ValueError(f"no z-value tabulated for confidence {confidence}")
    z = _Z[confidence]
    k = np.asarray(successes, dtype=float)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def fit_decay_rate(curve: SafetyCurve, window: float = 0.5) -> float:
    """Least-squares slope of log survival over the tail window, negated.

    ``window`` is the fraction of the time span, counted from the end, the
    fit uses; samples with zero survival are excluded.  Raises
    InsufficientData with fewer than 10 usable points.
    """
    if not 0.0 < window <= 1.0:
        raise ValueError("window must lie in (0, 1]")
    t = curve.times
    s = curve.survival_fraction
    t_cut = t[-1] - window * (t[-1] - t[0])
    mask = (t >= t_cut) & (s > 0.0)
    if int(np.sum(mask)) < 10:
        raise InsufficientData(
            f"only {int(np.sum(mask))} usable samples in the tail window"
        )
    slope = np.polyfit(t[mask], np.log(s[mask]), 1)[0]
    return float(-slope)


# --- CSV emission ---------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n_x = traj.states.shape[1]
    n_u = traj.inputs.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n_x)]
              + [f"u{j + 1}" for j in range(n_u)] + ["alive"])
    lines = [",".join(header)]
    for k in range(traj.times.size):
        row = [repr(float(traj.times[k]))]
        row += [repr(float(v)) for v in traj.states[k]]
        row += [repr(float(v)) for v in traj.inputs[k]]
        row.append(str(int(traj.alive[k])))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_safety_curve_csv(curve: SafetyCurve, path) -> None:
    header = ["t", "alive", "survival", "wilson_low", "wilson_high"]
    if curve.theoretical_bound is not None:
        header.append("bound")
    lines = [",".join(header)]
    for k in range(curve.times.size):
        row = [repr(float(curve.times[k])), str(int(curve.alive_counts[k])),
               repr(float(curve.survival_fraction[k])),
               repr(float(curve.wilson_low[k])),
               repr(float(curve.wilson_high[k]))]
        if curve.theoretical_bound is not None:
            row.append(repr(float(curve.theoretical_bound[k])))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
