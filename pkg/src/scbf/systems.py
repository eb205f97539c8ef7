"""Controlled Ito diffusion models and the built-in benchmark systems.

A system is ``dX = f(X, u) dt + sigma(X, u) dW`` together with an input box
U and a safe set C carried on a tensor grid.  Drift and diffusion callables
are vectorized: they accept states shaped ``(..., n_x)`` and inputs shaped
``(..., n_u)`` and broadcast.

Structural facts the numerics exploit (input-affine drift, input-independent
or quadratic-in-input noise Gram, zero noise) are not trusted from the model
author: they are verified at registration by sampling probes, as is the full
row rank diagnostic for the diffusion matrix (reported, never enforced,
because rank-deficient noise is an explicitly supported regime).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveAirspeed, UnknownParameter
from .grid import INTERIOR, GridSpec, ImplicitSet, ScalarField, classify_nodes

__all__ = [
    "StructureFlags",
    "SystemModel",
    "BENCHMARKS",
    "make_benchmark",
    "wig_forces",
    "WIG_DEFAULTS",
]

_PROBE_TOL = 1e-10


@dataclass(frozen=True)
class StructureFlags:
    """Sampled structural diagnostics of a system.

    ``full_row_rank``/``noise_rank`` record whether sigma has full row rank
    across probe points (a diagnostic only; rank-deficient systems are
    handled by the same kill-on-exit discretization).
    """

    input_affine: bool
    sigma_u_independent: bool
    sigma_zero: bool
    sigma_gram_quadratic: bool
    full_row_rank: bool
    noise_rank: int


@dataclass
class SystemModel:
    """Controlled SDE with box input constraints and a gridded safe set."""

    name: str
    n_x: int
    n_u: int
    n_w: int
    drift: callable
    diffusion: callable
    input_lower: np.ndarray
    input_upper: np.ndarray
    grid: GridSpec
    safe_set: ImplicitSet
    flags: StructureFlags = None
    params: dict = field(default_factory=dict)
    _node_classes: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.input_lower = np.asarray(self.input_lower, dtype=float).ravel()
        self.input_upper = np.asarray(self.input_upper, dtype=float).ravel()
        if self.input_lower.size != self.n_u or self.input_upper.size != self.n_u:
            raise ValueError("input box size does not match n_u")
        if np.any(self.input_upper < self.input_lower):
            raise ValueError("input box upper corner below lower corner")
        if self.flags is None:
            self.flags = probe_structure(self)

    # -- geometry helpers ---------------------------------------------------

    def node_classes(self) -> np.ndarray:
        if self._node_classes is None:
            self._node_classes = classify_nodes(self.grid, self.safe_set)
        return self._node_classes

    def interior_mask(self) -> np.ndarray:
        return self.node_classes() == INTERIOR

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.safe_set.contains(self.grid, x)

    # -- input helpers --------------------------------------------------------

    def clamp_input(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.input_lower, self.input_upper)

    def input_center(self) -> np.ndarray:
        return 0.5 * (self.input_lower + self.input_upper)

    def input_corners(self) -> np.ndarray:
        """Unique vertices of the input box, shape (K, n_u)."""
        axes = []
        for lo, hi in zip(self.input_lower, self.input_upper):
            axes.append((lo,) if hi == lo else (lo, hi))
        return np.array(list(itertools.product(*axes)), dtype=float)

    def input_grid(self, points_per_dim: int) -> np.ndarray:
        """Cartesian candidate grid over the input box, shape (K, n_u)."""
        axes = []
        for lo, hi in zip(self.input_lower, self.input_upper):
            axes.append(np.linspace(lo, hi, 1 if hi == lo else points_per_dim))
        return np.array(list(itertools.product(*axes)), dtype=float)

    def gram(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """sigma sigma^T at (x, u), shape (..., n_x, n_x)."""
        s = self.diffusion(x, u)
        return s @ np.swapaxes(s, -1, -2)


def _probe_points(sys: SystemModel, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(sys.grid.lower)
    hi = np.asarray(sys.grid.upper)
    X = lo + (hi - lo) * rng.random((n, sys.n_x))
    U = sys.input_lower + (sys.input_upper - sys.input_lower) * rng.random((n, sys.n_u))
    return X, U


def probe_structure(sys: SystemModel, samples: int = 24, seed: int = 0) -> StructureFlags:
    """Verify structural flags by sampling; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    X, _ = _probe_points(sys, samples, rng)
    width = sys.input_upper - sys.input_lower
    n_u = sys.n_u

    # Affine fit of f(x, .) on random input probes: residual below tolerance
    # for every probe state means the drift is affine in u.
    m = max(2 * n_u + 2, 6)
    U = sys.input_lower + width * rng.random((m, n_u))
    basis = np.concatenate([np.ones((m, 1)), U], axis=1)
    input_affine = True
    scale = 0.0
    for x in X:
        F = sys.drift(np.broadcast_to(x, (m, sys.n_x)), U)
        coef, *_ = np.linalg.lstsq(basis, F, rcond=None)
        resid = F - basis @ coef
        scale = max(scale, float(np.max(np.abs(F))), 1.0)
        if np.max(np.abs(resid)) > _PROBE_TOL * scale:
            input_affine = False
            break

    # Noise structure probes.
    U2 = sys.input_lower + width * rng.random((m, n_u))
    sigma_zero = True
    sigma_u_independent = True
    smin = np.inf
    for x in X:
        S = sys.diffusion(np.broadcast_to(x, (m, sys.n_x)), U2)
        if np.max(np.abs(S)) > 1e-14:
            sigma_zero = False
        if np.max(np.abs(S - S[0])) > 1e-12 * max(1.0, np.max(np.abs(S))):
            sigma_u_independent = False
        sv = np.linalg.svd(S[0], compute_uv=False)
        smin = min(smin, sv[sys.n_x - 1] if sv.size >= sys.n_x else 0.0)

    # Quadratic fit of the noise Gram matrix entries in u.
    sigma_gram_quadratic = True
    if sigma_u_independent:
        pass
    else:
        mq = max(3 * n_u + n_u * n_u + 3, 9)
        Uq = sys.input_lower + width * rng.random((mq, n_u))
        cols = [np.ones((mq, 1)), Uq]
        for i in range(n_u):
            for j in range(i, n_u):
                cols.append((Uq[:, i] * Uq[:, j])[:, None])
        qbasis = np.concatenate(cols, axis=1)
        for x in X[:8]:
            G = sys.gram(np.broadcast_to(x, (mq, sys.n_x)), Uq).reshape(mq, -1)
            coef, *_ = np.linalg.lstsq(qbasis, G, rcond=None)
            resid = G - qbasis @ coef
            gs = max(1.0, float(np.max(np.abs(G))))
            if np.max(np.abs(resid)) > _PROBE_TOL * gs:
                sigma_gram_quadratic = False
                break

    noise_rank = 0
    if not sigma_zero:
        # Smallest rank across probes, from singular values of sigma.
        ranks = []
        for x in X:
            S = sys.diffusion(x, sys.input_center())
            sv = np.linalg.svd(np.atleast_2d(S), compute_uv=False)
            ranks.append(int(np.sum(sv > 1e-9 * max(1.0, sv[0]))))
        noise_rank = min(ranks)
    return StructureFlags(
        input_affine=input_affine,
        sigma_u_independent=sigma_u_independent,
        sigma_zero=sigma_zero,
        sigma_gram_quadratic=sigma_u_independent or sigma_gram_quadratic,
        full_row_rank=noise_rank == sys.n_x,
        noise_rank=noise_rank,
    )


# --- double integrator ------------------------------------------------------


def _di_drift(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape) + (2,))
    out[..., 0] = x[..., 1]
    out[..., 1] = u[..., 0]
    return out


def _const_diffusion(matrix):
    matrix = np.asarray(matrix, dtype=float)

    def sigma(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        return np.broadcast_to(matrix, shape + matrix.shape).copy()

    return sigma


def _di_input_noise_diffusion(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
    out = np.zeros(shape + (2, 1))
    out[..., 1, 0] = np.sqrt(1.0 + np.broadcast_to(u[..., 0], shape) ** 2)
    return out


def _make_double_integrator(case, overrides, grid_counts):
    params = {"u_max": 1.0}
    params.update(overrides)
    u_max = float(params["u_max"])
    counts = grid_counts or (81, 161)
    grid = GridSpec([-1.0, -2.0], [1.0, 2.0], counts)
    sigmas = {
        "di_omni": _const_diffusion(np.eye(2)),
        "di_velocity": _const_diffusion(np.array([[0.0], [1.0]])),
        "di_input_noise": _di_input_noise_diffusion,
        "di_deterministic": _const_diffusion(np.zeros((2, 1))),
    }
    n_w = 2 if case == "di_omni" else 1
    return SystemModel(
        name=case,
        n_x=2,
        n_u=1,
        n_w=n_w,
        drift=_di_drift,
        diffusion=sigmas[case],
        input_lower=[-u_max],
        input_upper=[u_max],
        grid=grid,
        safe_set=ImplicitSet("box"),
        params=params,
    )


# --- wing-in-ground-effect aircraft ------------------------------------------

WIG_DEFAULTS = {
    "m": 500.0,        # kg
    "g": 9.81,         # m/s^2
    "rho": 1.225,      # kg/m^3
    "S": 12.0,         # m^2
    "b": 10.0,         # m wingspan
    "SigmaL2": 6.0e4,  # N^2/s lift-force noise intensity
    "SigmaD2": 156.0,  # N^2/s drag-force noise intensity
    "c_F": 0.02,       # s/m thrust efficiency slope
    "V_F": 20.0,       # m/s thrust efficiency knee
    "C_L0": 0.2,
    "C_La": 5.0,       # /rad
    "C_D0": 0.03,
    "c_GE": 0.2,
    "k_L": 5.0,
    "k_D": 5.0,
    "k_i": 0.05,
}


def wig_forces(x, u, params=None):
    """Thrust, lift and drag of the ground-effect aircraft model.

    State is (altitude H, airspeed V, flight-path angle Gamma); input is
    (angle of attack alpha, thrust command Fc).  Thrust efficiency drops
    linearly with airspeed above the knee and saturates to [0, 1]; the
    lift coefficient is amplified near the ground while induced drag is
    reduced there.
    """
    p = dict(WIG_DEFAULTS)
    if params:
        p.update(params)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    H = x[..., 0]
    V = x[..., 1]
    if np.any(V <= 0.0):
        raise NonPositiveAirspeed("airspeed must be positive")
    alpha = u[..., 0]
    Fc = u[..., 1]
    F = Fc * np.clip(1.0 - p["c_F"] * (V - p["V_F"]), 0.0, 1.0)
    CLinf = p["C_L0"] + p["C_La"] * alpha
    hb = H / p["b"]
    CL = CLinf * (1.0 + p["c_GE"] * np.exp(-p["k_L"] * hb))
    CD = p["C_D0"] + p["k_i"] * CLinf**2 * (1.0 - np.exp(-p["k_D"] * hb))
    q = 0.5 * p["rho"] * p["S"] * V**2
    return F, q * CL, q * CD


def _make_wig(overrides, grid_counts):
    params = dict(WIG_DEFAULTS)
    params.update(overrides)
    m, g = params["m"], params["g"]
    SigmaL = math.sqrt(params["SigmaL2"])
    SigmaD = math.sqrt(params["SigmaD2"])

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        F, L, D = wig_forces(x, u, params)
        V = x[..., 1]
        Gam = x[..., 2]
        alpha = np.broadcast_to(u[..., 0], F.shape)
        out = np.empty(F.shape + (3,))
        out[..., 0] = V * np.sin(Gam)
        out[..., 1] = (F * np.cos(alpha) - D - m * g * np.sin(Gam)) / m
        out[..., 2] = (F * np.sin(alpha) + L - m * g * np.cos(Gam)) / (m * V)
        return out

    def diffusion(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        V = np.broadcast_to(x[..., 1], shape)
        out = np.zeros(shape + (3, 2))
        out[..., 1, 0] = SigmaD / m
        out[..., 2, 1] = SigmaL / (m * V)
        return out

    counts = grid_counts or (51, 51, 51)
    grid = GridSpec([0.0, 20.0, -0.15], [10.0, 70.0, 0.15], counts)
    return SystemModel(
        name="wig_aircraft",
        n_x=3,
        n_u=2,
        n_w=2,
        drift=drift,
        diffusion=diffusion,
        input_lower=[0.0, 0.0],
        input_upper=[0.2, 1000.0],
        grid=grid,
        safe_set=ImplicitSet("box"),
        params=params,
    )


# --- kinematic bicycle --------------------------------------------------------


def _make_bicycle(overrides, grid_counts):
    params = {
        "obstacle_radius": 1.0,
        "pos_extent": 3.0,
        "v_max": 2.0,
        "sigma_theta": 0.5,
        "sigma_v": 0.5,
    }
    params.update(overrides)
    R = float(params["obstacle_radius"])
    E = float(params["pos_extent"])
    vmax = float(params["v_max"])

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        th = np.broadcast_to(x[..., 2], shape)
        v = np.broadcast_to(x[..., 3], shape)
        out = np.empty(shape + (4,))
        out[..., 0] = v * np.cos(th)
        out[..., 1] = v * np.sin(th)
        out[..., 2] = v * np.broadcast_to(u[..., 0], shape)
        out[..., 3] = np.broadcast_to(u[..., 1], shape)
        return out

    sigma = np.zeros((4, 2))
    sigma[2, 0] = float(params["sigma_theta"])
    sigma[3, 1] = float(params["sigma_v"])

    counts = grid_counts or (31, 31, 24, 11)
    grid = GridSpec(
        [-E, -E, -math.pi, -vmax],
        [E, E, math.pi, vmax],
        counts,
        periodic=[False, False, True, False],
    )
    nodes = grid.nodes()
    sdf = ScalarField(grid, R - np.hypot(nodes[:, 0], nodes[:, 1]))
    return SystemModel(
        name="bicycle",
        n_x=4,
        n_u=2,
        n_w=2,
        drift=drift,
        diffusion=_const_diffusion(sigma),
        input_lower=[-1.0, -1.0],
        input_upper=[1.0, 1.0],
        grid=grid,
        safe_set=ImplicitSet("sdf", sdf),
        params=params,
    )


# --- 1-D Brownian motion (analytic oracle) -----------------------------------


def _make_brownian(overrides, grid_counts):
    params = {"sigma": 1.0, "a": -1.0, "b": 1.0}
    params.update(overrides)
    s = float(params["sigma"])
    counts = grid_counts or (201,)

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x[..., 0].shape, u[..., 0].shape)
        return np.zeros(shape + (1,))

    grid = GridSpec([params["a"]], [params["b"]], counts)
    return SystemModel(
        name="brownian_1d",
        n_x=1,
        n_u=1,
        n_w=1,
        drift=drift,
        diffusion=_const_diffusion(np.array([[s]])),
        input_lower=[0.0],
        input_upper=[0.0],
        grid=grid,
        safe_set=ImplicitSet("box"),
        params=params,
    )


BENCHMARKS = {
    "di_omni": lambda ov, gc: _make_double_integrator("di_omni", ov, gc),
    "di_velocity": lambda ov, gc: _make_double_integrator("di_velocity", ov, gc),
    "di_input_noise": lambda ov, gc: _make_double_integrator("di_input_noise", ov, gc),
    "di_deterministic": lambda ov, gc: _make_double_integrator("di_deterministic", ov, gc),
    "wig_aircraft": _make_wig,
    "bicycle": _make_bicycle,
    "brownian_1d": _make_brownian,
}

_KNOWN_PARAMS = {
    "di_omni": {"u_max"},
    "di_velocity": {"u_max"},
    "di_input_noise": {"u_max"},
    "di_deterministic": {"u_max"},
    "wig_aircraft": set(WIG_DEFAULTS),
    "bicycle": {"obstacle_radius", "pos_extent", "v_max", "sigma_theta", "sigma_v"},
    "brownian_1d": {"sigma", "a", "b"},
}


def make_benchmark(bench_id: str, overrides: dict | None = None,
                   grid_counts=None) -> SystemModel:
    """Construct a fully parameterized benchmark system.

    ``overrides`` may replace named model parameters; ``grid_counts``
    replaces the default grid resolution (the paper never reports its
    resolutions, so these are configuration, not fidelity claims).
    """
    if bench_id not in BENCHMARKS:
        raise UnknownParameter(f"unknown benchmark id {bench_id!r}")
    overrides = dict(overrides or {})
    unknown = set(overrides) - _KNOWN_PARAMS[bench_id]
    if unknown:
        raise UnknownParameter(
            f"{bench_id}: unknown parameter(s) {sorted(unknown)}"
        )
    if grid_counts is not None:
        grid_counts = tuple(int(c) for c in np.atleast_1d(grid_counts))
    return BENCHMARKS[bench_id](overrides, grid_counts)
