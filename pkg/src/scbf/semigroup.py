"""The killed-diffusion semigroup: generator evaluation and PDE propagation.

The operator applied to a field ``b`` over a horizon ``t`` is realized by
integrating the parabolic initial-boundary value problem

    db/dtau = grad(b) . f  +  1/2 Tr( hess(b) sigma sigma^T )   in Int C,
    b(0, .) = field,      b(tau, .) = 0  on boundary/exterior nodes,

with an explicit monotone scheme: first-order upwind differences for the
drift (direction switched by the sign of each drift component), central
differences for the diffusion, the sign-split 7-point stencil for mixed
second derivatives, and forward Euler in time under a CFL cap

    dt <= cfl_safety / max over nodes of
          ( sum_i |f_i|/h_i + sum_i a_ii/h_i^2 + sum_{i!=j} |a_ij|/(2 h_i h_j) ),

where ``a = sigma sigma^T``.  Ghost values outside the interior read as
zero, which implements the kill-on-exit convention uniformly; with
upwinding, outflow boundaries never consume ghost values, so rank-deficient
noise needs no special casing.  Monotonicity buys the discrete analogues of
the operator facts the rest of the toolkit leans on: positivity
preservation, non-expansiveness in the sup norm, and exact linearity for a
fixed policy.

Mixed-derivative monotonicity additionally requires the noise Gram matrix
to be diagonally dominant in the scaled sense ``a_ii/h_i >= sum |a_ij|/h_j``;
all built-in benchmarks have diagonal ``a``.

The optimal-control variant integrates ``db/dtau = max_u A^u b`` by scoring
a finite candidate-input set against the discrete upwind generator at every
node and step: box corners when the drift is input-affine with
input-independent noise, corners plus the clamped critical point for a
scalar input with quadratic-in-input noise Gram, and a Cartesian candidate
grid otherwise.  Ties resolve to the lowest candidate index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotInterior, StabilityViolation
from .grid import INTERIOR, GridSpec, ScalarField
from .systems import SystemModel

__all__ = [
    "PolicyTable",
    "PropagationConfig",
    "apply_generator",
    "propagate",
    "propagate_optimal",
    "argmax_policy",
]


class PolicyTable:
    """Tabulated feedback inputs on grid nodes, clamped into the input box."""

    __slots__ = ("spec", "inputs", "input_lower", "input_upper")

    def __init__(self, spec: GridSpec, inputs: np.ndarray,
                 input_lower, input_upper):
        self.spec = spec
        self.input_lower = np.asarray(input_lower, dtype=float).ravel()
        self.input_upper = np.asarray(input_upper, dtype=float).ravel()
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape != (spec.size, self.input_lower.size):
            raise ValueError(
                f"policy shape {inputs.shape} != (nodes={spec.size}, n_u={self.input_lower.size})"
            )
        inputs = np.clip(inputs, self.input_lower, self.input_upper)
        inputs.setflags(write=False)
        self.inputs = inputs

    @classmethod
    def constant(cls, sys: SystemModel, u) -> "PolicyTable":
        u = np.broadcast_to(np.asarray(u, dtype=float), (sys.n_u,))
        return cls(sys.grid, np.tile(u, (sys.grid.size, 1)),
                   sys.input_lower, sys.input_upper)

    @classmethod
    def zero(cls, sys: SystemModel) -> "PolicyTable":
        return cls.constant(sys, np.zeros(sys.n_u))

    def channel_fields(self) -> list[ScalarField]:
        """One scalar field per input channel (for file emission)."""
        return [ScalarField(self.spec, self.inputs[:, j])
                for j in range(self.inputs.shape[1])]


@dataclass(frozen=True)
class PropagationConfig:
    """Horizon and scheme controls for one operator application.

    ``dt`` optionally pins the step (must respect the stability bound);
    otherwise the step is the CFL bound rounded down so an integer number
    of steps covers the horizon exactly.  ``candidate_points`` sizes the
    Cartesian argmax grid per input dimension for systems without special
    input structure.
    """

    horizon: float = 0.5
    cfl_safety: float = 0.8
    scheme: str = "upwind_explicit"
    dt: float | None = None
    min_dt: float = 1e-9
    candidate_points: int = 9

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.scheme != "upwind_explicit":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")


# --- stencil workspace -------------------------------------------------------


class _Workspace:
    """Ghost-padded buffer with shifted views over the core window."""

    def __init__(self, spec: GridSpec, interior: np.ndarray):
        self.spec = spec
        self.n = spec.dims
        self.shape = spec.shape
        self.h = spec.spacing
        self.interior = interior.reshape(spec.shape)
        self.P = np.zeros(tuple(c + 2 for c in spec.shape))
        self.core = tuple(slice(1, -1) for _ in range(self.n))
        self._periodic_dims = [d for d in range(self.n) if spec.periodic[d]]

    def load(self, flat_values: np.ndarray):
        self.P[self.core] = np.where(
            self.interior, flat_values.reshape(self.shape), 0.0
        )

    def values(self) -> np.ndarray:
        return self.P[self.core].copy()

    def refresh_ghosts(self):
        # Slab copies over the full padded extent of the other axes, in
        # dimension order, so corner ghosts wrap correctly too.
        for d in self._periodic_dims:
            idx_dst = [slice(None)] * self.n
            idx_src = [slice(None)] * self.n
            idx_dst[d], idx_src[d] = 0, self.P.shape[d] - 2
            self.P[tuple(idx_dst)] = self.P[tuple(idx_src)]
            idx_dst[d], idx_src[d] = self.P.shape[d] - 1, 1
            self.P[tuple(idx_dst)] = self.P[tuple(idx_src)]

    def shifted(self, offsets: dict) -> np.ndarray:
        idx = [slice(1, -1)] * self.n
        for d, off in offsets.items():
            idx[d] = slice(1 + off, self.P.shape[d] - 1 + off)
        return self.P[tuple(idx)]

    def diffs(self, pairs):
        """Per-dimension one-sided/central differences and cross stencils."""
        v0 = self.P[self.core]
        back, fwd, second = [], [], []
        vp_list, vm_list = [], []
        for d in range(self.n):
            vp = self.shifted({d: +1})
            vm = self.shifted({d: -1})
            vp_list.append(vp)
            vm_list.append(vm)
            back.append((v0 - vm) / self.h[d])
            fwd.append((vp - v0) / self.h[d])
            second.append((vp - 2.0 * v0 + vm) / self.h[d] ** 2)
        cross = {}
        for (i, j) in pairs:
            vpp = self.shifted({i: +1, j: +1})
            vmm = self.shifted({i: -1, j: -1})
            vpm = self.shifted({i: +1, j: -1})
            vmp = self.shifted({i: -1, j: +1})
            faces = vp_list[i] + vm_list[i] + vp_list[j] + vm_list[j]
            denom = 2.0 * self.h[i] * self.h[j]
            cross[(i, j)] = (
                (2.0 * v0 + vpp + vmm - faces) / denom,
                -(2.0 * v0 + vpm + vmp - faces) / denom,
            )
        return _Diffs(v0, back, fwd, second, cross)


class _Diffs:
    __slots__ = ("v0", "back", "fwd", "second", "cross")

    def __init__(self, v0, back, fwd, second, cross):
        self.v0 = v0
        self.back = back
        self.fwd = fwd
        self.second = second
        self.cross = cross


class _Coeffs:
    """Shaped PDE coefficients for one (policy or candidate) input field."""

    __slots__ = ("fpos", "fneg", "adiag", "cross", "node_load_drift",
                 "node_load_diff", "_interior")

    def __init__(self, spec: GridSpec, F: np.ndarray, gram: np.ndarray,
                 interior: np.ndarray, drift_only=False, diffusion_only=False):
        n = spec.dims
        shape = spec.shape
        h = spec.spacing
        self._interior = interior
        self.node_load_drift = np.zeros(spec.size)
        self.node_load_diff = np.zeros(spec.size)
        if diffusion_only:
            self.fpos = self.fneg = None
        else:
            Fr = F.reshape((spec.size, n))
            self.fpos = np.maximum(Fr, 0.0).T.reshape((n,) + shape)
            self.fneg = np.minimum(Fr, 0.0).T.reshape((n,) + shape)
            self.node_load_drift = np.abs(Fr) @ (1.0 / h)
        if drift_only:
            self.adiag = None
            self.cross = {}
        else:
            load = np.zeros(spec.size)
            g = gram.reshape((spec.size, n, n))
            diag = np.einsum("kii->ki", g)
            self.adiag = diag.T.reshape((n,) + shape)
            load += diag @ (1.0 / h**2)
            self.cross = {}
            for i in range(n):
                for j in range(i + 1, n):
                    aij = g[:, i, j]
                    if np.any(aij != 0.0):
                        apos = np.maximum(aij, 0.0).reshape(shape)
                        aneg = np.minimum(aij, 0.0).reshape(shape)
                        self.cross[(i, j)] = (apos, aneg)
                        load += np.abs(aij) / (h[i] * h[j])
            self.node_load_diff = load

    @property
    def load(self) -> float:
        """Peak nodal CFL load (interior nodes only)."""
        total = self.node_load_drift + self.node_load_diff
        return float(np.max(total[self._interior])) if np.any(self._interior) else 0.0

    def rate(self, d: _Diffs, out=None) -> np.ndarray:
        # Backward-Kolmogorov upwinding: the expectation reads values where
        # the state flows to, so positive drift consumes the forward
        # difference (monotone: b_new is a convex combination of neighbors).
        acc = np.zeros_like(d.v0) if out is None else out
        if self.fpos is not None:
            for i in range(len(d.back)):
                acc += self.fpos[i] * d.fwd[i]
                acc += self.fneg[i] * d.back[i]
        if self.adiag is not None:
            for i in range(len(d.second)):
                acc += 0.5 * self.adiag[i] * d.second[i]
            for (i, j), (apos, aneg) in self.cross.items():
                spos, sneg = d.cross[(i, j)]
                acc += apos * spos
                acc += aneg * sneg
        return acc


def _choose_step(horizon: float, load: float, cfg: PropagationConfig):
    if horizon == 0.0:
        return 0, 0.0
    bound = math.inf if load <= 0.0 else cfg.cfl_safety / load
    if bound < cfg.min_dt:
        raise StabilityViolation(
            f"stable step {bound:.3e} is below the floor {cfg.min_dt:.1e}"
        )
    target = bound
    if cfg.dt is not None:
        if cfg.dt > bound * (1.0 + 1e-12):
            raise StabilityViolation(
                f"requested dt {cfg.dt:.3e} exceeds the stability bound {bound:.3e}"
            )
        target = cfg.dt
    n = max(1, math.ceil(horizon / target - 1e-12))
    return n, horizon / n


def _check_specs(field: ScalarField, sys: SystemModel):
    if field.spec != sys.grid:
        raise ValueError("field grid does not match the system grid")


# --- generator at a single node ----------------------------------------------


def apply_generator(field: ScalarField, sys: SystemModel, u: np.ndarray,
                    node: int) -> float:
    """Discrete generator value at one interior node for a fixed input.

    Uses the same upwind/central stencil as :func:`propagate`, with
    boundary/exterior neighbor values read as zero (the killed process
    assigns zero outside the interior).
    """
    _check_specs(field, sys)
    spec = field.spec
    cls = sys.node_classes()
    node = int(node)
    if cls[node] != INTERIOR:
        raise NotInterior(f"node {node} is not interior")
    shape = spec.shape
    idx = np.array(np.unravel_index(node, shape))
    vals = field.values
    h = spec.spacing

    def read(mi):
        mi = list(mi)
        for d in range(spec.dims):
            if spec.periodic[d]:
                mi[d] %= shape[d]
            elif mi[d] < 0 or mi[d] >= shape[d]:
                return 0.0
        flat = int(np.ravel_multi_index(mi, shape))
        return vals[flat] if cls[flat] == INTERIOR else 0.0

    x = np.array([spec.coordinates(d)[idx[d]] for d in range(spec.dims)])
    u = np.asarray(u, dtype=float).ravel()
    f = np.asarray(sys.drift(x, u), dtype=float).ravel()
    a = np.asarray(sys.gram(x, u), dtype=float)

    v0 = vals[node]
    total = 0.0
    for i in range(spec.dims):
        ip = idx.copy(); ip[i] += 1
        im = idx.copy(); im[i] -= 1
        vp, vm = read(ip), read(im)
        total += max(f[i], 0.0) * (vp - v0) / h[i]
        total += min(f[i], 0.0) * (v0 - vm) / h[i]
        total += 0.5 * a[i, i] * (vp - 2.0 * v0 + vm) / h[i] ** 2
    for i in range(spec.dims):
        for j in range(i + 1, spec.dims):
            if a[i, j] == 0.0:
                continue
            def read2(oi, oj):
                mi = idx.copy(); mi[i] += oi; mi[j] += oj
                return read(mi)
            faces = read2(1, 0) + read2(-1, 0) + read2(0, 1) + read2(0, -1)
            denom = 2.0 * h[i] * h[j]
            spos = (2.0 * v0 + read2(1, 1) + read2(-1, -1) - faces) / denom
            sneg = -(2.0 * v0 + read2(1, -1) + read2(-1, 1) - faces) / denom
            total += max(a[i, j], 0.0) * spos + min(a[i, j], 0.0) * sneg
    return float(total)


# --- fixed-policy propagation --------------------------------------------------


def propagate(field: ScalarField, sys: SystemModel, policy: PolicyTable,
              cfg: PropagationConfig) -> ScalarField:
    """Apply the killed semigroup over ``cfg.horizon`` under a fixed policy.

    The result is zero outside the interior; a zero horizon returns the
    input unchanged (the identity operator).
    """
    _check_specs(field, sys)
    if policy.spec != sys.grid:
        raise ValueError("policy grid does not match the system grid")
    if cfg.horizon == 0.0:
        return ScalarField(field.spec, field.values)
    spec = sys.grid
    interior = sys.interior_mask()
    nodes = spec.nodes()
    F = sys.drift(nodes, policy.inputs)
    gram = sys.gram(nodes, policy.inputs)
    coeffs = _Coeffs(spec, F, gram, interior)
    n_steps, dt = _choose_step(cfg.horizon, coeffs.load, cfg)
    ws = _Workspace(spec, interior)
    ws.load(field.values)
    pairs = list(coeffs.cross.keys())
    mask = ws.interior
    for _ in range(n_steps):
        ws.refresh_ghosts()
        d = ws.diffs(pairs)
        rate = coeffs.rate(d)
        ws.P[ws.core] = np.where(mask, d.v0 + dt * rate, 0.0)
    return ScalarField(spec, ws.values().ravel())


# --- optimal-control propagation ----------------------------------------------


class _QuadGramModel:
    """Per-node quadratic model a(u) = c0 + c1 u + c2 u^2 of the noise Gram
    entries for scalar-input systems (exact when the Gram is quadratic)."""

    def __init__(self, sys: SystemModel):
        nodes = sys.grid.nodes()
        lo, hi = sys.input_lower[0], sys.input_upper[0]
        mid = 0.5 * (lo + hi)
        us = np.array([lo, mid, hi])
        if lo == hi:
            raise ValueError("degenerate input box has no quadratic structure")
        g = [sys.gram(nodes, np.full((sys.grid.size, 1), u)) for u in us]
        # Exact 3-point quadratic reconstruction.
        d = (hi - lo)
        self.c2 = (g[0] + g[2] - 2.0 * g[1]) * 2.0 / d**2
        self.c1 = (g[2] - g[0]) / d - self.c2 * (lo + hi)
        self.c0 = g[1] - self.c1 * mid - self.c2 * mid**2
        self.lo, self.hi = lo, hi

    def box_max(self) -> np.ndarray:
        """Entrywise max of a(u) over the input interval (for the CFL bound)."""
        vals = [self.c0 + self.c1 * u + self.c2 * u**2 for u in (self.lo, self.hi)]
        out = np.maximum(*vals)
        crit = np.where(self.c2 != 0.0, -self.c1 / (2.0 * np.where(self.c2 == 0, 1.0, self.c2)), self.lo)
        inside = (crit > self.lo) & (crit < self.hi) & (self.c2 != 0.0)
        vc = self.c0 + self.c1 * crit + self.c2 * crit**2
        return np.where(inside, np.maximum(out, vc), out)


class _OptimalScheme:
    """Candidate machinery shared by propagate_optimal and argmax_policy."""

    def __init__(self, sys: SystemModel, cfg: PropagationConfig):
        self.sys = sys
        self.cfg = cfg
        spec = sys.grid
        self.spec = spec
        self.interior = sys.interior_mask()
        nodes = spec.nodes()
        flags = sys.flags
        width = sys.input_upper - sys.input_lower
        degenerate = bool(np.all(width == 0.0))

        self.dynamic_quadratic = False
        if degenerate:
            cand = sys.input_center()[None, :]
        elif flags.input_affine and (flags.sigma_u_independent or flags.sigma_zero):
            cand = sys.input_corners()
        elif flags.input_affine and flags.sigma_gram_quadratic and sys.n_u == 1:
            cand = sys.input_corners()
            self.dynamic_quadratic = True
        else:
            cand = sys.input_grid(cfg.candidate_points)
        self.candidates = cand

        share_diffusion = flags.sigma_u_independent or flags.sigma_zero
        self.base = None
        self.coeffs = []
        node_load = np.zeros(spec.size)
        for u in cand:
            U = np.broadcast_to(u, (spec.size, sys.n_u))
            F = sys.drift(nodes, U)
            gram = None if share_diffusion else sys.gram(nodes, U)
            c = _Coeffs(spec, F, gram, self.interior, drift_only=share_diffusion)
            self.coeffs.append(c)
            node_load = np.maximum(
                node_load, c.node_load_drift + c.node_load_diff
            )
        if share_diffusion:
            gram = sys.gram(nodes, np.broadcast_to(cand[0], (spec.size, sys.n_u)))
            self.base = _Coeffs(spec, None, gram, self.interior, diffusion_only=True)
            node_load += self.base.node_load_diff
        self.quad = None
        if self.dynamic_quadratic:
            self.quad = _QuadGramModel(sys)
            gbound = _Coeffs(spec, None, self.quad.box_max(), self.interior,
                             diffusion_only=True)
            # The critical candidate's drift load is covered by the corner
            # candidates (affine drift peaks at a box vertex); its noise
            # Gram needs the exact interval max.
            drift_peak = np.zeros(spec.size)
            for c in self.coeffs:
                drift_peak = np.maximum(drift_peak, c.node_load_drift)
            node_load = np.maximum(node_load, drift_peak + gbound.node_load_diff)
            self.nodes = nodes
        self.load = float(np.max(node_load[self.interior]))
        pairs = set()
        if self.base is not None:
            pairs |= set(self.base.cross.keys())
        for c in self.coeffs:
            pairs |= set(c.cross.keys())
        if self.quad is not None:
            pairs |= {
                (i, j)
                for i in range(spec.dims)
                for j in range(i + 1, spec.dims)
                if np.any(self.quad.c1[:, i, j] != 0.0) or np.any(self.quad.c2[:, i, j] != 0.0)
                or np.any(self.quad.c0[:, i, j] != 0.0)
            }
        self.pairs = sorted(pairs)

    def _critical_input(self, d: _Diffs) -> np.ndarray:
        """Clamped stationary point of the continuous generator in u
        (scalar input, affine drift, quadratic Gram), from central diffs."""
        sys = self.sys
        spec = self.spec
        n = spec.dims
        grad = [(d.back[i] + d.fwd[i]) / 2.0 for i in range(n)]
        # d/du [ grad.f0 + grad.(g1 u) + 1/2 sum H_ij (c0+c1 u+c2 u^2)_ij ]
        #   = grad.g1 + 1/2 sum H_ij c1_ij + u sum H_ij c2_ij
        lin = np.zeros(spec.shape)
        quadc = np.zeros(spec.shape)
        g1 = self._drift_slope()
        for i in range(n):
            lin += grad[i] * g1[i]
        c1 = self.quad.c1.reshape((spec.size, n, n))
        c2 = self.quad.c2.reshape((spec.size, n, n))
        for i in range(n):
            Hii = d.second[i]
            lin += 0.5 * c1[:, i, i].reshape(spec.shape) * Hii
            quadc += 0.5 * c2[:, i, i].reshape(spec.shape) * Hii
        # Cross Hessian entries: central-of-central composition.
        for (i, j) in self.pairs:
            if np.any(c1[:, i, j] != 0.0) or np.any(c2[:, i, j] != 0.0):
                spos, sneg = d.cross[(i, j)]
                Hij = 0.5 * (spos + sneg)  # equals the 4-point central stencil
                lin += c1[:, i, j].reshape(spec.shape) * Hij
                quadc += c2[:, i, j].reshape(spec.shape) * Hij
        denom = 2.0 * quadc
        safe = np.abs(denom) > 1e-300
        ustar = np.where(safe, -lin / np.where(safe, denom, 1.0), self.sys.input_lower[0])
        return np.clip(ustar, sys.input_lower[0], sys.input_upper[0])

    def _drift_slope(self) -> np.ndarray:
        """Affine drift slope g1(x) per dim, shape (n_x, *shape) (scalar input)."""
        if not hasattr(self, "_g1"):
            sys = self.sys
            lo, hi = sys.input_lower[0], sys.input_upper[0]
            nodes = self.spec.nodes()
            Fl = sys.drift(nodes, np.full((self.spec.size, 1), lo))
            Fh = sys.drift(nodes, np.full((self.spec.size, 1), hi))
            g1 = (Fh - Fl) / (hi - lo)
            self._g1 = g1.T.reshape((self.spec.dims,) + self.spec.shape)
        return self._g1

    def _dynamic_coeffs(self, d: _Diffs):
        ustar = self._critical_input(d).ravel()
        U = ustar[:, None]
        F = self.sys.drift(self.nodes, U)
        gram = self.sys.gram(self.nodes, U)
        return _Coeffs(self.spec, F, gram, self.interior), ustar

    def score(self, d: _Diffs):
        """Best rate over candidates and the winning input per node."""
        base_rate = self.base.rate(d) if self.base is not None else None
        best = None
        arg = np.zeros(self.spec.shape, dtype=np.int64)
        for k, c in enumerate(self.coeffs):
            r = c.rate(d)
            if best is None:
                best = r
            else:
                better = r > best
                best = np.where(better, r, best)
                arg = np.where(better, k, arg)
        ustar = None
        if self.dynamic_quadratic:
            cdyn, ustar = self._dynamic_coeffs(d)
            r = cdyn.rate(d)
            better = r > best
            best = np.where(better, r, best)
            arg = np.where(better, len(self.coeffs), arg)
        if base_rate is not None:
            best = best + base_rate
        return best, arg, ustar

    def winning_inputs(self, arg: np.ndarray, ustar) -> np.ndarray:
        n_u = self.sys.n_u
        flat = arg.ravel()
        out = self.candidates[np.minimum(flat, len(self.candidates) - 1)]
        if ustar is not None:
            dyn = flat == len(self.coeffs)
            out = out.copy()
            out[dyn, 0] = ustar[dyn]
        return out.reshape((self.spec.size, n_u))


def propagate_optimal(field: ScalarField, sys: SystemModel,
                      cfg: PropagationConfig):
    """Apply the semigroup while choosing the pointwise safest input.

    At every node and internal time step the input maximizing the discrete
    generator is used.  Returns the final field and the argmax policy
    evaluated against the final field.
    """
    _check_specs(field, sys)
    scheme = _OptimalScheme(sys, cfg)
    spec = sys.grid
    ws = _Workspace(spec, scheme.interior)
    ws.load(field.values)
    mask = ws.interior
    if cfg.horizon > 0.0:
        n_steps, dt = _choose_step(cfg.horizon, scheme.load, cfg)
        for _ in range(n_steps):
            ws.refresh_ghosts()
            d = ws.diffs(scheme.pairs)
            rate, _, _ = scheme.score(d)
            ws.P[ws.core] = np.where(mask, d.v0 + dt * rate, 0.0)
    out = ws.values().ravel()
    ws.refresh_ghosts()
    d = ws.diffs(scheme.pairs)
    _, arg, ustar = scheme.score(d)
    inputs = scheme.winning_inputs(arg, ustar)
    policy = PolicyTable(spec, inputs, sys.input_lower, sys.input_upper)
    if cfg.horizon == 0.0:
        return ScalarField(spec, field.values), policy
    return ScalarField(spec, out), policy


def argmax_policy(field: ScalarField, sys: SystemModel,
                  cfg: PropagationConfig) -> PolicyTable:
    """Pointwise argmax of the discrete generator against a fixed field."""
    _check_specs(field, sys)
    scheme = _OptimalScheme(sys, cfg)
    ws = _Workspace(sys.grid, scheme.interior)
    ws.load(field.values)
    ws.refresh_ghosts()
    d = ws.diffs(scheme.pairs)
    _, arg, ustar = scheme.score(d)
    inputs = scheme.winning_inputs(arg, ustar)
    return PolicyTable(sys.grid, inputs, sys.input_lower, sys.input_upper)
