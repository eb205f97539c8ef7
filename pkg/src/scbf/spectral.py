"""Dominant eigenpair synthesis by power iteration and power-policy iteration.

Power iteration repeatedly applies the killed semigroup over a fixed
horizon ``t`` and renormalizes in the sup norm:

    psi <- T psi / ||T psi||,      gamma = -log(||T psi||) / t.

Because the operator is positive, a nonnegative initial guess keeps every
iterate nonnegative, and the normalized iterates converge to the unique
nonnegative dominant eigenfunction (geometrically, at the spectral-gap
ratio).  The decay rate is horizon-invariant: eigenfunctions computed with
different horizons agree, and the eigenvalue exponentiates as exp(-gamma t).

Power-policy iteration folds a policy-improvement step into the same loop.
The default (accelerated) variant integrates the pointwise-max PDE, so each
inner time step already uses the instantaneous safest input; the literal
two-step variant (improve the policy against the current iterate, then
apply the fixed-policy operator) is kept for A/B comparison.

Convergence is declared on the sup-norm difference of consecutive
normalized iterates.  A non-converged run is not an error: the result
carries its residual history and ``converged=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Collapse
from .grid import ScalarField, sup_norm
from .semigroup import PolicyTable, PropagationConfig, argmax_policy, propagate, propagate_optimal
from .systems import SystemModel

__all__ = [
    "IterationRecord",
    "EigenResult",
    "default_initial_field",
    "initial_field",
    "warm_start_field",
    "power_iteration",
    "power_policy_iteration",
    "eigen_residual",
]

_COLLAPSE_FLOOR = 1e-280


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    residual: float
    gamma_estimate: float


@dataclass
class EigenResult:
    """Converged (or partial) eigenpair with its backup policy and history.

    ``psi`` has unit sup norm, is nonnegative, and vanishes on killed
    boundary nodes; ``gamma = -log(||T_t psi||)/t`` for the reported pair.
    """

    gamma: float
    psi: ScalarField
    policy: PolicyTable
    history: list[IterationRecord]
    converged: bool
    horizon: float

    @property
    def iterations(self) -> int:
        return len(self.history)


def default_initial_field(sys: SystemModel) -> ScalarField:
    """Product of per-dimension parabolic bumps, zeroed outside the interior."""
    return initial_field(sys, "bump")


def initial_field(sys: SystemModel, kind: str = "bump") -> ScalarField:
    """Named nonnegative initial guesses.

    bump     product of per-dimension bumps max(0, 1 - (2(x-c)/w)^2)
    gauss    off-center Gaussian bump (center shifted a quarter width)
    plateau  indicator of the interior node set
    """
    spec = sys.grid
    nodes = sys.grid.nodes()
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    width = hi - lo
    center = 0.5 * (lo + hi)
    if kind == "bump":
        vals = np.ones(spec.size)
        for d in range(spec.dims):
            vals *= np.maximum(0.0, 1.0 - (2.0 * (nodes[:, d] - center[d]) / width[d]) ** 2)
    elif kind == "gauss":
        c = center + 0.25 * width
        vals = np.exp(-8.0 * np.sum(((nodes - c) / width) ** 2, axis=1))
    elif kind == "plateau":
        vals = np.ones(spec.size)
    else:
        raise ValueError(f"unknown initial field kind {kind!r}")
    vals = np.where(sys.interior_mask(), vals, 0.0)
    m = np.max(np.abs(vals))
    if m == 0.0:
        raise ValueError("initial field vanished on the interior")
    return ScalarField(spec, vals / m)


def warm_start_field(field: ScalarField, sys: SystemModel) -> ScalarField:
    """Resample a field (e.g. a coarser converged barrier) onto a system's
    grid as an initial guess: interpolated, clipped nonnegative, zeroed
    outside the interior."""
    from .grid import _interp_stack

    vals = _interp_stack(field.spec, field.values[None, :], sys.grid.nodes())[:, 0]
    vals = np.where(sys.interior_mask(), np.maximum(vals, 0.0), 0.0)
    return ScalarField(sys.grid, vals)


def _normalized_start(sys: SystemModel, init: ScalarField) -> ScalarField:
    vals = np.where(sys.interior_mask(), init.values, 0.0)
    if np.any(vals < 0.0):
        raise ValueError("initial field must be nonnegative")
    m = np.max(vals)
    if m <= _COLLAPSE_FLOOR:
        raise Collapse("initial field has no mass on the interior")
    return ScalarField(sys.grid, vals / m)


def _iterate(sys, cfg, psi, step, tol, max_iter):
    """Shared normalize-and-test loop; ``step`` maps psi -> (T psi, extra)."""
    history = []
    extra = None
    converged = False
    gamma = math.nan
    for it in range(1, max_iter + 1):
        out, extra = step(psi)
        r = sup_norm(out)
        if r <= _COLLAPSE_FLOOR:
            raise Collapse(
                f"operator annihilated the iterate at iteration {it}"
            )
        new = ScalarField(sys.grid, out.values / r)
        residual = sup_norm(ScalarField(sys.grid, new.values - psi.values))
        gamma = -math.log(r) / cfg.horizon
        history.append(IterationRecord(it, residual, gamma))
        psi = new
        if residual < tol:
            converged = True
            break
    return psi, extra, gamma, history, converged


def power_iteration(sys: SystemModel, policy: PolicyTable,
                    cfg: PropagationConfig, init: ScalarField,
                    tol: float = 1e-4, max_iter: int = 500) -> EigenResult:
    """Dominant eigenpair of the fixed-policy semigroup operator."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if cfg.horizon <= 0:
        raise ValueError("power iteration needs a positive horizon")
    psi = _normalized_start(sys, init)

    def step(p):
        return propagate(p, sys, policy, cfg), None

    psi, _, gamma, history, converged = _iterate(sys, cfg, psi, step, tol, max_iter)
    return EigenResult(gamma=gamma, psi=psi, policy=policy, history=history,
                       converged=converged, horizon=cfg.horizon)


def power_policy_iteration(sys: SystemModel, cfg: PropagationConfig,
                           init_psi: ScalarField | None = None,
                           init_policy: PolicyTable | None = None,
                           tol: float = 1e-4, max_iter: int = 500,
                           accelerated: bool = True) -> EigenResult:
    """Joint eigenpair and backup-policy synthesis.

    The accelerated variant integrates the pointwise-max PDE directly; the
    two-step variant alternates an explicit policy improvement with a
    fixed-policy operator application.  The returned policy is the
    pointwise argmax of the generator against the final field.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if cfg.horizon <= 0:
        raise ValueError("power-policy iteration needs a positive horizon")
    psi = _normalized_start(sys, init_psi if init_psi is not None
                            else default_initial_field(sys))
    policy = init_policy if init_policy is not None else PolicyTable.zero(sys)

    if accelerated:
        def step(p):
            return propagate_optimal(p, sys, cfg)
    else:
        def step(p):
            improved = argmax_policy(p, sys, cfg)
            return propagate(p, sys, improved, cfg), improved

    psi, extra, gamma, history, converged = _iterate(sys, cfg, psi, step, tol, max_iter)
    policy = extra if extra is not None else policy
    if not accelerated:
        # Report the argmax policy against the final field, as the
        # accelerated variant does.
        policy = argmax_policy(psi, sys, cfg)
    return EigenResult(gamma=gamma, psi=psi, policy=policy, history=history,
                       converged=converged, horizon=cfg.horizon)


def eigen_residual(result: EigenResult, sys: SystemModel,
                   cfg: PropagationConfig) -> float:
    """Independent convergence certificate: ||T_t psi - exp(-gamma t) psi||."""
    out = propagate(result.psi, sys, result.policy, cfg)
    decay = math.exp(-result.gamma * cfg.horizon)
    return sup_norm(ScalarField(sys.grid, out.values - decay * result.psi.values))
