"""Bicycle around an obstacle: filtered vs unfiltered reference.

A kinematic bicycle with heading/speed noise must avoid a unit disk at the
origin while obeying speed limits.  The reference tracks a circle of
radius 1.5 and ignores the obstacle entirely; the barrier-QP filter
(decay rate 0.15) overrides it near danger.  Expect a large survival gap.
"""

import math
import time

import numpy as np

from scbf import (
    FilterSpec,
    PropagationConfig,
    ScbfQpController,
    SimConfig,
    bicycle_circle_reference,
    estimate_safety_curve,
    make_benchmark,
    power_policy_iteration,
)


class RawReference:
    def __init__(self, reference):
        self.reference = reference

    def inputs(self, sys, t, X):
        return np.clip(self.reference(t, X), sys.input_lower, sys.input_upper)


sys_model = make_benchmark("bicycle")  # 31 x 31 x 24 x 11 grid
t0 = time.perf_counter()
result = power_policy_iteration(sys_model, PropagationConfig(horizon=0.5),
                                tol=1e-4, max_iter=300)
print(f"synthesis: gamma = {result.gamma:.4f}, {result.iterations} iterations, "
      f"{time.perf_counter() - t0:.0f} s")

spec = FilterSpec(sys_model, result, gamma=0.15)
reference = bicycle_circle_reference(radius=1.5, speed=1.0)
x0 = np.array([1.5, 0.0, math.pi / 2.0, 1.0])
base = dict(t_end=10.0, trials=500, seed=0, dt=1e-3)

t0 = time.perf_counter()
filtered = estimate_safety_curve(
    sys_model, SimConfig(controller=ScbfQpController(spec, reference), **base), x0)
raw = estimate_safety_curve(
    sys_model, SimConfig(controller=RawReference(reference), **base), x0)
print(f"simulation: 2 x {base['trials']} trials, {time.perf_counter() - t0:.0f} s\n")

print(f"{'t':>4s} {'filtered':>22s} {'reference':>22s}")
for t_probe in (2.0, 4.0, 7.0, 10.0):
    k = int(round(t_probe / base["dt"]))
    f_s = filtered.survival_fraction[k]
    r_s = raw.survival_fraction[k]
    print(f"{t_probe:4.1f} {f_s:8.3f} [{filtered.wilson_low[k]:.3f}, {filtered.wilson_high[k]:.3f}]"
          f" {r_s:8.3f} [{raw.wilson_low[k]:.3f}, {raw.wilson_high[k]:.3f}]")
print("\nThe filter's backup maneuvers (swerving off the circle near the")
print("obstacle) buy a significantly higher survival probability.")
