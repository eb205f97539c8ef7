"""Double integrator under four noise models.

Position-velocity dynamics (x' = v, v' = u) on C = [-1,1] x [-2,2] with
|u| <= 1, run through power-policy iteration for each diffusion case:

  1. identity noise on both states (all theory assumptions hold),
  2. noise on the velocity only (rank-deficient),
  3. input-dependent velocity noise sqrt(1 + u^2),
  4. no noise at all (deterministic limit).

Case 1 converges to the same decay rate from three different initial
guesses.  Case 4's eigenfunction approaches the indicator of the analytic
viability kernel x <= 1 - v^2/2 (for v > 0, mirrored for v < 0).
"""

import numpy as np

from scbf import (
    PropagationConfig,
    ScalarField,
    initial_field,
    make_benchmark,
    power_policy_iteration,
    sup_norm,
)

GRID = (41, 81)
cfg = PropagationConfig(horizon=0.5)

print("case 1 (omnidirectional noise): three initial guesses")
sys_model = make_benchmark("di_omni", grid_counts=GRID)
results = {}
for kind in ("bump", "gauss", "plateau"):
    res = power_policy_iteration(sys_model, cfg,
                                 init_psi=initial_field(sys_model, kind),
                                 tol=1e-6, max_iter=300)
    results[kind] = res
    print(f"  init={kind:8s} gamma = {res.gamma:.6f}  ({res.iterations} iterations)")
pairs = [("bump", "gauss"), ("bump", "plateau"), ("gauss", "plateau")]
worst = max(sup_norm(ScalarField(sys_model.grid,
                                 results[a].psi.values - results[b].psi.values))
            for a, b in pairs)
print(f"  max eigenfunction disagreement: {worst:.2e}")

for case in ("di_velocity", "di_input_noise"):
    sys_model = make_benchmark(case, grid_counts=GRID)
    res = power_policy_iteration(sys_model, cfg, tol=1e-5, max_iter=300)
    rank = sys_model.flags.noise_rank
    print(f"\n{case}: gamma = {res.gamma:.4f} (noise rank {rank} of {sys_model.n_x})")
    if case == "di_velocity":
        psi = res.psi.shaped()
        v = sys_model.grid.coordinates(1)
        print("  boundary column x = 1-h:  psi(v=-1) = "
              f"{psi[-2, np.argmin(abs(v + 1))]:.3f}, psi(v=+1) = "
              f"{psi[-2, np.argmin(abs(v - 1))]:.3f}")
        print("  (positive where the drift points inward: the eigenfunction")
        print("   keeps nonzero boundary values once the noise loses rank)")

print("\ncase 4 (deterministic): viability kernel")
sys_model = make_benchmark("di_deterministic", grid_counts=GRID)
res = power_policy_iteration(sys_model, cfg, tol=1e-4, max_iter=300)
nodes = sys_model.grid.nodes()
x, v = nodes[:, 0], nodes[:, 1]
kernel = (((v <= 0) | (x <= 1 - v**2 / 2))
          & ((v >= 0) | (x >= -1 + v**2 / 2)) & sys_model.interior_mask())
est = res.psi.values >= 0.5
agree = np.mean(est == kernel)
print(f"  gamma = {res.gamma:.6f} (no decay inside an invariant set)")
print(f"  0.5-superlevel set matches the stopping-distance kernel on "
      f"{100 * agree:.1f}% of nodes")
