"""Command-line orchestration: synthesize / simulate / filter / verify / export-plot.

Jobs are described by a flat ``key = value`` config file (dotted keys, ``#``
comments); command-line flags override config keys.  Every output directory
receives a metadata document that echoes the effective configuration, so a
job can be re-run bit-exactly from its own metadata file (the ``result.*``
and ``history.*`` namespaces are ignored on input).

Exit codes: 0 success, 1 config/file errors, 2 synthesis did not converge
(files are still written), 3 verification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys as _sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, ScbfError
from .grid import read_field, sup_norm, write_field
from .montecarlo import (
    FixedPolicyController,
    OpenLoopController,
    ScbfQpController,
    SimConfig,
    bicycle_circle_reference,
    constant_reference,
    estimate_safety_curve,
    simulate,
    write_safety_curve_csv,
    write_trajectory_csv,
)
from .safety_filter import FilterSpec, filter_input
from .semigroup import PolicyTable, PropagationConfig, propagate
from .spectral import (
    EigenResult,
    IterationRecord,
    eigen_residual,
    initial_field,
    power_iteration,
    power_policy_iteration,
    warm_start_field,
)
from .systems import make_benchmark

# --- config schema ------------------------------------------------------------

_SCHEMA = {
    "system.id": str,
    "grid.counts": str,
    "propagation.horizon": float,
    "propagation.cfl_safety": float,
    "propagation.candidate_points": int,
    "iteration.tol": float,
    "iteration.max_iter": int,
    "iteration.init": str,
    "iteration.algorithm": str,
    "iteration.warm_start": str,
    "iteration.coarse_ladder": int,
    "simulation.dt": float,
    "simulation.t_end": float,
    "simulation.trials": int,
    "simulation.seed": int,
    "simulation.x0": str,
    "simulation.controller": str,
    "simulation.reference": str,
    "simulation.reference_u": str,
    "simulation.u_const": str,
    "filter.gamma": float,
    "filter.weight": str,
    "verify.residual_tol": float,
    "threads": int,
}

_DEFAULTS = {
    "propagation.horizon": 0.5,
    "propagation.cfl_safety": 0.8,
    "propagation.candidate_points": 9,
    "iteration.tol": 1e-4,
    "iteration.max_iter": 500,
    "iteration.init": "bump",
    "iteration.algorithm": "power_policy",
    "iteration.coarse_ladder": 0,
    "simulation.dt": 1e-3,
    "simulation.t_end": 3.0,
    "simulation.trials": 1000,
    "simulation.seed": 0,
    "simulation.controller": "fixed_policy",
    "simulation.reference": "zero",
    "verify.residual_tol": 5e-3,
    "threads": 1,
}

_IGNORED_PREFIXES = ("result.", "history.")


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """Strict flat key = value parser with line diagnostics."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith(_IGNORED_PREFIXES):
            continue
        if key.startswith("system.overrides."):
            out[key] = value
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


class JobConfig:
    """Typed view over the merged config-file + flag key/value map."""

    def __init__(self, raw: dict):
        self.raw = dict(raw)

    def get(self, key, default=None):
        if key in self.raw:
            caster = _SCHEMA.get(key, str)
            try:
                return caster(self.raw[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        return default

    def overrides(self) -> dict:
        out = {}
        for key, value in self.raw.items():
            if key.startswith("system.overrides."):
                name = key[len("system.overrides."):]
                try:
                    out[name] = float(value)
                except ValueError:
                    raise ConfigError(
                        f"config key {key!r}: expected a number"
                    ) from None
        return out

    def vector(self, key, default=None):
        text = self.get(key)
        if text is None:
            return default
        try:
            return [float(part) for part in str(text).split(",") if part.strip()]
        except ValueError:
            raise ConfigError(f"config key {key!r}: expected comma-separated numbers") from None

    def int_vector(self, key, default=None):
        vec = self.vector(key)
        return default if vec is None else [int(v) for v in vec]

    def echo_lines(self) -> list[str]:
        lines = []
        for key in sorted(set(self.raw) | set(_DEFAULTS)):
            value = self.raw.get(key, _DEFAULTS.get(key))
            lines.append(f"{key} = {value}")
        return lines


def _load_job(args) -> JobConfig:
    raw = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        raw.update(parse_config_text(path.read_text(), str(path)))
    flag_map = {
        "system": "system.id",
        "grid": "grid.counts",
        "horizon": "propagation.horizon",
        "tol": "iteration.tol",
        "seed": "simulation.seed",
        "trials": "simulation.trials",
        "threads": "threads",
        "gamma": "filter.gamma",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            raw[key] = str(value)
    if "threads" not in raw and os.environ.get("SCBF_THREADS"):
        raw["threads"] = os.environ["SCBF_THREADS"]
    return JobConfig(raw)


def _build_system(job: JobConfig):
    bench = job.get("system.id")
    if bench is None:
        raise ConfigError("missing required key 'system.id'")
    return make_benchmark(bench, job.overrides(), job.int_vector("grid.counts"))


def _prop_config(job: JobConfig) -> PropagationConfig:
    return PropagationConfig(
        horizon=job.get("propagation.horizon"),
        cfl_safety=job.get("propagation.cfl_safety"),
        candidate_points=job.get("propagation.candidate_points"),
    )


# --- artifact I/O ---------------------------------------------------------------


def _write_metadata(path: Path, job: JobConfig, result_lines: list[str],
                    history: list[IterationRecord] | None = None):
    lines = job.echo_lines() + result_lines
    if history:
        for rec in history:
            lines.append(
                f"history.{rec.iteration} = {rec.residual!r} {rec.gamma_estimate!r}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _read_metadata(path: Path) -> dict:
    meta = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line or "=" not in line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        meta[key] = value
    return meta


def save_result(result: EigenResult, job: JobConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    write_field(result.psi, out / "psi.fld")
    policy_files = []
    for j, fld in enumerate(result.policy.channel_fields()):
        name = f"policy_{j}.fld"
        write_field(fld, out / name)
        policy_files.append(name)
    final_residual = result.history[-1].residual if result.history else math.nan
    # Diagnostic only: whether the rate estimate decreased monotonically over
    # the tail half of the iteration (not guaranteed during the transient).
    gammas = [rec.gamma_estimate for rec in result.history]
    tail = gammas[len(gammas) // 2:]
    monotone = int(all(b <= a + 1e-12 for a, b in zip(tail, tail[1:])))
    result_lines = [
        f"result.gamma = {result.gamma!r}",
        f"result.converged = {int(result.converged)}",
        f"result.iterations = {result.iterations}",
        f"result.residual = {final_residual!r}",
        f"result.horizon = {result.horizon!r}",
        f"result.gamma_tail_monotone = {monotone}",
        "result.psi_file = psi.fld",
        f"result.policy_files = {','.join(policy_files)}",
    ]
    _write_metadata(out / "metadata.txt", job, result_lines, result.history)


def load_result(artifacts: Path, sys_model) -> tuple[EigenResult, dict]:
    meta_path = artifacts / "metadata.txt"
    if not meta_path.exists():
        raise ConfigError(f"missing metadata file: {meta_path}")
    meta = _read_metadata(meta_path)
    psi_path = artifacts / meta.get("result.psi_file", "psi.fld")
    if not psi_path.exists():
        raise ConfigError(f"missing barrier field file: {psi_path}")
    psi = read_field(psi_path)
    channels = []
    for name in meta.get("result.policy_files", "").split(","):
        name = name.strip()
        if not name:
            continue
        fpath = artifacts / name
        if not fpath.exists():
            raise ConfigError(f"missing policy field file: {fpath}")
        channels.append(read_field(fpath).values)
    if not channels:
        raise ConfigError(f"{meta_path}: no policy files recorded")
    policy = PolicyTable(psi.spec, np.stack(channels, axis=1),
                         sys_model.input_lower, sys_model.input_upper)
    result = EigenResult(
        gamma=float(meta["result.gamma"]),
        psi=psi,
        policy=policy,
        history=[],
        converged=bool(int(meta.get("result.converged", "0"))),
        horizon=float(meta.get("result.horizon", _DEFAULTS["propagation.horizon"])),
    )
    return result, meta


# --- subcommands -----------------------------------------------------------------


def cmd_synthesize(args) -> int:
    job = _load_job(args)
    sys_model = _build_system(job)
    cfg = _prop_config(job)
    tol = job.get("iteration.tol")
    max_iter = job.get("iteration.max_iter")
    algorithm = job.get("iteration.algorithm")

    init = None
    warm = job.get("iteration.warm_start")
    if warm:
        coarse = read_field(Path(warm))
        init = warm_start_field(coarse, sys_model)
    elif job.get("iteration.coarse_ladder"):
        coarse_counts = [max(3, (c + 1) // 2) for c in sys_model.grid.counts]
        coarse_sys = make_benchmark(job.get("system.id"), job.overrides(), coarse_counts)
        coarse_res = _run_iteration(coarse_sys, cfg, algorithm,
                                    initial_field(coarse_sys, job.get("iteration.init")),
                                    tol, max_iter)
        init = warm_start_field(coarse_res.psi, sys_model)
    if init is None:
        init = initial_field(sys_model, job.get("iteration.init"))

    result = _run_iteration(sys_model, cfg, algorithm, init, tol, max_iter)
    out = Path(args.out or "out")
    save_result(result, job, out)
    print(f"gamma = {result.gamma!r}  converged = {result.converged} "
          f"iterations = {result.iterations}  -> {out}")
    return 0 if result.converged else 2


def _run_iteration(sys_model, cfg, algorithm, init, tol, max_iter) -> EigenResult:
    if algorithm == "power_policy":
        return power_policy_iteration(sys_model, cfg, init_psi=init, tol=tol,
                                      max_iter=max_iter)
    if algorithm == "power_policy_two_step":
        return power_policy_iteration(sys_model, cfg, init_psi=init, tol=tol,
                                      max_iter=max_iter, accelerated=False)
    if algorithm == "power_fixed":
        return power_iteration(sys_model, PolicyTable.zero(sys_model), cfg,
                               init, tol=tol, max_iter=max_iter)
    raise ConfigError(f"config key 'iteration.algorithm': unknown value {algorithm!r}")


def _build_controller(job: JobConfig, sys_model, result: EigenResult):
    kind = job.get("simulation.controller")
    if kind == "fixed_policy":
        return FixedPolicyController(result.policy)
    if kind == "open_loop":
        u = job.vector("simulation.u_const")
        if u is None:
            raise ConfigError("open_loop controller needs 'simulation.u_const'")
        return OpenLoopController(np.asarray(u))
    if kind == "scbf_qp":
        spec = FilterSpec(sys_model, result, gamma=job.get("filter.gamma"),
                          weight=job.vector("filter.weight"))
        ref_kind = job.get("simulation.reference")
        if ref_kind == "constant":
            u_ref = job.vector("simulation.reference_u")
            if u_ref is None:
                raise ConfigError("constant reference needs 'simulation.reference_u'")
            reference = constant_reference(u_ref)
        elif ref_kind == "circle":
            reference = bicycle_circle_reference()
        elif ref_kind == "zero":
            reference = constant_reference(np.zeros(sys_model.n_u))
        else:
            raise ConfigError(
                f"config key 'simulation.reference': unknown value {ref_kind!r}"
            )
        return ScbfQpController(spec, reference)
    raise ConfigError(f"config key 'simulation.controller': unknown value {kind!r}")


def cmd_simulate(args) -> int:
    job = _load_job(args)
    sys_model = _build_system(job)
    artifacts = Path(args.artifacts)
    result, _ = load_result(artifacts, sys_model)
    if result.psi.spec != sys_model.grid:
        raise ConfigError("artifact grid does not match the configured grid")
    x0 = job.vector("simulation.x0")
    if x0 is None:
        raise ConfigError("missing required key 'simulation.x0'")
    controller = _build_controller(job, sys_model, result)
    sim = SimConfig(
        t_end=job.get("simulation.t_end"),
        trials=job.get("simulation.trials"),
        seed=job.get("simulation.seed"),
        controller=controller,
        dt=job.get("simulation.dt"),
    )
    bound = result
    if job.get("simulation.controller") == "scbf_qp":
        bound = controller.spec
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    traj = simulate(sys_model, sim, np.asarray(x0), trial=0)
    write_trajectory_csv(traj, out / "trajectory.csv")
    curve = estimate_safety_curve(sys_model, sim, np.asarray(x0), bound=bound,
                                  threads=job.get("threads"))
    write_safety_curve_csv(curve, out / "curve.csv")
    result_lines = [
        f"result.survival_end = {float(curve.survival_fraction[-1])!r}",
        "result.curve_file = curve.csv",
        "result.trajectory_file = trajectory.csv",
    ]
    _write_metadata(out / "sim_metadata.txt", job, result_lines)
    print(f"survival({sim.t_end}) = {float(curve.survival_fraction[-1])!r}  -> {out}")
    return 0


def cmd_filter(args) -> int:
    job = _load_job(args)
    sys_model = _build_system(job)
    result, _ = load_result(Path(args.artifacts), sys_model)
    spec = FilterSpec(sys_model, result, gamma=job.get("filter.gamma"),
                      weight=job.vector("filter.weight"))
    queries = Path(args.queries)
    if not queries.exists():
        raise ConfigError(f"query file not found: {queries}")
    lines = queries.read_text().splitlines()
    out_lines = [",".join([f"u{j + 1}" for j in range(sys_model.n_u)] + ["status"])]
    start = 1 if lines and lines[0].lstrip()[:1].isalpha() else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = [float(p) for p in line.split(",")]
        expected = 1 + sys_model.n_x + sys_model.n_u
        if len(parts) != expected:
            raise ConfigError(
                f"{queries}:{lineno}: expected {expected} columns (t, x, u_ref)"
            )
        x = np.array(parts[1:1 + sys_model.n_x])
        u_ref = np.array(parts[1 + sys_model.n_x:])
        u, status = filter_input(spec, x, u_ref)
        out_lines.append(",".join([repr(float(v)) for v in u] + [status.value]))
    Path(args.output).write_text("\n".join(out_lines) + "\n", encoding="ascii")
    print(f"answered {len(out_lines) - 1} filter queries -> {args.output}")
    return 0


def cmd_verify(args) -> int:
    job = _load_job(args)
    sys_model = _build_system(job)
    result, meta = load_result(Path(args.artifacts), sys_model)
    cfg = PropagationConfig(
        horizon=result.horizon,
        cfl_safety=job.get("propagation.cfl_safety"),
        candidate_points=job.get("propagation.candidate_points"),
    )
    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))

    psi = result.psi
    check("normalization", abs(sup_norm(psi) - 1.0) <= 1e-12,
          f"sup_norm = {sup_norm(psi)!r}")
    check("positivity", float(np.min(psi.values)) >= 0.0,
          f"min = {float(np.min(psi.values))!r}")
    killed = ~sys_model.interior_mask()
    check("boundary_zeros", not np.any(psi.values[killed] != 0.0),
          "barrier vanishes on killed nodes")
    in_box = np.all(result.policy.inputs >= sys_model.input_lower - 1e-12) and \
        np.all(result.policy.inputs <= sys_model.input_upper + 1e-12)
    check("policy_in_box", in_box, "policy inputs within the input box")
    res = eigen_residual(result, sys_model, cfg)
    rtol = job.get("verify.residual_tol")
    check("eigen_residual", res <= rtol, f"residual = {res!r} (tol {rtol!r})")
    double = PropagationConfig(horizon=2.0 * result.horizon,
                               cfl_safety=cfg.cfl_safety,
                               candidate_points=cfg.candidate_points)
    out2 = propagate(psi, sys_model, result.policy, double)
    gamma2 = -math.log(max(sup_norm(out2), 1e-300)) / double.horizon
    dgap = abs(gamma2 - result.gamma)
    check("horizon_invariance", dgap <= 0.02 * abs(result.gamma) + 1e-6,
          f"gamma(t) = {result.gamma!r}, gamma(2t) = {gamma2!r}")

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 3 if failed else 0


def cmd_export_plot(args) -> int:
    src = Path(args.artifacts)
    out = Path(args.out or src)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    curve_csv = src / "curve.csv"
    if curve_csv.exists():
        rows = curve_csv.read_text().splitlines()
        header = rows[0].split(",")
        dat_lines = ["# " + " ".join(header)]
        dat_lines += [" ".join(r.split(",")) for r in rows[1:]]
        (out / "curve.dat").write_text("\n".join(dat_lines) + "\n")
        has_bound = "bound" in header
        gp = [
            "set xlabel 't'",
            "set ylabel 'survival probability'",
            "set yrange [0:1.05]",
            "plot 'curve.dat' using 1:3 with lines title 'empirical', \\",
            "     'curve.dat' using 1:4:5 with filledcurves fs transparent solid 0.2 title '95% CI'"
            + (", \\\n     'curve.dat' using 1:6 with lines dashtype 2 title 'bound'" if has_bound else ""),
        ]
        (out / "curve.gp").write_text("\n".join(gp) + "\n")
        wrote += ["curve.dat", "curve.gp"]
    meta = src / "metadata.txt"
    if meta.exists():
        hist = []
        for key, value in _read_metadata(meta).items():
            if key.startswith("history."):
                it = int(key.split(".", 1)[1])
                resid, gamma = value.split()
                hist.append((it, float(resid), float(gamma)))
        if hist:
            hist.sort()
            (out / "convergence.dat").write_text(
                "\n".join(f"{it} {r!r} {g!r}" for it, r, g in hist) + "\n"
            )
            (out / "convergence.gp").write_text(
                "set logscale y\nset xlabel 'iteration'\n"
                "plot 'convergence.dat' using 1:2 with linespoints title 'residual', \\\n"
                "     'convergence.dat' using 1:3 with linespoints title 'gamma'\n"
            )
            wrote += ["convergence.dat", "convergence.gp"]
    if not wrote:
        raise ConfigError(f"nothing to export from {src}")
    print(f"wrote {', '.join(wrote)} -> {out}")
    return 0


# --- entry point -------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="job config file (key = value lines)")
    p.add_argument("--system", help="benchmark system id")
    p.add_argument("--grid", help="nodes per dimension, comma separated")
    p.add_argument("--horizon", type=float, help="operator horizon")
    p.add_argument("--tol", type=float, help="iteration convergence tolerance")
    p.add_argument("--seed", type=int, help="simulation seed")
    p.add_argument("--trials", type=int, help="simulation trial count")
    p.add_argument("--threads", type=int, help="worker threads (env SCBF_THREADS)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scbf",
        description="Barrier synthesis and validation for stochastic safety-critical control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="run power-policy iteration, write psi/policy/metadata")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo closed-loop survival estimation")
    _add_common(p)
    p.add_argument("--artifacts", required=True, help="directory with synthesize outputs")
    p.add_argument("--gamma", type=float, help="filter decay rate (scbf_qp controller)")

    p = sub.add_parser("filter", help="answer (t, x, u_ref) queries from a CSV")
    _add_common(p)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--queries", required=True, help="CSV of t, x1..xn, u1..um rows")
    p.add_argument("--output", required=True, help="CSV to write (u, status) rows")
    p.add_argument("--gamma", type=float, help="filter decay rate")

    p = sub.add_parser("verify", help="check the invariant suite on stored artifacts")
    _add_common(p)
    p.add_argument("--artifacts", required=True)

    p = sub.add_parser("export-plot", help="emit gnuplot data + scripts for stored outputs")
    _add_common(p)
    p.add_argument("--artifacts", required=True)

    return parser


_COMMANDS = {
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "verify": cmd_verify,
    "export-plot": cmd_export_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError, ScbfError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
