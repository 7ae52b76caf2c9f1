"""Config-driven experiment driver.

Usage::

    helios <command> <config> [--out DIR] [--threads K] [--seed S]

Commands: ``forward`` (one-path field solve), ``ensemble`` (sample
statistics of the final-time modes), ``reconstruct`` (full inverse
pipeline), ``probe-decay`` (kernel magnitudes and log-log slopes),
``sweep-h`` (repeat reconstruction over a list of Hurst indices with a
shared seed).  Exit status 0 on success, 2 on a configuration violation,
3 on a numerical failure.

Configs are flat ``key = value`` text files with ``#`` comments.  Function
values use a small builtin registry:

    const(c)            constant c
    power(p)            t^p
    sin(k)              sin(k r)
    hat(r1,r2,r3[,amp]) piecewise-linear tent, 0 outside [r1, r3], peak amp at r2
    box(r1,r2)          indicator of (r1, r2]
    table(file)         piecewise-linear interpolation of a two-column CSV

All emitted CSV files carry a header row and print reals with 17
significant digits, enough to round-trip float64 exactly.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import ensemble as ens
from . import fbm, forward, inverse, spectral
from .errors import ConfigError, DataError, DomainError, HeliosError, NumericError

__all__ = ["ExperimentConfig", "parse_config", "run", "main"]

_FUNC_RE = re.compile(r"^([a-z_]+)\(([^()]*)\)$")

_KNOWN_KEYS = {
    "R0", "T", "M", "N", "N1", "P", "H", "epsilon", "seed", "solver",
    "a", "f", "g", "h", "a0", "a1", "sweep_h",
    "quad_intervals", "cells", "mc_paths", "mc_steps",
}

_INT_KEYS = {"M", "N", "N1", "P", "seed", "quad_intervals", "cells", "mc_paths", "mc_steps"}
_FLOAT_KEYS = {"R0", "T", "H", "epsilon", "a0", "a1"}
_FUNC_KEYS = {"a", "f", "g", "h"}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def make_function(spec: str, base_dir: Path) -> Callable:
    """Compile a registry spec like ``sin(3)`` into a vectorized callable."""
    spec = spec.strip()
    match = _FUNC_RE.match(spec)
    if not match:
        raise ConfigError(f"unrecognized function spec {spec!r}")
    name, argstr = match.group(1), match.group(2)
    args = [s.strip() for s in argstr.split(",")] if argstr.strip() else []

    def floats(n_lo, n_hi):
        if not n_lo <= len(args) <= n_hi:
            raise ConfigError(f"{name}() takes {n_lo}..{n_hi} arguments, got {len(args)}")
        try:
            return [float(s) for s in args]
        except ValueError as exc:
            raise ConfigError(f"non-numeric argument in {spec!r}") from exc

    if name == "const":
        (c,) = floats(1, 1)
        return lambda x: np.full(np.shape(x), c, dtype=float)
    if name == "power":
        (p,) = floats(1, 1)
        return lambda x: np.asarray(x, dtype=float) ** p
    if name == "sin":
        (k,) = floats(1, 1)
        return lambda x: np.sin(k * np.asarray(x, dtype=float))
    if name == "hat":
        vals = floats(3, 4)
        r1, r2, r3 = vals[:3]
        amp = vals[3] if len(vals) == 4 else 1.0
        if not r1 < r2 < r3:
            raise ConfigError(f"hat needs r1 < r2 < r3, got {spec!r}")
        return lambda x: np.interp(np.asarray(x, dtype=float),
                                   [r1, r2, r3], [0.0, amp, 0.0], left=0.0, right=0.0)
    if name == "box":
        r1, r2 = floats(2, 2)
        if not r1 < r2:
            raise ConfigError(f"box needs r1 < r2, got {spec!r}")
        return lambda x: np.where((np.asarray(x, dtype=float) > r1)
                                  & (np.asarray(x, dtype=float) <= r2), 1.0, 0.0)
    if name == "table":
        if len(args) != 1:
            raise ConfigError("table() takes exactly one file argument")
        path = base_dir / args[0]
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"cannot read table file {path}") from exc
        if data.shape[1] != 2:
            raise ConfigError(f"table file {path} must have two columns")
        xs, ys = data[:, 0], data[:, 1]
        if np.any(np.diff(xs) <= 0):
            raise ConfigError(f"table file {path} abscissae must increase")
        return lambda x: np.interp(np.asarray(x, dtype=float), xs, ys)
    raise ConfigError(f"unknown function {name!r} in spec {spec!r}")


@dataclass
class ExperimentConfig:
    """Parsed experiment parameters; defaults follow the reference setup."""

    R0: float = np.pi
    T: float = 1.0
    M: int = 2048
    N: int = 100
    N1: int = 30
    P: int = 1000
    H: float = 0.5
    epsilon: float = 0.001
    seed: int = 0
    solver: str = "fd"
    a_spec: str = "power(2)"
    f_spec: str = "sin(3)"
    g_spec: str = "sin(2)"
    h_spec: str = "const(1)"
    a_bounds: Optional[tuple] = None
    sweep_h: tuple = (0.1, 0.5, 0.9)
    quad_intervals: int = 2048
    cells: int = 4096
    mc_paths: int = 20000
    mc_steps: int = 2048
    a: Callable = dc_field(default=None, repr=False)
    f: Callable = dc_field(default=None, repr=False)
    g: Callable = dc_field(default=None, repr=False)
    h: Callable = dc_field(default=None, repr=False)

    def validate(self) -> None:
        if self.N % 2 != 0:
            raise ConfigError(f"N must be even for composite Simpson, got N={self.N}")
        if not 0.0 < self.H < 1.0:
            raise ConfigError(f"H must lie strictly in (0, 1), got H={self.H}")
        if self.M < 1 or self.N < 2 or self.N1 < 1:
            raise ConfigError("M >= 1, N >= 2 and N1 >= 1 are required")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.solver not in ("fd", "mild"):
            raise ConfigError(f"solver must be fd or mild, got {self.solver!r}")
        if self.N1 > self.N // 3:
            print(f"warning: N1={self.N1} exceeds N/3={self.N // 3}; "
                  "quadrature accuracy of high modes degrades", file=sys.stderr)

    def problem(self) -> forward.DiffusionProblem:
        return forward.DiffusionProblem(
            a=self.a, f=self.f, g=self.g, h=self.h,
            R0=self.R0, T=self.T, hurst=self.H, a_bounds=self.a_bounds,
        )

    def grids(self):
        return spectral.RadialGrid(self.R0, self.N), fbm.TimeGrid(self.T, self.M)

    def kernel_config(self, mc_seed: int) -> inverse.KernelConfig:
        return inverse.KernelConfig(
            quad_intervals=self.quad_intervals, cells=self.cells,
            mc_paths=self.mc_paths, mc_steps=self.mc_steps, mc_seed=mc_seed,
        )


def parse_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Read a flat key = value config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = ExperimentConfig()
    bounds = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                if key in ("a0", "a1"):
                    bounds[key] = float(value)
                else:
                    setattr(cfg, key, float(value))
            elif key in _FUNC_KEYS:
                setattr(cfg, key + "_spec", value)
            elif key == "sweep_h":
                cfg.sweep_h = tuple(float(s) for s in value.split(","))
            elif key == "solver":
                cfg.solver = value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    if bounds:
        if set(bounds) != {"a0", "a1"}:
            raise ConfigError("declare both a0 and a1 or neither")
        cfg.a_bounds = (bounds["a0"], bounds["a1"])
    if seed_override is not None:
        cfg.seed = seed_override
    base = path.parent
    cfg.a = make_function(cfg.a_spec, base)
    cfg.f = make_function(cfg.f_spec, base)
    cfg.g = make_function(cfg.g_spec, base)
    cfg.h = make_function(cfg.h_spec, base)
    cfg.validate()
    return cfg


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
                              for v in row) + "\n")


def _sub_seeds(seed: int):
    """Derive (paths, noise, kernel-MC) seeds from the master seed."""
    state = np.random.SeedSequence(seed).generate_state(3, np.uint64)
    return tuple(int(s) for s in state)


def _run_reconstruction(cfg: ExperimentConfig, hurst: float, threads: int):
    """Shared pipeline behind the reconstruct and sweep-h commands."""
    rgrid, tgrid = cfg.grids()
    problem = forward.DiffusionProblem(
        a=cfg.a, f=cfg.f, g=cfg.g, h=cfg.h,
        R0=cfg.R0, T=cfg.T, hurst=hurst, a_bounds=cfg.a_bounds,
    )
    seed_paths, seed_noise, seed_mc = _sub_seeds(cfg.seed)
    noise = ens.NoiseSpec(epsilon=cfg.epsilon, seed=seed_noise)
    stats = ens.run_ensemble(problem, rgrid, tgrid, cfg.P, cfg.N1,
                             solver=cfg.solver, noise=noise,
                             seed=seed_paths, threads=threads)
    table = inverse.build_kernel_table(cfg.N1, hurst, cfg.a, cfg.h, cfg.T, cfg.R0,
                                       cfg.kernel_config(seed_mc))
    truth_f = cfg.f(rgrid.nodes)
    truth_g2 = np.asarray(cfg.g(rgrid.nodes), dtype=float) ** 2
    recon = inverse.reconstruct(stats, table, rgrid,
                                truth_f=truth_f, truth_g_squared=truth_g2)
    return rgrid, stats, table, recon, truth_f, truth_g2


def _cmd_forward(cfg: ExperimentConfig, out: Path, threads: int) -> None:
    rgrid, tgrid = cfg.grids()
    seed_paths, _, _ = _sub_seeds(cfg.seed)
    path = fbm.sample_paths(tgrid, cfg.H, 1, seed_paths).paths[0]
    fieldh = forward.solve_fd(cfg.problem(), rgrid, tgrid, path)
    rows = ((t, r, fieldh.values[i, j])
            for i, t in enumerate(tgrid.nodes)
            for j, r in enumerate(rgrid.nodes))
    _write_csv(out / "field.csv", ["t", "r", "u"], rows)


def _cmd_ensemble(cfg: ExperimentConfig, out: Path, threads: int) -> None:
    if cfg.P < 2:
        raise ConfigError(f"ensemble statistics need P >= 2, got P={cfg.P}")
    rgrid, tgrid = cfg.grids()
    seed_paths, seed_noise, _ = _sub_seeds(cfg.seed)
    noise = ens.NoiseSpec(epsilon=cfg.epsilon, seed=seed_noise)
    stats = ens.run_ensemble(cfg.problem(), rgrid, tgrid, cfg.P, cfg.N1,
                             solver=cfg.solver, noise=noise,
                             seed=seed_paths, threads=threads)
    _write_csv(out / "stats.csv", ["n", "mean", "var"],
               ((n + 1, stats.mean[n], stats.cov[n, n]) for n in range(cfg.N1)))
    _write_csv(out / "cov.csv", ["m", "n", "value"],
               ((m + 1, n + 1, stats.cov[m, n])
                for m in range(cfg.N1) for n in range(cfg.N1)))


def _cmd_reconstruct(cfg: ExperimentConfig, out: Path, threads: int) -> None:
    if cfg.P < 2:
        raise ConfigError(f"reconstruction needs P >= 2, got P={cfg.P}")
    rgrid, stats, table, recon, truth_f, truth_g2 = _run_reconstruction(cfg, cfg.H, threads)
    _write_csv(out / "f_recon.csv", ["r", "value", "truth"],
               zip(rgrid.nodes, recon.f_values, truth_f))
    _write_csv(out / "g2_recon.csv", ["r", "value", "truth"],
               zip(rgrid.nodes, recon.g_squared_values, truth_g2))
    summary = [
        ("f_rel_error", recon.f_error),
        ("g2_rel_error", recon.g_squared_error),
        ("H", cfg.H), ("epsilon", cfg.epsilon), ("P", cfg.P),
        ("N1", cfg.N1), ("M", cfg.M), ("N", cfg.N), ("seed", cfg.seed),
        ("skipped_kernel_entries", len(recon.skipped)),
        ("mc_kernel_warnings", len(table.warnings)),
    ]
    _write_csv(out / "summary.csv", ["quantity", "value"], summary)


def _cmd_probe_decay(cfg: ExperimentConfig, out: Path, threads: int) -> None:
    _, _, seed_mc = _sub_seeds(cfg.seed)
    table = inverse.build_kernel_table(cfg.N1, cfg.H, cfg.a, cfg.h, cfg.T, cfg.R0,
                                       cfg.kernel_config(seed_mc))
    lams = [spectral.eigenvalue(n, cfg.R0) for n in range(1, cfg.N1 + 1)]
    _write_csv(out / "decay.csv", ["n", "lambda", "source", "noise"],
               ((n + 1, lams[n], table.source[n], table.noise[n, n])
                for n in range(cfg.N1)))
    lo = min(5, cfg.N1 - 1)
    probe = inverse.decay_probe(lo, cfg.N1, cfg.H, cfg.a, cfg.h, cfg.T, cfg.R0,
                                cfg.kernel_config(seed_mc))
    _write_csv(out / "summary.csv", ["quantity", "value"],
               [(f"slope_source_n{lo}_to_n{cfg.N1}", probe.slope_source),
                (f"slope_noise_n{lo}_to_n{cfg.N1}", probe.slope_noise)])


def _cmd_sweep_h(cfg: ExperimentConfig, out: Path, threads: int) -> None:
    if cfg.P < 2:
        raise ConfigError(f"sweep-h needs P >= 2, got P={cfg.P}")
    rows = []
    for hurst in cfg.sweep_h:
        if not 0.0 < hurst < 1.0:
            raise ConfigError(f"sweep_h entries must lie in (0, 1), got {hurst}")
        _, _, _, recon, _, _ = _run_reconstruction(cfg, hurst, threads)
        rows.append((hurst, recon.f_error, recon.g_squared_error))
    _write_csv(out / "sweep.csv", ["H", "f_error", "g2_error"], rows)


_COMMANDS = {
    "forward": _cmd_forward,
    "ensemble": _cmd_ensemble,
    "reconstruct": _cmd_reconstruct,
    "probe-decay": _cmd_probe_decay,
    "sweep-h": _cmd_sweep_h,
}


def run(command: str, config_path, out_dir=".", threads: Optional[int] = None,
        seed: Optional[int] = None) -> None:
    """Library entry point behind ``main``; raises instead of exiting."""
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {sorted(_COMMANDS)}")
    cfg = parse_config(config_path, seed_override=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if threads is None:
        env = os.environ.get("HELIOS_THREADS", "")
        threads = int(env) if env else (os.cpu_count() or 1)
    _COMMANDS[command](cfg, out, max(1, threads))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="helios",
        description="production-diffusion experiment driver (forward solves, "
                    "ensembles, source reconstruction)")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("config", help="path to a key = value config file")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (default: HELIOS_THREADS or machine parallelism)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)
    try:
        run(args.command, args.config, out_dir=args.out,
            threads=args.threads, seed=args.seed)
    except (ConfigError, DomainError, DataError) as exc:
        print(f"helios: config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, HeliosError) as exc:
        print(f"helios: numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
