"""Command-line front end.

Subcommands
-----------
simulate        run one trajectory, write ``snapshots.csv`` (time,x,u,v rows)
convergence     run a Monte Carlo convergence experiment, write report files
validate        run the library invariant suite, print a pass/fail table
predict-rates   print the theoretical convergence exponents for a parameter set

Configuration files are plain text with ``dotted.key = value`` lines;
unknown keys are rejected (a typo must never silently change an experiment).
Exit codes: 0 success, 1 validation failure, 2 usage/config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass

from . import analysis, fem, harness, noise, scheme, validation
from .errors import ConfigError, NumericError

__all__ = ["parse_config", "CliConfig", "main", "console_entry"]

_ENUM_KEYS = {
    "noise.model": ("white", "kernel", "none"),
    "noise.kernel.name": ("scaled_exponential",),
    "drift.f": ("cos", "sin", "zero", "linear"),
    "scheme.method": ("crank_nicolson", "backward_euler"),
    "initial.u0": ("hat", "zero", "eigenmode"),
    "initial.v0": ("indicator", "zero"),
    "coupling.rule": ("dt=h", "dt=h^2"),
    "reference.kind": ("fem", "modal", "exact"),
}
_INT_KEYS = ("mesh.n_elements", "mc.samples", "mc.seed", "mc.workers")
_FLOAT_KEYS = (
    "time.dt",
    "time.T",
    "noise.kernel.rate",
    "noise.kernel.scale",
    "drift.linear_coeff",
    "reference.h",
    "reference.dt",
    "negnorm.nu",
    "params.beta",
    "params.delta",
    "params.theta",
    "params.eta",
    "params.nu",
    "params.mu",
)
_STR_KEYS = ("output.dir", "name")
_ALL_KEYS = (
    set(_ENUM_KEYS) | set(_INT_KEYS) | set(_FLOAT_KEYS) | set(_STR_KEYS) | {"levels"}
)


@dataclass
class CliConfig:
    """Validated key-value configuration tree."""

    values: dict

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]


def _parse_levels(raw: str, lineno: int):
    levels = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) != 2:
            raise ConfigError(f"line {lineno}: level {part!r} is not an 'h,dt' pair")
        try:
            levels.append((float(pieces[0]), float(pieces[1])))
        except ValueError:
            raise ConfigError(f"line {lineno}: level {part!r} has non-numeric entries") from None
    if not levels:
        raise ConfigError(f"line {lineno}: empty levels list")
    return tuple(levels)


def parse_config(text: str) -> CliConfig:
    """Parse ``dotted.key = value`` lines; strict about unknown keys and types."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key == "levels":
            values[key] = _parse_levels(value, lineno)
        elif key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: key {key!r} expects an integer") from None
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(value)  # accepts 'inf' for params.eta
            except ValueError:
                raise ConfigError(f"line {lineno}: key {key!r} expects a number") from None
        elif key in _ENUM_KEYS:
            if value not in _ENUM_KEYS[key]:
                raise ConfigError(
                    f"line {lineno}: key {key!r} must be one of {_ENUM_KEYS[key]}, got {value!r}"
                )
            values[key] = value
        else:
            values[key] = value
    return CliConfig(values)


def _load_config(path) -> CliConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _noise_spec(cfg: CliConfig):
    model = cfg.get("noise.model", "white")
    if model == "none":
        return None
    if model == "white":
        return noise.white_noise()
    return noise.exponential_kernel(
        rate=cfg.get("noise.kernel.rate", 25.0),
        scale=cfg.get("noise.kernel.scale", 1.0 / 16.0),
    )


def _drift_spec(cfg: CliConfig) -> harness.DriftSpec:
    return harness.DriftSpec(cfg.get("drift.f", "zero"), cfg.get("drift.linear_coeff", 1.0))


def _params(cfg: CliConfig, rho: int):
    names = ("beta", "delta", "theta", "eta", "nu", "mu")
    present = [f"params.{n}" in cfg.values for n in names]
    if not any(present):
        return None
    if not all(present):
        missing = [f"params.{n}" for n, p in zip(names, present) if not p]
        raise ConfigError(f"incomplete regularity parameters, missing {missing}")
    try:
        return analysis.RegularityParams(
            *(cfg.values[f"params.{n}"] for n in names), kappa=2, rho=rho
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _experiment_from_config(cfg: CliConfig, args) -> harness.ExperimentConfig:
    levels = cfg.require("levels")
    h_ref = cfg.require("reference.h")
    dt_ref = cfg.require("reference.dt")
    rule = cfg.get("coupling.rule")
    if rule is None:
        if all(abs(dt - h) < 1e-12 for h, dt in levels):
            rule = "dt=h"
        elif all(abs(dt - h * h) < 1e-12 for h, dt in levels):
            rule = "dt=h^2"
        else:
            raise ConfigError("levels follow neither dt=h nor dt=h^2; set coupling.rule")
    method = cfg.get("scheme.method", "crank_nicolson")
    workers = _resolve_workers(args, cfg)
    mc = harness.MonteCarloSpec(
        n_samples=cfg.require("mc.samples"),
        master_seed=args.seed if args.seed is not None else cfg.get("mc.seed", 0),
        worker_count=workers,
    )
    return harness.ExperimentConfig(
        name=cfg.get("name", "custom"),
        levels=levels,
        reference=(h_ref, dt_ref),
        coupling_rule=rule,
        mc=mc,
        noise=_noise_spec(cfg),
        drift=_drift_spec(cfg),
        method=method,
        initial=harness.InitialDataSpec(
            cfg.get("initial.u0", "hat"), cfg.get("initial.v0", "indicator")
        ),
        params=_params(cfg, rho=scheme.rational_method(method).order),
        negnorm_nu=cfg.get("negnorm.nu"),
        T=cfg.get("time.T", 1.0),
        reference_kind=cfg.get("reference.kind", "fem"),
    )


def _resolve_workers(args, cfg: CliConfig | None) -> int:
    if args.workers is not None:
        return args.workers
    if cfg is not None and cfg.get("mc.workers") is not None:
        return cfg.get("mc.workers")
    env = os.environ.get("STOCHWAVE_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"STOCHWAVE_WORKERS={env!r} is not an integer") from None
    return 1


def _cmd_simulate(args) -> int:
    if args.config is None:
        raise ConfigError("simulate requires --config")
    cfg = _load_config(args.config)
    n = cfg.require("mesh.n_elements")
    dt = cfg.require("time.dt")
    T = cfg.require("time.T")
    mesh = fem.build_uniform_mesh(n)
    ops = fem.assemble_operators(mesh)
    method = scheme.rational_method(cfg.get("scheme.method", "crank_nicolson"))
    stepper = scheme.build_stepper(method, mesh, ops, dt)
    drift = _drift_spec(cfg).realize()
    spec = _noise_spec(cfg)
    factor = noise.build_noise_factor(mesh, ops, spec) if spec is not None else None
    seed = args.seed if args.seed is not None else cfg.get("mc.seed", 0)
    rng = noise.derive_stream(noise.StreamSpec(seed)) if factor is not None else None
    initial = harness.InitialDataSpec(
        cfg.get("initial.u0", "hat"), cfg.get("initial.v0", "indicator")
    ).realize(mesh)

    if args.snapshot_times:
        times = [float(t) for t in args.snapshot_times.split(",")]
    else:
        times = [T]
    records = []

    def hook(t, u_full, v_full):
        records.append((t, u_full.copy(), v_full.copy()))

    scheme.run_path(
        stepper, T, initial, drift, factor, rng,
        snapshot_times=times, snapshot_hook=hook,
    )
    outdir = args.out or cfg.get("output.dir", ".")
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "snapshots.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("time,x,u,v\n")
        for t, u_full, v_full in records:
            for x, u, v in zip(mesh.nodes, u_full, v_full):
                fh.write(f"{float(t)!r},{float(x)!r},{float(u)!r},{float(v)!r}\n")
    print(f"wrote {path} ({len(records)} snapshot(s), {mesh.n_elements + 1} nodes each)")
    return 0


def _cmd_convergence(args) -> int:
    if (args.builtin is None) == (args.config is None):
        raise ConfigError("convergence requires exactly one of --builtin or --config")
    if args.out is None:
        raise ConfigError("convergence requires --out DIRECTORY")
    if args.builtin is not None:
        try:
            config = harness.builtin_experiment(args.builtin)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.samples is not None:
            overrides["n_samples"] = args.samples
        workers = _resolve_workers(args, None)
        mc = harness.MonteCarloSpec(
            n_samples=overrides.get("n_samples", config.mc.n_samples),
            master_seed=overrides.get("master_seed", config.mc.master_seed),
            worker_count=workers,
        )
        config = dataclasses.replace(config, mc=mc)
    else:
        config = _experiment_from_config(_load_config(args.config), args)
        if args.samples is not None:
            config = dataclasses.replace(
                config, mc=dataclasses.replace(config.mc, n_samples=args.samples)
            )
    report = harness.run_convergence_experiment(config)
    paths = harness.emit_report(report, args.out)
    for quantity, fit in report.fits.items():
        if fit is None:
            continue
        predicted = report.predicted_slopes.get(quantity)
        pred = f" (predicted {predicted:.4f})" if predicted is not None else ""
        print(f"{quantity}: fitted slope {fit.slope:.4f}{pred} over {fit.points_used} points")
    print("report files:", ", ".join(paths))
    return 0


def _cmd_validate(_args) -> int:
    results = validation.run_validation_suite()
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{r.name:<{width}}  {status}  {r.detail}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


def _cmd_predict_rates(args) -> int:
    if (args.builtin is None) == (args.config is None):
        raise ConfigError("predict-rates requires exactly one of --builtin or --config")
    if args.builtin is not None:
        config = harness.builtin_experiment(args.builtin)
        if config.params is None:
            raise ConfigError(f"builtin {args.builtin!r} carries no regularity parameters")
        params = config.params
    else:
        cfg = _load_config(args.config)
        method = cfg.get("scheme.method", "crank_nicolson")
        params = _params(cfg, rho=scheme.rational_method(method).order)
        if params is None:
            raise ConfigError("predict-rates requires the params.* keys")
    pred = analysis.predict_rates(params)
    print(f"regularity index r = {pred.r:.6g}")
    print(f"strong:   h-exponent {pred.strong_h_exp:.6g}, dt-exponent {pred.strong_dt_exp:.6g}")
    print(
        f"negnorm:  r' = {pred.r_prime_strong:.6g}, h-exponent {pred.negnorm_h_exp:.6g}, "
        f"dt-exponent {pred.negnorm_dt_exp:.6g}"
    )
    print(
        f"weak:     r' = {pred.r_prime_weak:.6g}, h-exponent {pred.weak_h_exp:.6g}, "
        f"dt-exponent {pred.weak_dt_exp:.6g}"
    )
    if pred.h_penalty_exp != 0.0:
        print(f"weak dt term carries an h^({pred.h_penalty_exp:.6g}) penalty factor")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochwave",
        description="Stochastic wave equation solver and convergence experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", _cmd_simulate),
        ("convergence", _cmd_convergence),
        ("validate", _cmd_validate),
        ("predict-rates", _cmd_predict_rates),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a dotted-key configuration file")
        p.add_argument("--builtin", help="name of a built-in experiment configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="override the worker count")
        p.add_argument("--samples", type=int, help="override the Monte Carlo sample count")
        p.add_argument(
            "--snapshot-times",
            help="comma-separated list of times at which simulate records the fields",
        )
        p.set_defaults(handler=fn)
    return parser


def main(argv) -> int:
    """Run the CLI; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # invalid values reaching the library layer
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 1


def console_entry():
    sys.exit(main(sys.argv[1:]))
