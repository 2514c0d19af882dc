"""Command-line front end.

    resonator trial   [--config FILE] [--seed N] [--key value ...]
    resonator table1  [--trials N] [--out DIR]
    resonator sweep KIND [--out DIR] [--jobs J] [--key value ...]

Data goes to stdout, logs to stderr. Exit status: 0 success, 1 bad
configuration or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import tomli

from resonator import __version__
from resonator.activation import ActivationSpec, classify_monotonic, table_specs
from resonator.forecasting import TrialConfig, aggregate_trials, run_trial
from resonator.lorenz import LorenzParams
from resonator.metrics import EntropyConfig
from resonator.reservoir import ReservoirConfig
from resonator.training import RidgeConfig
from resonator.sweep import (
    GridSpec,
    bias_axis,
    bound_table_name,
    default_jobs,
    linear_beta_axis,
    node_axis,
    run_bound_sweep,
    run_cells,
    run_fh_histogram,
    run_grid,
    run_ise_capture,
    run_lambda_sweep,
)

log = logging.getLogger("resonator")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

SWEEP_KINDS = ("swish-grid", "bias-grid", "lambda", "bound", "fh-hist", "ise")

ALIASES = {"n": "n_nodes", "lambda": "lam", "seed": "master_seed", "b": "bias", "bins": "n_bins"}

_ACT = {"kind", "beta", "bias", "bound", "leak"}
_RES = {"n_nodes", "mean_degree", "spectral_radius", "input_scale", "weights", "input_layer"}
_RIDGE = {"lam", "washout"}
_LORENZ = {"sigma", "rho", "beta_l"}
_TRIAL = {
    "train_samples", "predict_samples", "tau", "threshold", "master_seed", "units",
    "transient_steps", "hist_bins", "compute_curvature", "compute_ase", "emit_ise",
}
_ENTROPY = {"sigma_factor", "per_step"}
# Run-level keys that are not part of a TrialConfig.
_RUN = {"trials", "jobs", "out", "n_bins", "lambdas", "bounds", "config"}

# Per-sweep defaults, applied under the config file and flags.
PRESETS: Dict[str, dict] = {
    "swish-grid": {"kind": "swish", "trials": 50},
    "bias-grid": {"kind": "shifted_tanh", "trials": 50},
    "lambda": {
        "kind": "shifted_tanh", "bias": 1.7, "n_nodes": 1000, "trials": 50,
        "lambdas": [0.0] + [10.0 ** k for k in range(-8, 1)],
    },
    "bound": {"kind": "swish", "trials": 10, "bounds": [0.0, 1.0, 3.0, 5.0, 7.0, 10.0]},
    "fh-hist": {"kind": "swish", "beta": 0.45, "n_nodes": 800, "trials": 150, "n_bins": 20},
    "ise": {"kind": "swish", "beta": 0.2, "n_nodes": 312},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: int
    version: str = __version__
    outputs: List[str] = field(default_factory=list)
    duration_s: float = 0.0

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path


def _coerce(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in text:
        return [_coerce(t) for t in text.split(",") if t.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_overrides(tokens: List[str]) -> dict:
    """Turn ``--key value`` / ``--key=value`` tokens into a dict."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            value = tokens[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        key = key.replace("-", "_")
        out[ALIASES.get(key, key)] = _coerce(value)
    return out


def load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file {p}: {exc}") from exc
    flat = {}
    for k, v in raw.items():
        if isinstance(v, dict):
            raise ConfigError(f"config file {p} must be flat; found table [{k}]")
        flat[ALIASES.get(k, k)] = v
    return flat


def resolve_settings(preset: dict, file_cfg: dict, flags: dict) -> dict:
    settings = dict(preset)
    settings.update(file_cfg)
    if "master_seed" not in settings and os.environ.get("RESONATOR_SEED"):
        try:
            settings["master_seed"] = int(os.environ["RESONATOR_SEED"])
        except ValueError as exc:
            raise ConfigError("RESONATOR_SEED must be an integer") from exc
    settings.update(flags)
    settings.setdefault("master_seed", 0)
    known = _ACT | _RES | _RIDGE | _LORENZ | _TRIAL | _ENTROPY | _RUN | {"rng_stream"}
    unknown = sorted(set(settings) - known)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    return settings


def trial_config_from(settings: dict, skip=()) -> TrialConfig:
    """Build a TrialConfig from flat settings; keys in ``skip`` (sweep axes) are ignored."""

    def pick(keys):
        return {k: settings[k] for k in keys if k in settings and k not in skip}

    try:
        act = ActivationSpec.from_config(pick(_ACT | {"rng_stream"}))
        res_kw = pick(_RES)
        if "n_nodes" in res_kw:
            res_kw["n_nodes"] = int(res_kw["n_nodes"])
        reservoir = ReservoirConfig(**res_kw)
        ridge_kw = pick(_RIDGE)
        ridge = RidgeConfig(**{k: (int(v) if k == "washout" else float(v)) for k, v in ridge_kw.items()})
        lorenz = LorenzParams(**{k: float(v) for k, v in pick(_LORENZ).items()})
        entropy = EntropyConfig(**pick(_ENTROPY))
        trial_kw = pick(_TRIAL)
        for k in ("master_seed", "transient_steps", "hist_bins"):
            if k in trial_kw:
                trial_kw[k] = int(trial_kw[k])
        return TrialConfig(reservoir=reservoir, activation=act, ridge=ridge, lorenz=lorenz, entropy=entropy, **trial_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _out_dir(settings: dict, default: str) -> Path:
    d = Path(str(settings.get("out", default)))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _jobs(settings: dict) -> int:
    return int(settings.get("jobs", default_jobs()))


def _manifest(command: str, settings: dict, outputs: List[Path], start: float, out: Path) -> None:
    cfg = {k: v for k, v in settings.items() if k not in ("out", "jobs")}
    RunManifest(command, cfg, int(settings["master_seed"]), outputs=[p.name for p in outputs],
                duration_s=round(time.monotonic() - start, 3)).write(out)


def cmd_trial(settings: dict) -> int:
    start = time.monotonic()
    cfg = trial_config_from(settings)
    res = run_trial(cfg)
    sys.stdout.write(res.to_json(include_ise=cfg.emit_ise) + "\n")
    if "out" in settings:
        out = _out_dir(settings, "trial_out")
        path = out / "trial.json"
        path.write_text(res.to_json(include_ise=cfg.emit_ise) + "\n")
        _manifest("trial", settings, [path], start, out)
    return EXIT_OK if res.ok else EXIT_NUMERIC


def cmd_table1(settings: dict) -> int:
    start = time.monotonic()
    trials = int(settings.get("trials", 50))
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    base = trial_config_from(settings, skip=_ACT)
    bound = settings.get("bound", 5.0)
    bound = None if str(bound).lower() in ("unbounded", "none", "inf") else float(bound)
    specs = table_specs(bound)
    cells = [replace(base, activation=s, seed_path=tuple(base.seed_path) + (k, 0)) for k, s in enumerate(specs)]
    per_cell = run_cells(cells, trials, _jobs(settings))
    lines = ["function,mean_fh,stderr,mean_k,mean_ase,monotonic"]
    n_ok = 0
    for spec, results in zip(specs, per_cell):
        stats = aggregate_trials(results)
        mono = str(classify_monotonic(spec)).lower()
        if stats.n_trials == 0:
            lines.append(f"{spec.label},ERROR,,,,{mono}")
            continue
        n_ok += 1
        vals = [stats.mean_fh, stats.stderr_fh, stats.mean_k, stats.mean_ase]
        lines.append(f"{spec.label}," + ",".join("" if v is None else f"{v:.9g}" for v in vals) + f",{mono}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = _out_dir(settings, "table1_out")
    path = out / "table1.csv"
    path.write_text(text)
    _manifest("table1", settings, [path], start, out)
    return EXIT_OK if n_ok else EXIT_NUMERIC


def cmd_sweep(kind: str, settings: dict) -> int:
    start = time.monotonic()
    jobs = _jobs(settings)
    trials = int(settings.get("trials", 10))
    out = _out_dir(settings, f"sweep_{kind.replace('-', '_')}")
    outputs: List[Path] = []
    if kind in ("swish-grid", "bias-grid"):
        p1 = "beta" if kind == "swish-grid" else "bias"
        default1 = linear_beta_axis() if kind == "swish-grid" else bias_axis()
        ax1 = [float(v) for v in _as_list(settings.get(p1, default1))]
        ax2 = [int(v) for v in _as_list(settings.get("n_nodes", node_axis()))]
        base = trial_config_from(settings, skip={p1, "n_nodes"})
        table = run_grid(GridSpec((p1, ax1), ("n_nodes", ax2), trials, base), jobs, progress=True)
        path = out / f"sweep_{kind.replace('-', '_')}.csv"
        sys.stdout.write(table.to_csv(path))
        outputs.append(path)
        ok = bool(table.rows)
    elif kind == "lambda":
        lambdas = [float(v) for v in _as_list(settings.get("lambdas"))]
        base = trial_config_from(settings, skip={"lam"})
        table = run_lambda_sweep(base, lambdas, trials, jobs)
        path = out / "sweep_lambda.csv"
        sys.stdout.write(table.to_csv(path))
        outputs.append(path)
        ok = bool(table.rows)
    elif kind == "bound":
        bounds = [float(v) for v in _as_list(settings.get("bounds"))]
        betas = [float(v) for v in _as_list(settings.get("beta", linear_beta_axis(10)))]
        ns = [int(v) for v in _as_list(settings.get("n_nodes", node_axis(10)))]
        base = trial_config_from(settings, skip={"beta", "n_nodes", "bound"})
        tables = run_bound_sweep(base, bounds, betas, ns, trials, jobs)
        ok = False
        for b, table in tables.items():
            path = out / bound_table_name(b)
            table.to_csv(path)
            outputs.append(path)
            ok = ok or bool(table.rows)
            sys.stdout.write(f"# bound={b:g}\n" + table.to_csv())
    elif kind == "fh-hist":
        base = trial_config_from(settings)
        hist = run_fh_histogram(base, trials, int(settings.get("n_bins", 20)), jobs)
        path = out / "fh_histogram.csv"
        hist.to_csv(path)
        stats_path = out / "fh_stats.json"
        stats_path.write_text(json.dumps(hist.stats(), indent=2) + "\n")
        outputs += [path, stats_path]
        sys.stdout.write(json.dumps({"mean": hist.mean, "std": hist.std, "trials": len(hist.fh)}) + "\n")
        ok = len(hist.fh) > 0
    elif kind == "ise":
        base = trial_config_from(settings)
        try:
            cap = run_ise_capture(base)
        except RuntimeError as exc:
            log.error("%s", exc)
            return EXIT_NUMERIC
        path = out / "ise.csv"
        cap.to_csv(path)
        outputs.append(path)
        sys.stdout.write(path.read_text())
        ok = True
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}; expected one of {', '.join(SWEEP_KINDS)}")
    _manifest(f"sweep {kind}", settings, outputs, start, out)
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resonator", description="Echo-state-network forecasting experiments on the Lorenz system.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("trial", "run one trial and print its result as JSON"),
                        ("table1", "compare the sixteen activation functions"),
                        ("sweep", "run a parameter sweep")):
        sp = sub.add_parser(name, help=help_,
                            epilog="Any configuration key may also be given as --key value.")
        if name == "sweep":
            sp.add_argument("kind", help=" | ".join(SWEEP_KINDS))
        sp.add_argument("--config", help="flat TOML file of configuration keys")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        flags = parse_overrides(extra)
        kind = getattr(args, "kind", None)
        if args.command == "sweep" and kind not in SWEEP_KINDS:
            raise ConfigError(f"unknown sweep kind {kind!r}; expected one of {', '.join(SWEEP_KINDS)}")
        preset = PRESETS.get(kind, {}) if args.command == "sweep" else {}
        settings = resolve_settings(preset, load_config_file(args.config), flags)
        if args.command == "trial":
            return cmd_trial(settings)
        if args.command == "table1":
            return cmd_table1(settings)
        return cmd_sweep(kind, settings)
    except ConfigError as exc:
        print(f"resonator: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
