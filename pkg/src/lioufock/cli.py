"""Batch command-line front end: validate configs, run scenarios, write CSVs.

Config files are flat ``key = value`` text with ``#`` comments and dotted
section keys, e.g.::

    scenario      = compact
    compact.N     = 100
    compact.p2    = 1.0, 0.8, 0.5     # comma list sweeps this key
    compact.t_max = 10

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import dynamics, scenarios, states

__all__ = ["ConfigError", "RunConfig", "parse_config", "run", "main"]

THREADS_ENV = "LIOUFOCK_THREADS"

# key -> (type tag, validator, help); types: int/float/str/floatlist
_SWEEPABLE = {"compact.p2", "lambda.Gamma", "tcm.p2"}

_SCHEMA = {
    "scenario": ("choice", ("compact", "lambda", "tcm")),
    "compact.N": ("int", (1, None)),
    "compact.p2": ("float", (0.0, 1.0)),
    "compact.t_max": ("float", (0.0, None)),
    "compact.points": ("int", (2, None)),
    "lambda.N": ("int", (1, None)),
    "lambda.Gamma": ("float", (0.0, None)),
    "lambda.Ip": ("float", (0.0, None)),
    "lambda.t0": ("float", (None, None)),
    "lambda.tau": ("float", (0.0, None)),
    "lambda.t_max": ("float", (0.0, None)),
    "lambda.points": ("int", (2, None)),
    "tcm.N": ("int", (1, None)),
    "tcm.p2": ("float", (0.0, 1.0)),
    "tcm.field": ("field", None),
    "tcm.t_max": ("float", (0.0, None)),
    "tcm.points": ("int", (2, None)),
    "integrator.method": ("choice", ("rk45", "rk4", "rkc")),
    "integrator.rel_tol": ("float", (0.0, None)),
    "integrator.abs_tol": ("float", (0.0, None)),
    "integrator.max_step": ("float", (0.0, None)),
    "integrator.fixed_step": ("float", (0.0, None)),
    "spectrum.omega_max": ("float", (0.0, None)),
    "spectrum.omega_points": ("int", (2, None)),
    "spectrum.t_max": ("float", (0.0, None)),
    "spectrum.t_points": ("int", (2, None)),
    "spectrum.tau_points": ("int", (2, None)),
    "output.prefix": ("str", None),
    "output.snapshot_times": ("floatlist", None),
}

_DEFAULTS = {
    "compact.p2": "1.0",
    "compact.t_max": "10",
    "compact.points": "201",
    "lambda.Gamma": "0",
    "lambda.Ip": "10",
    "lambda.t0": "2",
    "lambda.tau": "0.5",
    "lambda.t_max": "5",
    "lambda.points": "101",
    "tcm.p2": "1.0",
    "tcm.field": "vacuum",
    "tcm.t_max": "25",
    "tcm.points": "401",
}


class ConfigError(ValueError):
    """One or more invalid config lines; ``errors`` lists them all."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class RunConfig:
    scenario: str
    values: dict                    # resolved key -> parsed value
    sweep_key: str | None           # key carrying a list of values
    sweep_values: tuple
    source_lines: tuple             # (key, raw value) for output headers


def _parse_scalar(key, kind, spec, raw, line_no, errors):
    if kind == "choice":
        if raw not in spec:
            errors.append(f"line {line_no}: {key}: expected one of {spec}, got {raw!r}")
            return None
        return raw
    if kind == "str":
        return raw
    if kind == "field":
        parts = raw.split(":")
        if parts[0] == "vacuum" and len(parts) == 1:
            return ("vacuum",)
        try:
            if parts[0] == "fock" and len(parts) == 2:
                return ("fock", int(parts[1]))
            if parts[0] == "coherent" and len(parts) == 2:
                return ("coherent", float(parts[1]))
        except ValueError:
            pass
        errors.append(f"line {line_no}: {key}: bad field spec {raw!r} "
                      f"(use vacuum, fock:<n> or coherent:<mean>)")
        return None
    if kind == "floatlist":
        try:
            return tuple(float(x) for x in raw.split(","))
        except ValueError:
            errors.append(f"line {line_no}: {key}: expected comma-separated floats")
            return None
    try:
        value = int(raw) if kind == "int" else float(raw)
    except ValueError:
        errors.append(f"line {line_no}: {key}: expected {kind}, got {raw!r}")
        return None
    lo, hi = spec or (None, None)
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        errors.append(f"line {line_no}: {key}: value {value} outside range "
                      f"[{lo if lo is not None else '-inf'}, "
                      f"{hi if hi is not None else 'inf'}]")
        return None
    return value


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a config; collects every error, not the first."""
    errors = []
    raw_items = []
    seen = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {line_no}: expected 'key = value'")
            continue
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _SCHEMA:
            errors.append(f"line {line_no}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(f"line {line_no}: duplicate key {key!r} "
                          f"(first on line {seen[key]})")
            continue
        seen[key] = line_no
        raw_items.append((line_no, key, raw))

    values = {}
    sweep_key, sweep_values = None, ()
    for line_no, key, raw in raw_items:
        kind, spec = _SCHEMA[key]
        if key in _SWEEPABLE and "," in raw:
            parts = [p.strip() for p in raw.split(",")]
            parsed = [_parse_scalar(key, kind, spec, p, line_no, errors) for p in parts]
            if sweep_key is not None:
                errors.append(f"line {line_no}: only one key may sweep "
                              f"({sweep_key!r} already does)")
            elif None not in parsed:
                sweep_key, sweep_values = key, tuple(parsed)
                values[key] = parsed[0]
        else:
            parsed = _parse_scalar(key, kind, spec, raw, line_no, errors)
            if parsed is not None:
                values[key] = parsed

    scenario = values.get("scenario")
    if scenario is None and not any("scenario" in e for e in errors):
        errors.append("line 0: missing required key 'scenario'")
    if scenario is not None:
        if f"{scenario}.N" not in values:
            errors.append(f"line 0: missing required key '{scenario}.N'")
        for key, default in _DEFAULTS.items():
            if key.startswith(scenario + ".") and key not in values:
                kind, spec = _SCHEMA[key]
                values[key] = _parse_scalar(key, kind, spec, default, 0, errors)
        wrong = [k for k in values
                 if "." in k and k.split(".")[0] in ("compact", "lambda", "tcm")
                 and not k.startswith(scenario + ".")]
        for k in wrong:
            errors.append(f"line {seen.get(k, 0)}: key {k!r} does not belong to "
                          f"scenario {scenario!r}")
    if errors:
        raise ConfigError(errors)
    lines = tuple(sorted((k, _format_value(v)) for k, v in values.items()))
    return RunConfig(scenario, values, sweep_key, sweep_values, lines)


def _format_value(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _integrator_from(values, default_method="rk45") -> dynamics.IntegratorConfig:
    kw = {}
    if "integrator.method" in values:
        kw["method"] = values["integrator.method"]
    else:
        kw["method"] = default_method
    for name in ("rel_tol", "abs_tol", "max_step", "fixed_step"):
        key = f"integrator.{name}"
        if key in values:
            kw[name] = values[key]
    return dynamics.IntegratorConfig(**kw)


def _spectrum_from(values) -> scenarios.SpectrumOptions | None:
    keys = [k for k in values if k.startswith("spectrum.")]
    if not keys:
        return None
    kw = {k.split(".", 1)[1]: values[k] for k in keys}
    return scenarios.SpectrumOptions(**kw)


def _header(config: RunConfig, entry_key, entry_value, columns):
    lines = ["# lioufock run"]
    for key, val in config.source_lines:
        if key == entry_key:
            val = _format_value(entry_value)
        lines.append(f"# config {key} = {val}")
    unit = "1/g" if config.scenario == "tcm" else "1/gamma"
    lines.append(f"# units: time in {unit}, rates scaled accordingly")
    lines.append("# columns: " + ",".join(columns))
    return "\n".join(lines) + "\n"


def _write_csv(path, header, columns_data):
    rows = np.column_stack(columns_data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        for row in rows:
            fh.write(",".join(f"{v:.17e}" for v in row) + "\n")


def _run_entry(config: RunConfig, entry_value, out_dir):
    values = dict(config.values)
    if config.sweep_key is not None:
        values[config.sweep_key] = entry_value
    prefix = values.get("output.prefix", config.scenario)
    if config.sweep_key is not None:
        short = config.sweep_key.split(".", 1)[1]
        prefix = f"{prefix}_{short}={_format_value(entry_value)}"
    base = os.path.join(out_dir, prefix)
    written = []
    scen = config.scenario

    if scen == "compact":
        params = scenarios.CompactEmissionParams(
            N=values["compact.N"], p2=values["compact.p2"],
            t_max=values["compact.t_max"], points=values["compact.points"],
            integrator=_integrator_from(values),
            spectrum=_spectrum_from(values),
            keep_states="output.snapshot_times" in values)
        res = scenarios.run_compact(params)
        cols = ("t", "p1", "p2", "intensity")
        _write_csv(base + ".csv", _header(config, config.sweep_key, entry_value, cols),
                   (res.times, res.p1, res.p2, res.intensity))
        written.append(base + ".csv")
        if res.spectrum is not None:
            sp = res.spectrum
            cols = ("omega", "S", "S_normalized")
            _write_csv(base + "_spectrum.csv",
                       _header(config, config.sweep_key, entry_value, cols),
                       (sp.omega, sp.values, sp.normalized))
            written.append(base + "_spectrum.csv")
        written += _write_snapshots(values, res, base)
    elif scen == "lambda":
        params = scenarios.LambdaParams(
            N=values["lambda.N"], auger_rate=values["lambda.Gamma"],
            pump_area=values["lambda.Ip"], pump_center=values["lambda.t0"],
            pump_width=values["lambda.tau"], t_max=values["lambda.t_max"],
            points=values["lambda.points"],
            integrator=_integrator_from(values, default_method="rkc"),
            keep_states="output.snapshot_times" in values)
        res = scenarios.run_lambda(params)
        names = list(res.populations)
        cols = ["t"] + [f"p_{n}" for n in names] + ["intensity", "photon_count"]
        _write_csv(base + ".csv", _header(config, config.sweep_key, entry_value, cols),
                   [res.times] + [res.populations[n] for n in names]
                   + [res.intensity, res.photon_count])
        written.append(base + ".csv")
        written += _write_snapshots(values, res, base)
    else:
        params = scenarios.TavisCummingsParams(
            N=values["tcm.N"], p2=values["tcm.p2"], photons=values["tcm.field"],
            t_max=values["tcm.t_max"], points=values["tcm.points"],
            integrator=_integrator_from(values))
        res = scenarios.run_tavis_cummings(params)
        cols = ("t", "p2", "mean_photons", "excitation_mean", "coherence_asymmetry",
                "trace")
        _write_csv(base + ".csv", _header(config, config.sweep_key, entry_value, cols),
                   (res.times, res.p2, res.mean_photons, res.excitation_mean,
                    res.asymmetry_mean, res.sector_trace_sum))
        written.append(base + ".csv")
    return written


def _write_snapshots(values, res, base):
    times = values.get("output.snapshot_times")
    if not times or res.states is None:
        return []
    written = []
    for t_want in times:
        k = int(np.argmin(np.abs(res.times - t_want)))
        path = f"{base}_t{res.times[k]:g}.snap"
        states.write_snapshot(res.states[k], path)
        written.append(path)
    return written


def run(config: RunConfig, out_dir: str = ".", threads: int | None = None) -> list:
    """Execute all sweep entries; returns the list of files written."""
    os.makedirs(out_dir, exist_ok=True)
    entries = list(config.sweep_values) if config.sweep_key else [None]
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    written: list = []
    if threads > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for files in pool.map(lambda e: _run_entry(config, e, out_dir), entries):
                written.extend(files)
    else:
        for entry in entries:
            written.extend(_run_entry(config, entry, out_dir))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lioufock",
        description="Occupation-number Liouville-space dynamics of identical emitters")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the scenario described by a config file")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--out-dir", default=".", help="directory for output files")
    p_run.add_argument("--threads", type=int, default=None,
                       help=f"parallel sweep entries (or ${THREADS_ENV})")
    p_val = sub.add_parser("validate", help="check a config file and exit")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        text = open(args.config, encoding="utf-8").read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"ok: scenario {config.scenario}"
              + (f", sweep over {config.sweep_key}" if config.sweep_key else ""))
        return 0
    try:
        written = run(config, args.out_dir, args.threads)
    except (dynamics.IntegrationError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
