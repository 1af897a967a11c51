"""Command-line front end.

Subcommands: simulate, sweep, calibrate, oracle-check, rate-budget.
Exit codes: 0 success, 2 config/validation failure, 3 runtime or numerical
failure.  Every run writes a manifest listing all produced files.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import yaml

from . import analysis, protocol, waveguide
from .core import (
    ConfigError,
    ExperimentConfig,
    ExperimentKind,
    config_digest,
    load_config,
    with_overrides,
)

ENV_OUTDIR = "PHONON_TIMEBIN_OUTDIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _plain(obj):
    """Recursively convert numpy scalars/arrays for YAML/JSON output."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def _dump_yaml(path: Path, payload) -> None:
    path.write_text(yaml.safe_dump(_plain(payload), sort_keys=False))


class _Manifest:
    def __init__(self, out_dir: Path, config: ExperimentConfig | None, args):
        self.out_dir = out_dir
        self.data = {
            "command": " ".join(sys.argv[1:]),
            "config_digest": config_digest(config) if config else None,
            "seed": config.seed if config else None,
            "engine": config.engine.name if config else None,
            "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "artifacts": [],
            "assumption_flags": [
                "detector_efficiency and dark_count_prob are declared assumptions, "
                "not measured device values",
            ],
        }

    def add(self, path: Path) -> Path:
        self.data["artifacts"].append(str(path))
        return path

    def write(self) -> Path:
        self.data["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        path = self.out_dir / "manifest.json"
        self.data["artifacts"].append(str(path))
        path.write_text(json.dumps(self.data, indent=2))
        return path


def _out_dir(args) -> Path:
    base = args.out or os.environ.get(ENV_OUTDIR) or "."
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    for item in args.override or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        # the flag requests a Monte Carlo budget; exact-only runs are
        # selected with `trials: 0` in the config file instead
        if args.trials <= 0:
            raise ConfigError("--trials must be a positive count")
        overrides["trials"] = args.trials
    if args.engine is not None:
        overrides["engine.name"] = args.engine
    if overrides:
        config = with_overrides(config, overrides)
    return config


def _result_entry(name: str, res: analysis.AnalysisResult) -> dict:
    entry = {
        "value": None if math.isnan(res.value) else float(res.value),
        "sigma": None if math.isnan(res.sigma) else float(res.sigma),
        "method": res.method,
        "inputs_digest": res.inputs_digest,
    }
    if res.flags:
        entry["flags"] = list(res.flags)
    return entry


WINDOW_PAIRS = {
    "EE": ("write-early-direct", "read-early-direct"),
    "LL": ("write-overlap", "read-overlap"),
    "EL": ("write-early-direct", "read-overlap"),
    "LE": ("write-overlap", "read-early-direct"),
}


def dist_prob_any(dist, idx):
    return sum(p for pat, p in dist.probabilities.items() if any(pat[i] for i in idx))


def dist_prob_both(dist, idx_a, idx_b):
    return sum(p for pat, p in dist.probabilities.items()
               if any(pat[i] for i in idx_a) and any(pat[i] for i in idx_b))


def _g2_analysis(setting: protocol.SettingResult, trials: float) -> dict:
    dist = setting.distribution
    out: dict[str, analysis.AnalysisResult] = {}
    for name, (w_win, r_win) in WINDOW_PAIRS.items():
        wi = [i for i, lab in enumerate(dist.labels) if lab.startswith(w_win + ":")]
        ri = [i for i, lab in enumerate(dist.labels) if lab.startswith(r_win + ":")]
        if setting.counts is not None:
            n_w = sum(c for pat, c in setting.counts.items() if any(pat[i] for i in wi))
            n_r = sum(c for pat, c in setting.counts.items() if any(pat[i] for i in ri))
            n_c = sum(c for pat, c in setting.counts.items()
                      if any(pat[i] for i in wi) and any(pat[i] for i in ri))
        else:
            n_w = trials * dist_prob_any(dist, wi)
            n_r = trials * dist_prob_any(dist, ri)
            n_c = trials * dist_prob_both(dist, wi, ri)
        out[f"g2_{name}"] = analysis.g2_cross(n_w, n_r, n_c, trials)
    return out


def _entanglement_tables(result: protocol.ExperimentResult):
    tables = []
    for sr in result.settings:
        trials = sr.trials if sr.counts is not None else 1.0
        table = analysis.coincidences_from_distribution(
            sr.distribution,
            ("write-overlap:1", "write-overlap:2"),
            ("read-overlap:1", "read-overlap:2"),
            trials=trials,
            counts=sr.counts,
        )
        tables.append((sr, table))
    return tables


def cmd_simulate(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    manifest = _Manifest(out, config, args)
    t0 = time.time()
    results: dict = {"kind": config.kind.value, "config_digest": config_digest(config),
                     "seed": config.seed, "engine": config.engine.name}

    if config.kind is ExperimentKind.THERMAL_G2_TAU:
        _thermal_g2_run(config, out, manifest, results)
    else:
        run = protocol.run_experiment(config)
        if config.kind is ExperimentKind.DOUBLE_CROSS_CORRELATION:
            sr = run.settings[0]
            g2s = _g2_analysis(sr, float(config.trials or 1.0))
            results["estimates"] = {k: _result_entry(k, v) for k, v in g2s.items()}
        else:
            e_results = []
            settings_out = []
            for sr, table in _entanglement_tables(run):
                entry = {"phi_w": sr.phi_w, "phi_r": sr.phi_r,
                         "coincidences": {f"n{k}{l}": table.counts[(k, l)]
                                          for k in (1, 2) for l in (1, 2)}}
                try:
                    e = analysis.correlation_E(table)
                    e_results.append(e)
                    entry["E"] = _result_entry("E", e)
                except analysis.AnalysisError as exc:
                    entry["E"] = {"value": None, "flags": [str(exc)]}
                settings_out.append(entry)
            results["settings"] = settings_out
            results["estimates"] = {}
            if (config.kind is ExperimentKind.BELL_TEST
                    and len(e_results) == len(run.settings) == 4):
                s = analysis.chsh_S(e_results)
                results["estimates"]["S"] = _result_entry("S", s)
            if e_results:
                v = analysis.visibility(e_results, method="max")
                results["estimates"]["V_max_abs_E"] = _result_entry("V", v)
                if "witness_g2" in config.extra:
                    gee, gll = config.extra["witness_g2"]
                    r = analysis.witness_R(v, float(gee), float(gll))
                    results["estimates"]["R"] = _result_entry("R", r)
        counts_path = manifest.add(out / "counts.csv")
        _write_counts(counts_path, run)
        if run.records:
            _write_records(out, manifest, run)
    results["elapsed_seconds"] = time.time() - t0
    path = manifest.add(out / "results.yaml")
    _dump_yaml(path, results)
    manifest.write()
    print(yaml.safe_dump(_plain(results.get("estimates", results)), sort_keys=False).strip())
    return EXIT_OK


def _thermal_g2_run(config, out, manifest, results):
    extra = dict(config.extra)
    gamma = 1.0 / config.waveguide.T1
    if "spectrum_file" in extra:
        spectrum = waveguide.load_spectrum(extra["spectrum_file"], gamma=gamma)
    else:
        spectrum = waveguide.synthetic_spectrum(
            n_modes=int(extra.get("n_modes", 12)),
            fsr_hz=float(extra.get("fsr_hz", 7.94e6)),
            gamma=gamma,
            envelope=extra.get("envelope", "gaussian"),
            envelope_sigma_hz=float(extra.get("envelope_sigma_hz", 9.0e6)),
        )
    span = float(extra.get("max_delay", 5.5 * config.waveguide.round_trip_time))
    step = float(extra.get("delay_step", 0.5e-9))
    delays = np.arange(0.0, span, step)
    curve = waveguide.g2_tau_curve(spectrum, delays)
    path = manifest.add(out / "g2_tau.txt")
    waveguide.save_curve(path, delays, curve, header="delay_s g2")
    tau, fwhm = waveguide.extract_round_trip(delays, curve)
    results["estimates"] = {
        "g2_zero_delay": {"value": float(curve[0]), "sigma": 0.0, "method": "mode-sum/exact"},
        "round_trip_time": {"value": tau, "sigma": 0.0, "method": "g2-revival/parabolic"},
        "packet_fwhm": {"value": fwhm, "sigma": 0.0, "method": "g2-zero-peak/fwhm"},
    }


def _write_counts(path: Path, run: protocol.ExperimentResult) -> None:
    with open(path, "w") as fh:
        fh.write("# setting_index phi_w phi_r pattern count_or_probability\n")
        for i, sr in enumerate(run.settings):
            labels = ",".join(sr.distribution.labels)
            fh.write(f"# setting {i}: channels {labels}\n")
            source = sr.counts if sr.counts is not None else sr.distribution.probabilities
            for pat in sorted(source):
                bits = "".join("1" if b else "0" for b in pat)
                fh.write(f"{i} {sr.phi_w:.9f} {sr.phi_r:.9f} {bits} {source[pat]}\n")


def _write_records(out: Path, manifest: _Manifest, run: protocol.ExperimentResult) -> None:
    events = manifest.add(out / "events.txt")
    with open(events, "w") as fh:
        fh.write("# trial window detector\n")
        for rec in run.records:
            for ch in rec.clicks:
                window, det = ch.rsplit(":", 1)
                fh.write(f"{rec.trial} {window} {det}\n")
    trials = manifest.add(out / "trials.txt")
    with open(trials, "w") as fh:
        fh.write("# trial jitter_w_rad jitter_r_rad\n")
        for rec in run.records:
            fh.write(f"{rec.trial} {rec.jitter_w:.9g} {rec.jitter_r:.9g}\n")


def cmd_sweep(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    key, _, valspec = args.sweep.partition("=")
    if not _:
        raise ConfigError("--sweep must be KEY=START:STOP:N or KEY=v1,v2,...")
    if key not in ("phases.phi_w", "phases.phi_r", "pulses.energy",
                   "pulses.scattering_probability"):
        raise ConfigError(f"unknown sweep variable {key!r}")
    try:
        if ":" in valspec:
            start, stop, n = valspec.split(":")
            values = np.linspace(float(start), float(stop), int(n))
        else:
            values = np.array([float(v) for v in valspec.split(",") if v.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad sweep values {valspec!r}: {exc}") from exc
    if len(values) == 0:
        raise ConfigError("empty sweep list")
    manifest = _Manifest(out, config, args)
    rows = []
    phi_r_list = ([config.phases.phi_r] if not args.dual_phi_r
                  else [0.0, math.pi / 2.0])
    for phi_r in phi_r_list:
        for v in values:
            if key == "phases.phi_w":
                cfg = with_overrides(config, {"phases.phi_w": float(v),
                                              "phases.phi_r": phi_r / math.pi})
                phi_w = float(v) * math.pi
            elif key == "phases.phi_r":
                cfg, phi_w, phi_r = config, config.phases.phi_w, float(v) * math.pi
            else:
                scale = {"pulses.energy": "energy",
                         "pulses.scattering_probability": "scattering_probability"}[key]
                data = yaml_roundtrip_scale(config, scale, float(v))
                cfg, phi_w = data, config.phases.phi_w
            dist = protocol.jitter_averaged_distribution(cfg, phi_w, phi_r)
            trials = float(cfg.trials or 1.0)
            counts = None
            if cfg.trials:
                counts = protocol.sample_counts_chunked(dist, cfg.trials, cfg.seed,
                                                         len(rows))
            table = analysis.coincidences_from_distribution(
                dist, ("write-overlap:1", "write-overlap:2"),
                ("read-overlap:1", "read-overlap:2"), trials=trials, counts=counts)
            e = analysis.correlation_E(table)
            rows.append((phi_w, phi_r, e.value, e.sigma, table.total_coincidences))
    path = manifest.add(out / "sweep.csv")
    with open(path, "w") as fh:
        fh.write("phi_w_rad,phi_r_rad,E,sigma_E,coincidences\n")
        for row in rows:
            fh.write(",".join(f"{x:.9g}" for x in row) + "\n")
    manifest.write()
    print(f"wrote {path} ({len(rows)} points)")
    return EXIT_OK


def yaml_roundtrip_scale(config: ExperimentConfig, field: str, value: float) -> ExperimentConfig:
    from .core import config_from_dict, config_to_dict
    data = config_to_dict(config)
    for p in data["pulses"]:
        if field == "energy":
            p.pop("scattering_probability", None)
        p[field] = value
    return config_from_dict(data)


def cmd_calibrate(args) -> int:
    """The phase-calibration workflow: sweep phi_w at phi_r in {0, pi/2},
    fit the joint sinusoid, pick the CHSH settings that maximize the fitted
    S, and emit them in config-ready form."""
    config = _load(args)
    out = _out_dir(args)
    manifest = _Manifest(out, config, args)
    n_points = args.points
    points = []
    rows = []
    for phi_r in (0.0, math.pi / 2.0):
        for phi_w in np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False):
            dist = protocol.jitter_averaged_distribution(config, phi_w, phi_r)
            trials = float(config.trials or 1.0)
            counts = None
            if config.trials:
                counts = protocol.sample_counts_chunked(
                    dist, config.trials, config.seed, len(rows))
            table = analysis.coincidences_from_distribution(
                dist, ("write-overlap:1", "write-overlap:2"),
                ("read-overlap:1", "read-overlap:2"), trials=trials, counts=counts)
            e = analysis.correlation_E(table)
            points.append(analysis.SweepPoint(phi_w, phi_r, e.value, e.sigma))
            rows.append((phi_w, phi_r, e.value, e.sigma))
    sweep_path = manifest.add(out / "calibration_sweep.csv")
    with open(sweep_path, "w") as fh:
        fh.write("phi_w_rad,phi_r_rad,E,sigma_E\n")
        for row in rows:
            fh.write(",".join(f"{x:.9g}" for x in row) + "\n")
    cal = analysis.fit_sinusoid_and_choose_phases(points)
    settings_path = manifest.add(out / "chsh_settings.yaml")
    payload = {
        "phi_0_rad": cal.phi_0,
        "phi_0_sigma_rad": cal.phi_0_sigma,
        "fit_amplitude": cal.amplitude,
        "fit_offset": cal.offset,
        "expected_S": cal.expected_S,
        "setting_offsets_rad": list(cal.setting_offsets),
        "phases": {"settings": [[w / math.pi, r / math.pi] for w, r in cal.chsh_settings]},
    }
    _dump_yaml(settings_path, payload)
    manifest.write()
    print(yaml.safe_dump(_plain(payload), sort_keys=False).strip())
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .oracles import run_oracle_suite
    report = run_oracle_suite(scale=args.scale, seed=args.seed or 20260809)
    for line in report.lines:
        print(line)
    if not report.passed:
        print("ORACLE CHECK FAILED")
        return EXIT_RUNTIME
    print("oracle check passed")
    return EXIT_OK


def cmd_rate_budget(args) -> int:
    config = _load(args)
    out = _out_dir(args)
    manifest = _Manifest(out, config, args)
    budget = protocol.rate_budget(config)
    path = manifest.add(out / "rate_budget.yaml")
    _dump_yaml(path, budget)
    manifest.write()
    print(yaml.safe_dump(_plain(budget), sort_keys=False).strip())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonon-timebin",
        description="Traveling-phonon time-bin entanglement simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config (YAML)")
            p.add_argument("--override", action="append", metavar="KEY=VALUE",
                           help="dotted-path config override")
            p.add_argument("--trials", type=int, default=None)
            p.add_argument("--engine", choices=("fock", "gaussian"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${ENV_OUTDIR} or .)")

    p = sub.add_parser("simulate", help="run one experiment and its analysis chain")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep a phase or energy and tabulate E")
    common(p)
    p.add_argument("--sweep", required=True, metavar="KEY=START:STOP:N",
                   help="e.g. phases.phi_w=0:2:13 (phases in units of pi)")
    p.add_argument("--dual-phi-r", action="store_true",
                   help="repeat the sweep at phi_r = 0 and pi/2")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate",
                       help="dual sweep + sinusoid fit + CHSH setting selection")
    common(p)
    p.add_argument("--points", type=int, default=12, help="sweep points per curve")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle-check", help="cross-engine and analytic-limit suites")
    common(p, needs_config=False)
    p.add_argument("--scale", choices=("smoke", "default", "full"), default="default")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("rate-budget", help="analytic event-rate budget")
    common(p)
    p.set_defaults(func=cmd_rate_budget)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime/numerical failure
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
