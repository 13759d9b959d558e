"""Command-line front end for the Monte-Carlo harness.

Settings come from three layers, later ones winning: built-in defaults, an
optional ``key=value`` config file (``--config``), and command-line flags.
Config keys are the long flag names with or without the leading dashes,
e.g. ``snr-range = -10:2:12`` or ``trials=500``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
numerical failure stops the run.
"""

import argparse
import sys
from typing import Dict, List, Optional

import numpy as np

from ._linalg import NumericalError
from .channel import ErrorModel
from .harness import (
    PRESETS,
    SNR_PRESETS,
    ExperimentSpec,
    SystemConfig,
    check_trials_consistency,
    csv_text,
    run_experiment,
    trials_path_for,
    write_csv,
    write_trials_csv,
)
from .rf_design import RankDeficiencyError
from .wmmse import SolverConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_SWEEPS = {
    "relay_antenna_sweep": (16, 24, 32, 40, 48, 56, 64),
    "dest_antenna_sweep": (16, 24, 32, 40, 48, 56, 64),
    "rf_chain_sweep": (4, 5, 6, 7, 8, 9, 10),
}
DEFAULT_SNR_RANGE = "-10:2:12"
DEFAULT_ROBUST_LEVELS = "0.05,0.1,0.15"


class ConfigError(ValueError):
    pass


def parse_range(text) -> List[float]:
    """``lo:step:hi`` inclusive of ``hi`` (within half a step), or a single value."""
    parts = str(text).split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad range {text!r}; expected lo:step:hi") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise ConfigError(f"bad range {text!r}; expected lo:step:hi")
    lo, step, hi = nums
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad range {text!r}; need step > 0 and hi >= lo")
    count = int(np.floor((hi - lo) / step + 0.5)) + 1
    return [float(round(lo + k * step, 12)) for k in range(count)]


def parse_list(text, kind=float) -> List:
    try:
        return [kind(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad list {text!r}; expected comma-separated numbers") from None


def read_config_file(path) -> Dict[str, str]:
    """Flat ``key=value`` pairs; ``#`` starts a comment, blank lines are ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def build_parser():
    p = argparse.ArgumentParser(
        prog="hybrid-relay",
        description="Monte-Carlo rates of hybrid precoding for mmWave amplify-and-forward relays.",
    )
    p.add_argument("--config", help="key=value config file; command-line flags override it")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--nt", type=int, help="source antennas (default 64)")
    p.add_argument("--nr", type=int, help="relay antennas (default 32)")
    p.add_argument("--nd", type=int, help="destination antennas (default 48)")
    p.add_argument("--ns", type=int, help="data streams (default 4)")
    p.add_argument("--nrf", type=int, help="RF chains per node (default 6)")
    p.add_argument("--snr", type=float, help="operating SNR in dB for non-SNR sweeps (default 5)")
    p.add_argument("--snr-range", help="lo:step:hi in dB for SNR sweeps (default -10:2:12)")
    p.add_argument("--sweep-values", help="comma-separated antenna or RF-chain counts for dimension sweeps")
    p.add_argument("--trials", type=int, help="channel realizations per point (default 2000)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--sigma-e2", help="CSI error variance, or a comma-separated list for robust_snr_sweep")
    p.add_argument("--alpha", type=float, help="transmit-side error correlation (default 0)")
    p.add_argument("--beta", type=float, help="receive-side error correlation (default 0)")
    p.add_argument("--channel", choices=("simple", "clustered"))
    p.add_argument("--ncl", type=int, help="rays per scatter for the clustered channel (default 1)")
    p.add_argument("--paths", type=int, help="paths, or scatters for the clustered channel (default 20)")
    p.add_argument("--et", type=float, help="source power budget (default Ns)")
    p.add_argument("--er", type=float, help="relay power budget (default Ns)")
    p.add_argument("--out", help="summary CSV path; CSV goes to standard output when omitted")
    p.add_argument("--emit-trials", action="store_true", default=None,
                   help="also write <out>_trials.csv and cross-check the means")
    p.add_argument("--robust", action="store_true", default=None,
                   help="add the robust design to snr_sweep (needs --sigma-e2)")
    p.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    p.add_argument("--max-iters", type=int, help="outer iteration cap (default 200)")
    p.add_argument("--tol", type=float, help="outer convergence tolerance in bits (default 1e-4)")
    return p


_TYPES = {
    "nt": int, "nr": int, "nd": int, "ns": int, "nrf": int, "snr": float, "trials": int,
    "seed": int, "alpha": float, "beta": float, "ncl": int, "paths": int, "et": float,
    "er": float, "workers": int, "max_iters": int, "tol": float,
}
_FLAGS = ("emit_trials", "robust")


def _merge(args: argparse.Namespace) -> Dict:
    settings: Dict = {}
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key in _TYPES:
                try:
                    settings[key] = _TYPES[key](value)
                except ValueError:
                    raise ConfigError(f"config key {key}: bad value {value!r}") from None
            elif key in _FLAGS:
                settings[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in ("preset", "snr_range", "sweep_values", "sigma_e2", "channel", "out"):
                settings[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            settings[key] = value
    return settings


def spec_from_settings(s: Dict) -> ExperimentSpec:
    """Build and validate an :class:`ExperimentSpec` from merged settings."""
    preset = s.get("preset", "snr_sweep")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    channel = s.get("channel", "simple")
    system = SystemConfig(
        nt=s.get("nt", 64), nr=s.get("nr", 32), nd=s.get("nd", 48), ns=s.get("ns", 4),
        nrf=s.get("nrf", 6), paths=s.get("paths", 20), channel=channel, ncl=s.get("ncl", 1),
        et=s.get("et"), er=s.get("er"), snr_db=s.get("snr", 5.0),
    )
    if preset in SNR_PRESETS:
        default = "5" if preset == "convergence_trace" else DEFAULT_SNR_RANGE
        sweep = parse_range(s.get("snr_range", default))
    elif "sweep_values" in s:
        sweep = parse_list(s["sweep_values"], int)
    else:
        sweep = list(DEFAULT_SWEEPS[preset])

    levels = parse_list(s["sigma_e2"]) if "sigma_e2" in s else []
    if preset == "robust_snr_sweep" and not levels:
        levels = parse_list(DEFAULT_ROBUST_LEVELS)
    if len(levels) > 1 and preset != "robust_snr_sweep":
        raise ConfigError("a list of sigma_e2 values is only accepted by robust_snr_sweep")
    error = None
    if levels:
        try:
            error = ErrorModel(levels[0], s.get("alpha", 0.0), s.get("beta", 0.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    solver_kw = {}
    if "max_iters" in s:
        solver_kw["max_outer_iters"] = s["max_iters"]
    if "tol" in s:
        solver_kw["outer_tol"] = s["tol"]
    try:
        solver = SolverConfig(1.0, 1.0, 1.0, 1.0, **solver_kw)
        spec = ExperimentSpec(
            preset=preset, system=system, solver=solver, error=error,
            trials=s.get("trials", 2000), seed=s.get("seed", 0), sweep_values=tuple(sweep),
            output_path=s.get("out"), robust=bool(s.get("robust", False)),
            sigma_e2_values=tuple(levels) if preset == "robust_snr_sweep" else (),
            emit_trials=bool(s.get("emit_trials", False)),
        )
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if spec.emit_trials and not spec.output_path:
        raise ConfigError("--emit-trials needs --out")
    return spec


def _progress(line):
    print(line, file=sys.stderr, flush=True)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        settings = _merge(args)
        spec = spec_from_settings(settings)
        workers = settings.get("workers")
        if workers is not None and workers < 1:
            raise ConfigError("workers must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        reports = run_experiment(spec, workers=workers, progress=_progress)
    except (NumericalError, RankDeficiencyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    try:
        if spec.output_path:
            write_csv(reports, spec.output_path)
            _progress(f"wrote {spec.output_path}")
            if spec.emit_trials:
                tpath = trials_path_for(spec.output_path)
                write_trials_csv(reports, tpath)
                check_trials_consistency(spec.output_path, tpath)
                _progress(f"wrote {tpath} (means cross-checked)")
        else:
            sys.stdout.write(csv_text(reports))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
