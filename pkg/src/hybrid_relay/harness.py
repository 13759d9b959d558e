"""Monte-Carlo experiments and CSV output.

Every trial draws its channels from its own counter-based random stream,
keyed by ``(seed, trial)`` for SNR sweeps (the same channels at every SNR)
and by ``(seed, trial, point)`` for sweeps that change the array sizes.
Results are collected in trial order, so the output does not depend on how
many worker processes ran the trials.
"""

import csv
import dataclasses
import io
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import ErrorModel, draw_clustered_channel, draw_simple_channel, make_csi_pair, trial_rng
from .evaluation import (
    RateReport,
    design_hybrid,
    design_robust,
    end_to_end_rate,
    full_digital_baseline,
    noise_from_snr,
)
from .wmmse import ConvergenceWarning, SolverConfig

__all__ = [
    "PRESETS",
    "SystemConfig",
    "ExperimentSpec",
    "CSV_HEADER",
    "TRIALS_HEADER",
    "run_experiment",
    "write_csv",
    "write_trials_csv",
    "read_csv",
    "check_trials_consistency",
]

PRESETS = (
    "snr_sweep",
    "relay_antenna_sweep",
    "dest_antenna_sweep",
    "rf_chain_sweep",
    "convergence_trace",
    "robust_snr_sweep",
    "baseband_compare",
)
SNR_PRESETS = ("snr_sweep", "convergence_trace", "robust_snr_sweep", "baseband_compare")
SWEEP_FIELD = {"relay_antenna_sweep": "nr", "dest_antenna_sweep": "nd", "rf_chain_sweep": "nrf"}

CSV_HEADER = ["label", "snr_db", "sweep_value", "mean_rate_bits", "stddev", "trials", "mean_iters"]
TRIALS_HEADER = ["label", "snr_db", "sweep_value", "trial", "rate_bits", "iters"]


@dataclass(frozen=True)
class SystemConfig:
    """Array sizes, stream and RF-chain counts, channel model and power budgets.

    ``et`` and ``er`` default to ``ns``. ``snr_db`` is the operating point of
    presets that sweep something other than SNR.
    """

    nt: int = 64
    nr: int = 32
    nd: int = 48
    ns: int = 4
    nrf: int = 6
    paths: int = 20
    channel: str = "simple"
    ncl: int = 1
    et: Optional[float] = None
    er: Optional[float] = None
    snr_db: float = 5.0

    @property
    def power_source(self):
        return float(self.ns if self.et is None else self.et)

    @property
    def power_relay(self):
        return float(self.ns if self.er is None else self.er)

    def validate(self):
        """Reject infeasible dimension combinations, naming the violated inequality."""
        for name in ("nt", "nr", "nd", "ns", "nrf", "paths", "ncl"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channel not in ("simple", "clustered"):
            raise ValueError(f"channel must be 'simple' or 'clustered', got {self.channel!r}")
        if self.ns > self.nrf:
            raise ValueError(f"need N_s <= N_RF, got N_s={self.ns} > N_RF={self.nrf}")
        smallest = min(self.nt, self.nr, self.nd)
        if self.nrf > smallest:
            raise ValueError(
                f"need N_RF <= min(N_t, N_r, N_d), got N_RF={self.nrf} > {smallest}"
            )
        rays = self.paths * (self.ncl if self.channel == "clustered" else 1)
        if self.nrf > rays:
            raise ValueError(
                f"need N_RF <= number of propagation paths (channel rank), got N_RF={self.nrf} > {rays}"
            )
        if not (self.power_source > 0 and self.power_relay > 0):
            raise ValueError("power budgets must be positive")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment.

    ``sweep_values`` are SNRs in dB for SNR presets, antenna or RF-chain
    counts otherwise. ``solver`` supplies tolerances; its powers and noise
    levels are replaced at every sweep point. ``sigma_e2_values`` lists the
    error levels of ``robust_snr_sweep`` (defaults to ``error.sigma_e2``).
    """

    preset: str
    system: SystemConfig = SystemConfig()
    solver: SolverConfig = SolverConfig(1.0, 1.0, 1.0, 1.0)
    error: Optional[ErrorModel] = None
    trials: int = 2000
    seed: int = 0
    sweep_values: Tuple[float, ...] = tuple(range(-10, 13, 2))
    output_path: Optional[str] = None
    robust: bool = False
    sigma_e2_values: Tuple[float, ...] = ()
    emit_trials: bool = False

    def validate(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for sys_cfg in self.point_systems():
            sys_cfg.validate()
        if self.preset == "robust_snr_sweep" and not self.error_levels():
            raise ValueError("robust_snr_sweep needs at least one sigma_e2 value")
        if self.robust and self.error is None and self.preset == "snr_sweep":
            raise ValueError("--robust needs an error model (set --sigma-e2)")

    def point_systems(self) -> List[SystemConfig]:
        """System configuration at every sweep point."""
        if self.preset in SWEEP_FIELD:
            name = SWEEP_FIELD[self.preset]
            return [dataclasses.replace(self.system, **{name: int(v)}) for v in self.sweep_values]
        return [self.system] * len(self.sweep_values)

    def point_snr(self, index):
        if self.preset in SNR_PRESETS:
            return float(self.sweep_values[index])
        return float(self.system.snr_db)

    def error_levels(self):
        if self.sigma_e2_values:
            return tuple(float(v) for v in self.sigma_e2_values)
        return (self.error.sigma_e2,) if self.error is not None else ()

    def solver_at(self, system: SystemConfig, snr_db):
        return dataclasses.replace(
            self.solver,
            power_source=system.power_source,
            power_relay=system.power_relay,
            sigma1=float(np.sqrt(noise_from_snr(system.power_source, snr_db))),
            sigma2=float(np.sqrt(noise_from_snr(system.power_relay, snr_db))),
        )


# ---------------------------------------------------------------------------
# one trial


def _draw(system: SystemConfig, rng):
    if system.channel == "clustered":
        h1 = draw_clustered_channel(system.nt, system.nr, system.paths, system.ncl, rng).h
        h2 = draw_clustered_channel(system.nr, system.nd, system.paths, system.ncl, rng).h
    else:
        h1 = draw_simple_channel(system.nt, system.nr, system.paths, rng).h
        h2 = draw_simple_channel(system.nr, system.nd, system.paths, rng).h
    return h1, h2


def _csi(system, error: ErrorModel, h1, h2, rng):
    p1 = make_csi_pair(h1, error.receive_correlation(system.nr), error.transmit_correlation(system.nt), rng)
    p2 = make_csi_pair(h2, error.receive_correlation(system.nd), error.transmit_correlation(system.nr), rng)
    return p1.estimated_channel, p2.estimated_channel


def _fmt(v):
    return format(float(v), "g")


def _hybrid_label(system):
    return f"hybrid_ns{system.ns}_nrf{system.nrf}"


def _run_trial(args):
    """Rates of every curve for one ``(point, trial)``; returns ``{label: (rate, iters)}``.

    For ``convergence_trace`` the value is ``(trace, iters)`` with the
    per-iteration rate trace. Designs that hit the iteration cap are kept
    (their best iterate) and show up in the iteration counts.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return _trial_curves(*args)


def _trial_curves(spec, point, trial):
    system = spec.point_systems()[point]
    snr = spec.point_snr(point)
    cfg = spec.solver_at(system, snr)
    keys = (trial,) if spec.preset in SNR_PRESETS else (trial, point)
    h1, h2 = _draw(system, trial_rng(spec.seed, *keys))
    out: Dict[str, tuple] = {}

    def realized(design, label):
        out[label] = (end_to_end_rate(h1, h2, design.filters, cfg.sigma1, cfg.sigma2),
                      design.solution.iterations)

    if spec.preset == "convergence_trace":
        d = design_hybrid(h1, h2, system.ns, system.nrf, cfg)
        trace = [0.5 * i for i in d.solution.mutual_info_trace]
        out["convergence"] = (trace, d.solution.iterations)
        return out

    if spec.preset == "baseband_compare":
        realized(design_hybrid(h1, h2, system.ns, system.nrf, cfg, "wmmse"), "wmmse")
        realized(design_hybrid(h1, h2, system.ns, system.nrf, cfg, "mmse"), "mmse")
        return out

    if spec.preset == "robust_snr_sweep":
        realized(design_hybrid(h1, h2, system.ns, system.nrf, cfg), "perfect_csi")
        for k, level in enumerate(spec.error_levels()):
            err = dataclasses.replace(spec.error or ErrorModel(level), sigma_e2=level)
            h1e, h2e = _csi(system, err, h1, h2, trial_rng(spec.seed, trial, 1, k))
            tag = _fmt(level)
            realized(design_hybrid(h1e, h2e, system.ns, system.nrf, cfg), f"nonrobust_se2_{tag}")
            realized(design_robust(h1e, h2e, err, system.ns, system.nrf, cfg), f"robust_se2_{tag}")
        return out

    # snr_sweep and the three dimension sweeps
    realized(design_hybrid(h1, h2, system.ns, system.nrf, cfg), _hybrid_label(system))
    out[f"full_digital_ns{system.ns}"] = (full_digital_baseline(h1, h2, system.ns, cfg), 0)
    if spec.preset == "snr_sweep" and spec.error is not None:
        h1e, h2e = _csi(system, spec.error, h1, h2, trial_rng(spec.seed, trial, 1, 0))
        tag = _fmt(spec.error.sigma_e2)
        realized(design_hybrid(h1e, h2e, system.ns, system.nrf, cfg), f"nonrobust_se2_{tag}")
        if spec.robust:
            realized(design_robust(h1e, h2e, spec.error, system.ns, system.nrf, cfg), f"robust_se2_{tag}")
    return out


# ---------------------------------------------------------------------------
# experiment driver


def _default_workers():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None,
                   progress: Optional[Callable[[str], None]] = None) -> List[RateReport]:
    """Run every trial of every sweep point and collect one report per curve and point.

    Parameters
    ----------
    spec : ExperimentSpec
    workers : int, optional
        Worker processes; defaults to the number of available cores. ``1``
        runs in the calling process.
    progress : callable, optional
        Receives one human-readable line per finished sweep point.
    """
    spec.validate()
    workers = _default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    reports: List[RateReport] = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for point in range(len(spec.sweep_values)):
            t0 = time.perf_counter()
            tasks = [(spec, point, t) for t in range(spec.trials)]
            if pool is None:
                results = [_run_trial(a) for a in tasks]
            else:
                chunk = max(1, spec.trials // (4 * workers))
                results = list(pool.map(_run_trial, tasks, chunksize=chunk))
            elapsed = time.perf_counter() - t0
            reports.extend(_collect(spec, point, results, elapsed))
            if progress is not None:
                progress(
                    f"[{spec.preset}] point {point + 1}/{len(spec.sweep_values)} "
                    f"(sweep value {_fmt(spec.sweep_values[point])}): "
                    f"{spec.trials} trials in {elapsed:.1f} s"
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return reports


def _collect(spec, point, results, elapsed):
    snr = spec.point_snr(point)
    value = float(spec.sweep_values[point])
    labels = list(results[0].keys())
    if spec.preset == "convergence_trace":
        traces = [r["convergence"][0] for r in results]
        iters = [r["convergence"][1] for r in results]
        length = max(len(t) for t in traces)
        padded = np.array([t + [t[-1]] * (length - len(t)) for t in traces])
        return [
            RateReport(label="convergence", snr_db=snr, trial_rates=padded[:, k].tolist(),
                       convergence_lengths=iters, sweep_value=float(k), wall_seconds=elapsed)
            for k in range(length)
        ]
    return [
        RateReport(label=label, snr_db=snr, trial_rates=[r[label][0] for r in results],
                   convergence_lengths=[r[label][1] for r in results], sweep_value=value,
                   wall_seconds=elapsed)
        for label in labels
    ]


# ---------------------------------------------------------------------------
# CSV


def _num(v):
    return format(float(v), ".17g")


def _open_for_write(path):
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(reports: Sequence[RateReport], path) -> None:
    """Summary CSV: one row per report, 17 significant digits, LF line endings."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow([r.label, _num(r.snr_db), _num(r.sweep_value if r.sweep_value is not None else r.snr_db),
                        _num(r.mean_rate), _num(r.stddev), len(r.trial_rates), _num(r.mean_iters)])


def write_trials_csv(reports: Sequence[RateReport], path) -> None:
    """Per-trial CSV matching :func:`write_csv` row for row."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIALS_HEADER)
        for r in reports:
            sweep = r.sweep_value if r.sweep_value is not None else r.snr_db
            iters = r.convergence_lengths or [0] * len(r.trial_rates)
            for t, (rate, it) in enumerate(zip(r.trial_rates, iters)):
                w.writerow([r.label, _num(r.snr_db), _num(sweep), t, _num(rate), it])


def read_csv(path) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def check_trials_consistency(summary_path, trials_path) -> None:
    """Raise ``ValueError`` unless every summary mean is the mean of its trial rows."""
    groups: Dict[tuple, List[float]] = {}
    for row in read_csv(trials_path):
        groups.setdefault((row["label"], row["snr_db"], row["sweep_value"]), []).append(float(row["rate_bits"]))
    for row in read_csv(summary_path):
        key = (row["label"], row["snr_db"], row["sweep_value"])
        rates = groups.get(key)
        if rates is None or len(rates) != int(row["trials"]):
            raise ValueError(f"trial rows missing or incomplete for {key}")
        if _num(np.mean(rates)) != row["mean_rate_bits"]:
            raise ValueError(
                f"summary mean {row['mean_rate_bits']} for {key} differs from trial mean {_num(np.mean(rates))}"
            )


def trials_path_for(path) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_trials{ext or '.csv'}"


def csv_text(reports: Sequence[RateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow([r.label, _num(r.snr_db), _num(r.sweep_value if r.sweep_value is not None else r.snr_db),
                    _num(r.mean_rate), _num(r.stddev), len(r.trial_rates), _num(r.mean_iters)])
    return buf.getvalue()
