"""End-to-end rates, the full-digital benchmark and design pipelines.

The realized rate of any set of filters on any pair of channels is::

    R = 1/2 log2 det(I + M^H Rn^{-1} M)
    M  = Wd H2 Gr H1 Ft
    Rn = sigma1^2 (Wd H2 Gr)(Wd H2 Gr)^H + sigma2^2 Wd Wd^H

with ``Ft``, ``Gr``, ``Wd`` the full (RF times baseband) filters and the
factor 1/2 accounting for the two time slots of half-duplex relaying.
Applying filters designed for estimated channels to the true channels gives
the mismatched rate used in robustness studies.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._linalg import hermitian_part, hsolve, logdet2_pd
from .channel import ErrorModel
from .rf_design import RfStage, _modes, build_rf_stage, effective_channels
from .robust import (
    calibrated_rf_stage,
    error_stats_for,
    robust_sic_model,
    robust_terms,
    robust_wmmse_design,
)
from .sic_receiver import SicModel, sic_filters
from .wmmse import BasebandSolution, SolverConfig, noise_cov_effective, wmmse_design

__all__ = [
    "HybridFilterSet",
    "RateReport",
    "HybridDesign",
    "noise_from_snr",
    "solver_config_for",
    "end_to_end_rate",
    "full_digital_filters",
    "full_digital_baseline",
    "design_hybrid",
    "design_robust",
]


@dataclass(frozen=True)
class HybridFilterSet:
    """RF and baseband filters of all three nodes.

    Shapes: ``ft_rf`` Nt x Nrf, ``ft_bb`` Nrf x Ns, ``wr_rf`` Nrf x Nr,
    ``gr_bb`` Nrf x Nrf, ``fr_rf`` Nr x Nrf, ``wd_rf`` Nrf x Nd,
    ``wd_bb`` Ns x Nrf.
    """

    ft_rf: np.ndarray
    ft_bb: np.ndarray
    wr_rf: np.ndarray
    gr_bb: np.ndarray
    fr_rf: np.ndarray
    wd_rf: np.ndarray
    wd_bb: np.ndarray

    def __post_init__(self):
        checks = [
            ("ft_rf @ ft_bb", self.ft_rf.shape[1], self.ft_bb.shape[0]),
            ("gr_bb @ wr_rf", self.gr_bb.shape[1], self.wr_rf.shape[0]),
            ("fr_rf @ gr_bb", self.fr_rf.shape[1], self.gr_bb.shape[0]),
            ("wd_bb @ wd_rf", self.wd_bb.shape[1], self.wd_rf.shape[0]),
            ("streams", self.ft_bb.shape[1], self.wd_bb.shape[0]),
        ]
        for what, a, b in checks:
            if a != b:
                raise ValueError(f"inconsistent filter dimensions in {what}: {a} != {b}")

    @property
    def ft(self):
        return self.ft_rf @ self.ft_bb

    @property
    def gr(self):
        return self.fr_rf @ self.gr_bb @ self.wr_rf

    @property
    def wd(self):
        return self.wd_bb @ self.wd_rf

    @property
    def stage(self):
        return RfStage(self.ft_rf, self.wr_rf, self.fr_rf, self.wd_rf)


@dataclass
class RateReport:
    """Per-trial rates at one sweep point.

    ``stddev`` is the sample standard deviation (zero for a single trial).
    """

    label: str
    snr_db: float
    trial_rates: List[float]
    convergence_lengths: List[int] = field(default_factory=list)
    sweep_value: Optional[float] = None
    wall_seconds: float = 0.0

    @property
    def mean_rate(self):
        return float(np.mean(self.trial_rates))

    @property
    def stddev(self):
        if len(self.trial_rates) < 2:
            return 0.0
        return float(np.std(self.trial_rates, ddof=1))

    @property
    def mean_iters(self):
        if not self.convergence_lengths:
            return 0.0
        return float(np.mean(self.convergence_lengths))


@dataclass
class HybridDesign:
    filters: HybridFilterSet
    solution: BasebandSolution
    cfg: SolverConfig


def noise_from_snr(power, snr_db):
    """Noise variance ``power * 10^(-snr_db / 10)`` for a hop with transmit power ``power``."""
    if not power > 0:
        raise ValueError("power must be positive")
    return power * 10.0 ** (-snr_db / 10.0)


def solver_config_for(power_source, power_relay, snr_db, **solver_kw) -> SolverConfig:
    """Solver configuration with both hops at the same SNR."""
    return SolverConfig(
        power_source=power_source,
        power_relay=power_relay,
        sigma1=float(np.sqrt(noise_from_snr(power_source, snr_db))),
        sigma2=float(np.sqrt(noise_from_snr(power_relay, snr_db))),
        **solver_kw,
    )


def _cascade_rate(h1, h2, ft, gr, wd, sigma1, sigma2):
    m = wd @ h2 @ gr @ h1 @ ft
    wg = wd @ h2 @ gr
    rn = hermitian_part(sigma1 ** 2 * (wg @ wg.conj().T) + sigma2 ** 2 * (wd @ wd.conj().T))
    info = np.eye(m.shape[1]) + m.conj().T @ hsolve(rn, m, "destination noise covariance")
    return 0.5 * logdet2_pd(hermitian_part(info), "information matrix")


def end_to_end_rate(h1, h2, filters: HybridFilterSet, sigma1, sigma2) -> float:
    """Half-duplex rate of ``filters`` on the channels ``h1`` (Nr x Nt) and ``h2`` (Nd x Nr)."""
    return _cascade_rate(np.asarray(h1), np.asarray(h2), filters.ft, filters.gr, filters.wd,
                         sigma1, sigma2)


def full_digital_filters(h1, h2, ns, cfg):
    """Unconstrained SVD cascade with equal power per stream.

    Returns ``(ft, gr, wd)``: ``ft = sqrt(Et/Ns) V1``, ``gr = c V2 U1^H`` with
    ``c`` meeting the relay budget with equality, and ``wd = U2^H``.
    """
    s1 = _modes(np.asarray(h1), ns, "H1")
    s2 = _modes(np.asarray(h2), ns, "H2")
    p = cfg.power_source / ns
    ft = np.sqrt(p) * s1.right
    relay_load = p * float(np.sum(s1.singulars ** 2)) + cfg.sigma1 ** 2 * ns
    c = np.sqrt(cfg.power_relay / relay_load)
    gr = c * s2.right @ s1.left.conj().T
    wd = s2.left.conj().T
    return ft, gr, wd


def full_digital_baseline(h1, h2, ns, cfg) -> float:
    """Rate of the full-digital SVD benchmark.

    ``cfg`` is any object with ``power_source``, ``power_relay``, ``sigma1``
    and ``sigma2`` attributes.
    """
    ft, gr, wd = full_digital_filters(h1, h2, ns, cfg)
    return _cascade_rate(np.asarray(h1), np.asarray(h2), ft, gr, wd, cfg.sigma1, cfg.sigma2)


def _filters(stage, solution, wd_bb):
    return HybridFilterSet(stage.ft_rf, solution.ft_bb, stage.wr_rf, solution.gr_bb,
                           stage.fr_rf, stage.wd_rf, wd_bb)


def design_hybrid(h1, h2, ns, n_rf, cfg: SolverConfig, weighting="wmmse") -> HybridDesign:
    """RF stage, baseband alternation and MMSE-SIC combiner for known channels."""
    stage = build_rf_stage(h1, h2, n_rf)
    eff = effective_channels(stage, h1, h2)
    sol = wmmse_design(eff, stage, ns, cfg, weighting)
    g = eff.h2_eff @ sol.gr_bb @ eff.h1_eff @ sol.ft_bb
    r = noise_cov_effective(eff.h2_eff, sol.gr_bb, stage.wr_rf, stage.wd_rf, cfg.sigma1, cfg.sigma2)
    wd_bb = sic_filters(SicModel(g, r)).stacked
    return HybridDesign(_filters(stage, sol, wd_bb), sol, cfg)


def design_robust(h1_est, h2_est, error: ErrorModel, ns, n_rf, cfg: SolverConfig,
                  weighting="wmmse") -> HybridDesign:
    """Robust counterpart of :func:`design_hybrid` from estimated channels."""
    stage = calibrated_rf_stage(h1_est, h2_est, n_rf)
    eff = effective_channels(stage, h1_est, h2_est)
    stats = error_stats_for(stage, error)
    sol = robust_wmmse_design(eff, stage, stats, ns, cfg, weighting)
    terms = robust_terms(eff.h1_eff, eff.h2_eff, sol.ft_bb, sol.gr_bb, stage, stats,
                         cfg.sigma1, cfg.sigma2)
    wd_bb = sic_filters(robust_sic_model(eff.h1_eff, eff.h2_eff, sol.ft_bb, sol.gr_bb, terms)).stacked
    return HybridDesign(_filters(stage, sol, wd_bb), sol, cfg)
