"""Robust RF and baseband design under the Kronecker CSI-error model.

The true channels are modeled as ``H = H_bar + Phi^{1/2} Delta Theta^{1/2}``
with ``Delta`` i.i.d. ``CN(0, 1)``. After RF processing the same model holds
for the ``Nrf x Nrf`` effective channels with the congruence-transformed
statistics ``Phi~ = W Phi W^H`` and ``Theta~ = F^H Theta F``. Two moment
identities do all the work::

    E[H C H^H] = H_bar C H_bar^H + Tr(C Theta~) Phi~
    E[H^H C H] = H_bar^H C H_bar + Tr(Phi~ C) Theta~

The baseband design is the weighted-MMSE alternation of :mod:`.wmmse`
applied to the MSE matrix averaged over both error terms. Every averaged
quantity is written as its perfect-CSI value plus extra trace terms, so that
with zero error statistics the robust design reproduces the nominal one
exactly.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import hermitian_part, hsolve, logdet2_pd, psd_sqrt
from .channel import draw_simple_channel, make_csi_pair, trial_rng, ErrorModel
from .rf_design import EffectiveChannels, RfStage, build_rf_stage, truncated_svd
from .sic_receiver import SicModel
from .wmmse import (
    BasebandSolution,
    RelayProblem,
    SolverConfig,
    run_alternation,
    update_weight,
)

__all__ = [
    "EffectiveErrorStats",
    "RobustTerms",
    "RobustRelayProblem",
    "calibrated_rf_stage",
    "phase_differences",
    "simulate_phase_differences",
    "effective_error_stats",
    "error_stats_for",
    "expect_quad_right",
    "expect_quad_left",
    "robust_noise_cov",
    "robust_terms",
    "robust_wd_mmse",
    "robust_emmse",
    "robust_mse",
    "robust_relay_filter",
    "robust_source_precoder",
    "robust_wmmse_design",
    "robust_objective",
    "avg_mi_upper_bound",
    "robust_sic_model",
    "sample_effective_channels",
]


def _tr(a, b):
    """``Re Tr(a b)`` for matrices whose product has a real trace."""
    return float(np.real(np.einsum("ij,ji->", a, b)))


@dataclass(frozen=True)
class EffectiveErrorStats:
    phi1_eff: np.ndarray
    theta1_eff: np.ndarray
    phi2_eff: np.ndarray
    theta2_eff: np.ndarray

    @property
    def is_zero(self):
        return not any(np.any(m) for m in (self.phi1_eff, self.theta1_eff,
                                           self.phi2_eff, self.theta2_eff))

    @classmethod
    def zeros(cls, n_rf):
        z = np.zeros((n_rf, n_rf), dtype=complex)
        return cls(z, z, z, z)


@dataclass(frozen=True)
class RobustTerms:
    """Averaged quantities for one ``(F, G, W, V)`` iterate.

    ``k1`` and ``b`` coincide (the weighted receive Gram matrix averaged over
    the second hop); both names are kept because both appear in the robust
    update formulas. ``k2`` equals ``a1``.
    """

    r_nbar: np.ndarray
    a1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray


# ---------------------------------------------------------------------------
# RF stage and phase calibration


def calibrated_rf_stage(h1_est, h2_est, n_rf: int) -> RfStage:
    """RF stage from estimated channels with the phase correction set to zero.

    The mean phase error of the estimated singular vectors is zero (see
    :func:`simulate_phase_differences`), so the calibrated phases equal the
    estimated ones and the stage is the plain phase-compensating design.
    """
    return build_rf_stage(h1_est, h2_est, n_rf)


def phase_differences(h_true, h_est, modes: int) -> np.ndarray:
    """Entry-wise phase differences between true and estimated left singular vectors.

    Each estimated vector is first rotated by the common phase that best
    aligns it with the true one (singular vectors are only defined up to a
    phase). Differences are wrapped to ``(-pi, pi]``.
    """
    u = truncated_svd(h_true, modes).left
    u_bar = truncated_svd(h_est, modes).left
    align = np.sum(u_bar.conj() * u, axis=0)
    u_bar = u_bar * np.exp(1j * np.angle(align))
    return np.angle(u * u_bar.conj()).ravel()


def simulate_phase_differences(nr=32, nt=48, paths=20, error=None, trials=100, modes=6,
                               seed=0) -> np.ndarray:
    """Monte-Carlo sample of phase differences for random channels and estimates."""
    error = ErrorModel(0.1) if error is None else error
    phi = error.receive_correlation(nr)
    theta = error.transmit_correlation(nt)
    out = []
    for t in range(trials):
        rng = trial_rng(seed, t)
        ch = draw_simple_channel(nt, nr, paths, rng)
        pair = make_csi_pair(ch, phi, theta, rng)
        out.append(phase_differences(pair.true_channel, pair.estimated_channel, modes))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# error statistics and moment identities


def effective_error_stats(stage: RfStage, phi1, theta1, phi2, theta2) -> EffectiveErrorStats:
    """Error statistics seen by the baseband stage."""
    shapes = {
        "phi1": (np.shape(phi1), stage.wr_rf.shape[1]),
        "theta1": (np.shape(theta1), stage.ft_rf.shape[0]),
        "phi2": (np.shape(phi2), stage.wd_rf.shape[1]),
        "theta2": (np.shape(theta2), stage.fr_rf.shape[0]),
    }
    for name, (shape, n) in shapes.items():
        if shape != (n, n):
            raise ValueError(f"{name} has shape {shape}, expected {(n, n)}")
    return EffectiveErrorStats(
        phi1_eff=hermitian_part(stage.wr_rf @ phi1 @ stage.wr_rf.conj().T),
        theta1_eff=hermitian_part(stage.ft_rf.conj().T @ theta1 @ stage.ft_rf),
        phi2_eff=hermitian_part(stage.wd_rf @ phi2 @ stage.wd_rf.conj().T),
        theta2_eff=hermitian_part(stage.fr_rf.conj().T @ theta2 @ stage.fr_rf),
    )


def error_stats_for(stage: RfStage, error: ErrorModel) -> EffectiveErrorStats:
    """Effective statistics for the same error model on both hops."""
    nt = stage.ft_rf.shape[0]
    nr = stage.fr_rf.shape[0]
    nd = stage.wd_rf.shape[1]
    return effective_error_stats(
        stage,
        error.receive_correlation(nr),
        error.transmit_correlation(nt),
        error.receive_correlation(nd),
        error.transmit_correlation(nr),
    )


def expect_quad_right(h_bar, c, phi_eff, theta_eff):
    """``E[H C H^H] = H_bar C H_bar^H + Tr(C Theta) Phi``."""
    return h_bar @ c @ h_bar.conj().T + np.trace(c @ theta_eff) * phi_eff


def expect_quad_left(h_bar, c, phi_eff, theta_eff):
    """``E[H^H C H] = H_bar^H C H_bar + Tr(Phi C) Theta``."""
    return h_bar.conj().T @ c @ h_bar + np.trace(phi_eff @ c) * theta_eff


def sample_effective_channels(h_bar, phi_eff, theta_eff, rng, draws=None):
    """Draw ``H_bar + Phi^{1/2} Delta Theta^{1/2}``; a stack when ``draws`` is given."""
    sp = psd_sqrt(phi_eff)
    st = psd_sqrt(theta_eff)
    shape = h_bar.shape if draws is None else (draws,) + h_bar.shape
    delta = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return h_bar + sp @ delta @ st


# ---------------------------------------------------------------------------
# averaged noise, MSE and receiver


def robust_noise_cov(h2_bar, gr_bb, wr_rf, wd_rf, stats: EffectiveErrorStats, sigma1, sigma2):
    """Forwarded relay noise plus destination noise, averaged over the second-hop error."""
    hg = h2_bar @ gr_bb @ wr_rf
    gw = gr_bb @ wr_rf
    relay = hg @ hg.conj().T + _tr(gw @ gw.conj().T, stats.theta2_eff) * stats.phi2_eff
    return hermitian_part(sigma1 ** 2 * relay + sigma2 ** 2 * (wd_rf @ wd_rf.conj().T))


class RobustRelayProblem(RelayProblem):
    """Baseband problem with every objective and constraint averaged over the CSI error.

    The relay power constraint is imposed on its average over the
    first-hop error.
    """

    def __init__(self, h1_bar, h2_bar, stage: RfStage, stats: EffectiveErrorStats,
                 cfg: SolverConfig):
        super().__init__(h1_bar, h2_bar, stage, cfg)
        self.stats = stats

    def relay_input_cov(self, f):
        # A1 + sigma1^2 Wr Wr^H
        base = super().relay_input_cov(f)
        return base + _tr(f @ f.conj().T, self.stats.theta1_eff) * self.stats.phi1_eff

    def total_noise(self, f, g):
        # (A - Hc Hc^H) + R_bar: everything except the estimated useful signal
        st = self.stats
        hg = self.h2 @ g
        f_spread = _tr(f @ f.conj().T, st.theta1_eff)
        q = self.relay_input_cov(f)
        extra = (
            f_spread * (hg @ st.phi1_eff @ hg.conj().T)
            + _tr(g @ q @ g.conj().T, st.theta2_eff) * st.phi2_eff
        )
        return hermitian_part(self.noise_cov(g) + extra)

    def _spread2(self, v, w):
        return _tr(self.stats.phi2_eff, w.conj().T @ v @ w)

    def relay_terms(self, v, w, f):
        k1, a = super().relay_terms(v, w, f)
        return hermitian_part(k1 + self._spread2(v, w) * self.stats.theta2_eff), a

    def source_terms(self, v, w, g):
        # nominal terms first so that zero statistics add exact zeros
        st = self.stats
        t1, c, t2 = super().source_terms(v, w, g)
        k1, _ = self.relay_terms(v, w, None)
        x = st.theta2_eff @ g @ self.h1
        t1 = (t1 + self._spread2(v, w) * (self.h1.conj().T @ g.conj().T @ x)
              + _tr(st.phi1_eff, g.conj().T @ k1 @ g) * st.theta1_eff)
        pg = g.conj().T @ self.n_rel @ g
        t2 = t2 + _tr(st.phi1_eff, pg) * st.theta1_eff
        return hermitian_part(t1), c, hermitian_part(t2)


def robust_terms(h1_bar, h2_bar, ft_bb, gr_bb, stage: RfStage, stats: EffectiveErrorStats,
                 sigma1, sigma2, wd=None, weight=None) -> RobustTerms:
    """All averaged matrices for one iterate.

    ``wd`` and ``weight`` default to the robust MMSE receiver and the weight
    ``E_avg^{-1} / ln 2`` it induces.
    """
    st = stats
    a1 = hermitian_part(expect_quad_right(h1_bar, ft_bb @ ft_bb.conj().T, st.phi1_eff, st.theta1_eff))
    hg = h2_bar @ gr_bb
    a = hermitian_part(hg @ a1 @ hg.conj().T + _tr(gr_bb @ a1 @ gr_bb.conj().T, st.theta2_eff) * st.phi2_eff)
    r_nbar = robust_noise_cov(h2_bar, gr_bb, stage.wr_rf, stage.wd_rf, st, sigma1, sigma2)
    hc = hg @ h1_bar @ ft_bb
    if wd is None:
        wd = hsolve(hermitian_part(a + r_nbar), hc, "average receive covariance").conj().T
    if weight is None:
        e = hermitian_part(np.eye(hc.shape[1]) - wd @ hc)
        weight = update_weight(e)
    wvw = wd.conj().T @ weight @ wd
    b = hermitian_part(expect_quad_left(h2_bar, wvw, st.phi2_eff, st.theta2_eff))
    gbg = gr_bb.conj().T @ b @ gr_bb
    t1 = hermitian_part(expect_quad_left(h1_bar, gbg, st.phi1_eff, st.theta1_eff))
    fg = stage.fr_rf @ gr_bb
    t2 = hermitian_part(expect_quad_left(h1_bar, fg.conj().T @ fg, st.phi1_eff, st.theta1_eff))
    # Jensen-type correction terms of the averaged information matrix
    rinv_trace2 = _tr(st.phi2_eff, hsolve(r_nbar, np.eye(r_nbar.shape[0]), "average noise covariance"))
    x = gr_bb @ h1_bar @ ft_bb
    b1 = hermitian_part(rinv_trace2 * (x.conj().T @ st.theta2_eff @ x))
    inner = hg.conj().T @ hsolve(r_nbar, hg, "average noise covariance") + rinv_trace2 * (
        gr_bb.conj().T @ st.theta2_eff @ gr_bb
    )
    b2 = hermitian_part(_tr(st.phi1_eff, inner) * (ft_bb.conj().T @ st.theta1_eff @ ft_bb))
    return RobustTerms(r_nbar=r_nbar, a1=a1, a=a, b=b, b1=b1, b2=b2, k1=b, k2=a1, t1=t1, t2=t2)


def _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb):
    return h2_bar @ gr_bb @ h1_bar @ ft_bb


def robust_wd_mmse(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms):
    """Receiver minimizing the averaged MSE: ``Hc^H (A + R)^{-1}``."""
    hc = _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb)
    return hsolve(hermitian_part(terms.a + terms.r_nbar), hc, "average receive covariance").conj().T


def robust_emmse(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms):
    """Averaged MMSE matrix ``I - Hc^H (A + R)^{-1} Hc``."""
    hc = _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb)
    y = hsolve(hermitian_part(terms.a + terms.r_nbar), hc, "average receive covariance")
    return hermitian_part(np.eye(hc.shape[1]) - hc.conj().T @ y)


def robust_mse(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms, wd):
    """Averaged MSE matrix ``W (A + R) W^H - W Hc - Hc^H W^H + I`` of any receiver."""
    hc = _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb)
    cross = wd @ hc
    return wd @ (terms.a + terms.r_nbar) @ wd.conj().T - cross - cross.conj().T + np.eye(hc.shape[1])


def robust_objective(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms) -> float:
    """``log2 det(E_avg^{-1})``, the quantity the robust alternation increases."""
    return -logdet2_pd(robust_emmse(h1_bar, h2_bar, ft_bb, gr_bb, terms), "average MMSE matrix")


def avg_mi_upper_bound(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms) -> float:
    """``log2 det(I + Hc^H R^{-1} Hc + B1 + B2)``.

    This is the information matrix with the channel-dependent part replaced
    by its average over both error terms, holding the averaged noise
    covariance fixed. It is never smaller than :func:`robust_objective`
    and coincides with it when the error statistics vanish.
    """
    hc = _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb)
    m = np.eye(hc.shape[1]) + hc.conj().T @ hsolve(terms.r_nbar, hc, "average noise covariance")
    return logdet2_pd(hermitian_part(m + terms.b1 + terms.b2), "averaged information matrix")


def robust_sic_model(h1_bar, h2_bar, ft_bb, gr_bb, terms: RobustTerms) -> SicModel:
    """SIC model on the estimated composite channel with everything else as noise."""
    hc = _estimated_composite(h1_bar, h2_bar, ft_bb, gr_bb)
    return SicModel(hc, hermitian_part(terms.a + terms.r_nbar - hc @ hc.conj().T))


# ---------------------------------------------------------------------------
# solver entry points


def robust_relay_filter(weight, ft_bb, h1_bar, h2_bar, wd_mmse, stage: RfStage,
                        stats: EffectiveErrorStats, cfg: SolverConfig):
    """Robust relay baseband filter; returns ``(gr_bb, lambda_r)``."""
    problem = RobustRelayProblem(h1_bar, h2_bar, stage, stats, cfg)
    g, lam, _ = problem.relay_step(weight, wd_mmse, ft_bb)
    return g, lam


def robust_source_precoder(weight, gr_bb, h1_bar, h2_bar, wd_mmse, stage: RfStage,
                           stats: EffectiveErrorStats, cfg: SolverConfig):
    """Robust source baseband precoder; returns ``(ft_bb, lambda_t1, lambda_t2)``."""
    problem = RobustRelayProblem(h1_bar, h2_bar, stage, stats, cfg)
    f, lam1, lam2, _ = problem.source_step(weight, wd_mmse, gr_bb)
    return f, lam1, lam2


def robust_wmmse_design(eff_est: EffectiveChannels, stage: RfStage, stats: EffectiveErrorStats,
                        ns: int, cfg: SolverConfig, weighting: str = "wmmse") -> BasebandSolution:
    """Robust counterpart of :func:`.wmmse.wmmse_design`.

    ``mutual_info_trace`` holds :func:`robust_objective` per iteration.
    """
    nrf = stage.n_rf
    if not 1 <= ns <= nrf:
        raise ValueError(f"need 1 <= ns <= n_rf, got ns={ns}, n_rf={nrf}")
    problem = RobustRelayProblem(eff_est.h1_eff, eff_est.h2_eff, stage, stats, cfg)
    return run_alternation(problem, ns, weighting)
