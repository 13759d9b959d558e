"""MMSE successive interference cancellation at the destination.

Streams are decoded one after another. Before stream ``k`` is decoded, the
already decoded streams are subtracted, so the filter only has to suppress the
streams that are still undecoded plus the colored noise::

    w_k^H = g_k^H (sum_{j >= k} g_j g_j^H + R)^{-1}
    r_k   = log2(1 + g_k^H (sum_{j > k} g_j g_j^H + R)^{-1} g_k)

By the chain rule of mutual information the stream rates add up to
``log2 det(I + G^H R^{-1} G)`` for every decoding order.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._linalg import hermitian_part, hsolve
from .rf_design import EffectiveChannels, RfStage
from .wmmse import BasebandSolution, SolverConfig, composite_channel, noise_cov_effective

__all__ = ["SicModel", "SicResult", "sic_filters", "destination_rate"]


@dataclass(frozen=True)
class SicModel:
    """Received baseband model ``y = G s + v`` with ``v ~ CN(0, noise_cov)``."""

    composite: np.ndarray  # Nrf x Ns
    noise_cov: np.ndarray  # Nrf x Nrf

    def __post_init__(self):
        g = np.asarray(self.composite)
        r = np.asarray(self.noise_cov)
        if g.ndim != 2 or r.shape != (g.shape[0], g.shape[0]):
            raise ValueError(
                f"noise covariance shape {r.shape} does not match composite shape {g.shape}"
            )
        if not np.allclose(r, r.conj().T, rtol=1e-10, atol=1e-12 * max(np.abs(r).max(), 1.0)):
            raise ValueError("noise covariance must be Hermitian")


@dataclass(frozen=True)
class SicResult:
    filters: tuple  # one length-Nrf row vector per stream, indexed by stream
    stream_rates: np.ndarray  # bits, indexed by stream
    sum_rate: float
    order: tuple

    @property
    def stacked(self):
        """The filters as an ``Ns x Nrf`` matrix (row ``k`` decodes stream ``k``)."""
        return np.vstack(self.filters)


def sic_filters(model: SicModel, order: Optional[Sequence[int]] = None) -> SicResult:
    """Per-stream MMSE-SIC filters and rates.

    Parameters
    ----------
    model : SicModel
    order : sequence of int, optional
        Decoding order (a permutation of ``range(Ns)``); natural order by
        default.

    Returns
    -------
    SicResult
        Filters and rates are indexed by stream, not by decoding position.
    """
    g = np.asarray(model.composite, dtype=complex)
    r = hermitian_part(np.asarray(model.noise_cov, dtype=complex))
    ns = g.shape[1]
    order = tuple(range(ns)) if order is None else tuple(int(k) for k in order)
    if sorted(order) != list(range(ns)):
        raise ValueError(f"order must be a permutation of range({ns}), got {order}")

    filters = [None] * ns
    rates = np.zeros(ns)
    # residual covariance of the streams still undecoded, built from the back
    resid = r.copy()
    resid_after = [None] * ns
    for pos in range(ns - 1, -1, -1):
        resid_after[pos] = resid.copy()
        gk = g[:, order[pos]]
        resid = resid + np.outer(gk, gk.conj())
    for pos, k in enumerate(order):
        gk = g[:, k]
        interf = resid_after[pos]
        full = hermitian_part(interf + np.outer(gk, gk.conj()))
        filters[k] = hsolve(full, gk, f"covariance before decoding stream {k}").conj()
        sinr = np.real(np.vdot(gk, hsolve(interf, gk, f"residual covariance of stream {k}")))
        rates[k] = np.log2(1.0 + max(sinr, 0.0))
    return SicResult(tuple(filters), rates, float(rates.sum()), order)


def destination_rate(solution: BasebandSolution, eff: EffectiveChannels, stage: RfStage,
                     cfg: SolverConfig) -> float:
    """Half-duplex rate ``I / 2`` of a baseband design, with ``I`` from MMSE-SIC."""
    g = composite_channel(eff.h1_eff, eff.h2_eff, solution.ft_bb, solution.gr_bb)
    r = noise_cov_effective(eff.h2_eff, solution.gr_bb, stage.wr_rf, stage.wd_rf, cfg.sigma1, cfg.sigma2)
    return 0.5 * sic_filters(SicModel(g, r)).sum_rate
