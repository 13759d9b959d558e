"""Clustered mmWave channel realizations and imperfect-CSI pairs.

Channels follow the sparse geometric model

    H = sqrt(Nt * Nr / (L * Ncl)) * sum_{l, n} alpha_{l,n} a_r(phi_r) a_t(phi_t)^H

with unit-variance circular Gaussian gains and angles uniform on [0, 2*pi).
Arrays are uniform linear arrays; elevation angles are accepted for
interface compatibility but a ULA response depends only on azimuth.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._linalg import psd_sqrt

__all__ = [
    "ArrayGeometry",
    "PathSet",
    "ChannelRealization",
    "ErrorModel",
    "CsiPair",
    "trial_rng",
    "ula_response",
    "array_responses",
    "draw_simple_channel",
    "draw_clustered_channel",
    "exp_correlation",
    "make_csi_pair",
]


@dataclass(frozen=True)
class ArrayGeometry:
    element_count: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if int(self.element_count) != self.element_count or self.element_count < 1:
            raise ValueError(f"element_count must be a positive integer, got {self.element_count}")
        if not self.spacing_over_wavelength > 0:
            raise ValueError("spacing_over_wavelength must be positive")


@dataclass(frozen=True)
class PathSet:
    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        n = len(self.gains)
        if n < 1 or len(self.aoa) != n or len(self.aod) != n:
            raise ValueError("gains, aoa and aod must share a length >= 1")

    def __len__(self):
        return len(self.gains)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    paths: PathSet
    geometry_tx: ArrayGeometry
    geometry_rx: ArrayGeometry

    def __post_init__(self):
        expected = (self.geometry_rx.element_count, self.geometry_tx.element_count)
        if self.h.shape != expected:
            raise ValueError(f"channel shape {self.h.shape} does not match geometries {expected}")


@dataclass(frozen=True)
class ErrorModel:
    """Exponential Kronecker model for channel-estimation errors.

    Receive correlation ``Phi(i, j) = sigma_e2 * beta**|i-j|`` and transmit
    correlation ``Theta(i, j) = alpha**|i-j|``.
    """

    sigma_e2: float
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.sigma_e2 < 0:
            raise ValueError("sigma_e2 must be nonnegative")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    def receive_correlation(self, n):
        return exp_correlation(n, self.beta, self.sigma_e2)

    def transmit_correlation(self, n):
        return exp_correlation(n, self.alpha, 1.0)


@dataclass(frozen=True)
class CsiPair:
    true_channel: np.ndarray
    estimated_channel: np.ndarray
    phi: np.ndarray
    theta: np.ndarray


def trial_rng(seed, *keys):
    """Counter-based generator for the stream identified by ``(seed, *keys)``.

    Streams for different keys are statistically independent, so a Monte-Carlo
    trial draws the same numbers no matter which worker runs it.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def _as_geometry(g):
    return g if isinstance(g, ArrayGeometry) else ArrayGeometry(int(g))


def ula_response(phi, geometry, elevation=None):
    """Unit-norm ULA response ``[1, e^{j k d sin(phi)}, ...] / sqrt(N)``.

    ``elevation`` is ignored (a linear array has no elevation resolution).
    """
    geometry = _as_geometry(geometry)
    n = np.arange(geometry.element_count)
    kd = 2.0 * np.pi * geometry.spacing_over_wavelength
    return np.exp(1j * kd * np.sin(phi) * n) / np.sqrt(geometry.element_count)


def array_responses(angles, geometry):
    """Columns ``a(angles[l])`` stacked into an ``N x L`` matrix."""
    geometry = _as_geometry(geometry)
    n = np.arange(geometry.element_count)[:, None]
    kd = 2.0 * np.pi * geometry.spacing_over_wavelength
    return np.exp(1j * kd * n * np.sin(np.asarray(angles))[None, :]) / np.sqrt(geometry.element_count)


def _cn(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def _geometries(nt, nr, geometry_tx, geometry_rx):
    gt = geometry_tx if geometry_tx is not None else ArrayGeometry(nt)
    gr = geometry_rx if geometry_rx is not None else ArrayGeometry(nr)
    if gt.element_count != nt or gr.element_count != nr:
        raise ValueError("geometry element counts must match nt and nr")
    return gt, gr


def draw_simple_channel(
    nt: int,
    nr: int,
    paths: int,
    rng: np.random.Generator,
    geometry_tx: Optional[ArrayGeometry] = None,
    geometry_rx: Optional[ArrayGeometry] = None,
) -> ChannelRealization:
    """One path per scatterer: ``H = sqrt(Nt Nr / L) A_r diag(alpha) A_t^H``."""
    if paths < 1:
        raise ValueError("paths must be >= 1")
    gt, gr = _geometries(nt, nr, geometry_tx, geometry_rx)
    aoa = rng.uniform(0.0, 2.0 * np.pi, paths)
    aod = rng.uniform(0.0, 2.0 * np.pi, paths)
    gains = _cn(rng, paths)
    a_r = array_responses(aoa, gr)
    a_t = array_responses(aod, gt)
    h = np.sqrt(nt * nr / paths) * (a_r * gains) @ a_t.conj().T
    return ChannelRealization(h, PathSet(gains, aoa, aod), gt, gr)


def draw_clustered_channel(
    nt: int,
    nr: int,
    scatters: int,
    rays_per_scatter: int,
    rng: np.random.Generator,
    geometry_tx: Optional[ArrayGeometry] = None,
    geometry_rx: Optional[ArrayGeometry] = None,
) -> ChannelRealization:
    """Clustered model with ``rays_per_scatter`` independent rays per scatterer.

    Every ray draws its own angles; the returned :class:`PathSet` is the
    flattened list of all ``scatters * rays_per_scatter`` rays.
    """
    if scatters < 1 or rays_per_scatter < 1:
        raise ValueError("scatters and rays_per_scatter must be >= 1")
    gt, gr = _geometries(nt, nr, geometry_tx, geometry_rx)
    total = scatters * rays_per_scatter
    aoa = rng.uniform(0.0, 2.0 * np.pi, total)
    aod = rng.uniform(0.0, 2.0 * np.pi, total)
    gains = _cn(rng, total)
    a_r = array_responses(aoa, gr)
    a_t = array_responses(aod, gt)
    h = np.sqrt(nt * nr / total) * (a_r * gains) @ a_t.conj().T
    return ChannelRealization(h, PathSet(gains, aoa, aod), gt, gr)


def exp_correlation(n: int, coeff: float, scale: float = 1.0) -> np.ndarray:
    """``M(i, j) = scale * coeff**|i - j|``."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1), got {coeff}")
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    idx = np.arange(n)
    lag = np.abs(idx[:, None] - idx[None, :])
    # 0**0 == 1 keeps the diagonal for coeff == 0
    return (scale * np.power(float(coeff), lag)).astype(complex)


def make_csi_pair(true_channel, phi, theta, rng) -> CsiPair:
    """Draw an estimate ``H_est = H - Phi^{1/2} Delta Theta^{1/2}``."""
    h = true_channel.h if isinstance(true_channel, ChannelRealization) else np.asarray(true_channel)
    phi = np.asarray(phi)
    theta = np.asarray(theta)
    nr, nt = h.shape
    if phi.shape != (nr, nr) or theta.shape != (nt, nt):
        raise ValueError(
            f"correlation shapes {phi.shape}, {theta.shape} do not match channel {h.shape}"
        )
    delta = _cn(rng, (nr, nt))
    err = psd_sqrt(phi) @ delta @ psd_sqrt(theta)
    return CsiPair(h, h - err, phi, theta)
