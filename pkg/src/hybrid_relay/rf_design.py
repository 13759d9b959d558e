"""Constant-modulus RF precoders and combiners by eigenmode phase compensation.

For each of the ``n_rf`` strongest eigenmodes ``sigma_i u_i v_i^H`` of a hop,
the phase-only vector with the largest projection on ``v_i`` (``u_i``) is the
one that copies the phase of every entry of ``v_i`` (``u_i``). The projection
then equals ``sum_m |v_i[m]| / sqrt(N)``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RankDeficiencyError",
    "SvdTriple",
    "RfStage",
    "EffectiveChannels",
    "truncated_svd",
    "phase_only",
    "build_rf_stage",
    "effective_channels",
]

RANK_RTOL = 1e-10


class RankDeficiencyError(ValueError):
    """More RF chains requested than the channel has usable eigenmodes."""


@dataclass(frozen=True)
class SvdTriple:
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        return (self.left * self.singulars) @ self.right.conj().T


@dataclass(frozen=True)
class RfStage:
    ft_rf: np.ndarray  # Nt x Nrf
    wr_rf: np.ndarray  # Nrf x Nr
    fr_rf: np.ndarray  # Nr x Nrf
    wd_rf: np.ndarray  # Nrf x Nd

    @property
    def n_rf(self):
        return self.ft_rf.shape[1]


@dataclass(frozen=True)
class EffectiveChannels:
    h1_eff: np.ndarray
    h2_eff: np.ndarray


def truncated_svd(h, k: int) -> SvdTriple:
    """Top-``k`` singular triple with a deterministic phase convention.

    Each right singular vector is rotated so that its largest-modulus entry
    (first one on ties) is real and nonnegative; the matching left vector is
    rotated by the same phase so that ``u v^H`` is unchanged.
    """
    h = np.asarray(h)
    if k < 1 or k > min(h.shape):
        raise ValueError(f"k={k} must lie in [1, {min(h.shape)}]")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    order = np.argsort(-s, kind="stable")[:k]
    u = u[:, order]
    s = s[order]
    v = vh.conj().T[:, order]
    pivot = np.argmax(np.abs(v), axis=0)
    ref = v[pivot, np.arange(k)]
    mag = np.abs(ref)
    rot = np.where(mag > 0, ref.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    return SvdTriple(u * rot, s, v * rot)


def phase_only(m) -> np.ndarray:
    """Unit-modulus copy of ``m`` scaled by ``1/sqrt(rows)``; zero entries get phase 0."""
    m = np.asarray(m)
    return np.exp(1j * np.angle(m)) / np.sqrt(m.shape[0])


def _modes(h, n_rf, name):
    s_all = np.linalg.svd(h, compute_uv=False)
    usable = int(np.sum(s_all > RANK_RTOL * s_all[0])) if s_all[0] > 0 else 0
    if n_rf > usable:
        raise RankDeficiencyError(
            f"{name} has {usable} numerically nonzero singular values "
            f"(> {RANK_RTOL:g} * sigma_max) but n_rf={n_rf} RF chains were requested"
        )
    return truncated_svd(h, n_rf)


def build_rf_stage(h1, h2, n_rf: int) -> RfStage:
    """Phase-compensating RF stage for both hops.

    ``h1`` is the ``Nr x Nt`` source-relay channel and ``h2`` the ``Nd x Nr``
    relay-destination channel.
    """
    if n_rf < 1:
        raise ValueError("n_rf must be >= 1")
    svd1 = _modes(np.asarray(h1), n_rf, "H1")
    svd2 = _modes(np.asarray(h2), n_rf, "H2")
    return RfStage(
        ft_rf=phase_only(svd1.right),
        wr_rf=phase_only(svd1.left).conj().T,
        fr_rf=phase_only(svd2.right),
        wd_rf=phase_only(svd2.left).conj().T,
    )


def effective_channels(stage: RfStage, h1, h2) -> EffectiveChannels:
    h1 = np.asarray(h1)
    h2 = np.asarray(h2)
    if h1.shape != (stage.wr_rf.shape[1], stage.ft_rf.shape[0]):
        raise ValueError(f"H1 shape {h1.shape} inconsistent with RF stage")
    if h2.shape != (stage.wd_rf.shape[1], stage.fr_rf.shape[0]):
        raise ValueError(f"H2 shape {h2.shape} inconsistent with RF stage")
    return EffectiveChannels(stage.wr_rf @ h1 @ stage.ft_rf, stage.wd_rf @ h2 @ stage.fr_rf)
