"""Small dense linear-algebra helpers shared by the solvers."""

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


class NumericalError(RuntimeError):
    """Raised when a factorization or multiplier search cannot proceed."""


def hermitian_part(a):
    return 0.5 * (a + a.conj().T)


def ctrace(a, b):
    """Tr(a @ b) without forming the product."""
    return np.einsum("ij,ji->", a, b)


def psd_sqrt(m):
    """Hermitian square root with negative eigenvalues clamped to zero."""
    m = np.asarray(m)
    if not np.any(m):
        return np.zeros_like(m, dtype=complex)
    w, u = np.linalg.eigh(hermitian_part(m))
    w = np.clip(w, 0.0, None)
    return (u * np.sqrt(w)) @ u.conj().T


def cholesky(a, what="matrix"):
    """Cholesky factor of a Hermitian matrix with a one-shot ridge fallback.

    If the plain factorization fails a ridge of ``1e-12 * trace / n`` is added
    and the event is logged. A second failure raises :class:`NumericalError`.
    """
    a = hermitian_part(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        n = a.shape[0]
        scale = np.trace(a).real
        if not scale > 0:
            raise NumericalError(f"{what} is not positive definite (zero or negative trace)")
        ridge = 1e-12 * scale / n
        logger.info("cholesky of %s failed, retrying with ridge %.3g", what, ridge)
        try:
            return np.linalg.cholesky(a + ridge * np.eye(n))
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(a)
            raise NumericalError(
                f"{what} is not positive definite (condition number {cond:.3g})"
            ) from exc


def hsolve(a, b, what="matrix"):
    """Solve ``a x = b`` for Hermitian positive definite ``a``."""
    low = cholesky(a, what)
    y = np.linalg.solve(low, b)
    return np.linalg.solve(low.conj().T, y)


def logdet2_pd(a, what="matrix"):
    """log2 det of a Hermitian positive definite matrix; rejects non-PD input."""
    a = hermitian_part(np.asarray(a, dtype=complex))
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} is not positive definite") from exc
    return 2.0 * float(np.sum(np.log2(np.abs(np.diag(low)))))


class Pencil:
    """Parametric solutions ``x(lam) = (k + lam * n)^{-1} r`` for a PD pencil.

    ``k`` is Hermitian PSD and ``n`` Hermitian PD. With ``n = L L^H`` and
    ``L^{-1} k L^{-H} = U diag(mu) U^H`` the solution is
    ``L^{-H} U diag(1 / (mu + lam)) U^H L^{-1} r``, so any quadratic form of
    ``x`` becomes a cheap scalar function of ``lam``. At ``lam == 0`` the
    directions with (numerically) zero ``mu`` are dropped, giving the
    minimum-norm minimizer in the metric of ``n``.
    """

    null_rtol = 1e-10

    def __init__(self, k, n, r, what="pencil"):
        low = cholesky(n, what)
        linv = np.linalg.inv(low)
        self._setup(hermitian_part(linv @ k @ linv.conj().T), linv, linv @ r)

    def _setup(self, m, linv, linv_r):
        mu, u = np.linalg.eigh(m)
        self.mu = np.clip(mu, 0.0, None)
        self.null = self.mu <= self.null_rtol * max(self.mu[-1], 0.0)
        self._mu_list = self.mu.tolist()
        self._null_list = self.null.tolist()
        self.basis = linv.conj().T @ u  # L^{-H} U
        self.coef = u.conj().T @ linv_r
        self._linv_u = self.basis

    @classmethod
    def family(cls, k0, k1, n, r, what="pencil"):
        """Factory ``t -> Pencil(k0 + t * k1, n, r)`` sharing one factorization of ``n``."""
        low = cholesky(n, what)
        linv = np.linalg.inv(low)
        m0 = linv @ k0 @ linv.conj().T
        m1 = linv @ k1 @ linv.conj().T
        linv_r = linv @ r

        def make(t):
            obj = cls.__new__(cls)
            obj._setup(hermitian_part(m0 + t * m1), linv, linv_r)
            return obj

        return make

    def gains(self, lam):
        if lam == 0.0:
            with np.errstate(divide="ignore"):
                d = np.where(self.null, 0.0, 1.0 / np.where(self.null, 1.0, self.mu))
            return d
        return 1.0 / (self.mu + lam)

    def solution(self, lam):
        return self.basis @ (self.gains(lam)[:, None] * self.coef)

    def transformed(self, p):
        """``U^H L^{-1} p L^{-H} U`` for use with :meth:`quad`."""
        return self._linv_u.conj().T @ p @ self._linv_u

    def row_norms(self):
        """Squared row norms of the transformed right-hand side, as a list."""
        c = self.coef
        return (np.einsum("ij,ij->i", c.real, c.real) + np.einsum("ij,ij->i", c.imag, c.imag)).tolist()

    def norm2(self, lam, w):
        """``||x(lam)||^2`` in the metric of ``n`` given ``w = row_norms()``.

        Scalar arithmetic on plain floats: this sits in the innermost loop of
        the multiplier searches, where array overhead would dominate.
        """
        if lam == 0.0:
            return sum(wi / (m * m) for wi, m, nl in zip(w, self._mu_list, self._null_list) if not nl)
        return sum(wi / ((m + lam) * (m + lam)) for wi, m in zip(w, self._mu_list))

    def quad(self, lam, p_t, s):
        """``Tr(D p_t D s)`` with ``D = diag(gains(lam))``; both Hermitian."""
        d = self.gains(lam)
        return float(np.real(d @ (p_t * s.T) @ d))
