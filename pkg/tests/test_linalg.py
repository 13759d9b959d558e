import numpy as np
import pytest

from hybrid_relay._linalg import NumericalError, Pencil, cholesky, hsolve, logdet2_pd, psd_sqrt

from conftest import crandn, random_psd


def test_psd_sqrt_squares_back(rng):
    m = random_psd(rng, 5, 3)
    s = psd_sqrt(m)
    np.testing.assert_allclose(s @ s, m, atol=1e-12)
    np.testing.assert_allclose(s, s.conj().T, atol=1e-14)


def test_hsolve_matches_dense_solve(rng):
    a = random_psd(rng, 6) + np.eye(6)
    b = crandn(rng, 6, 2)
    np.testing.assert_allclose(hsolve(a, b), np.linalg.solve(a, b), rtol=1e-10, atol=1e-12)


def test_logdet2_of_diagonal():
    assert logdet2_pd(np.diag([2.0, 4.0])) == pytest.approx(3.0, abs=1e-14)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NumericalError, match="test matrix"):
        cholesky(np.diag([1.0, -1.0]), "test matrix")


def test_pencil_solution_matches_direct_solve(rng):
    k = random_psd(rng, 5, 3)
    n = random_psd(rng, 5) + 0.1 * np.eye(5)
    r = crandn(rng, 5, 2)
    p = Pencil(k, n, r)
    for lam in (1e-3, 0.5, 7.0):
        direct = np.linalg.solve(k + lam * n, r)
        np.testing.assert_allclose(p.solution(lam), direct, rtol=1e-8, atol=1e-10)
        x = direct
        want = np.real(np.trace(x.conj().T @ n @ x))
        assert p.norm2(lam, p.row_norms()) == pytest.approx(want, rel=1e-9)


def test_pencil_zero_multiplier_gives_min_norm_solution(rng):
    # K singular: at lam = 0 the components in its null space are dropped
    u = np.linalg.qr(crandn(rng, 4, 4))[0]
    k = u[:, :2] @ np.diag([3.0, 1.0]) @ u[:, :2].conj().T
    r = k @ crandn(rng, 4, 1)
    x = Pencil(k, np.eye(4), r).solution(0.0)
    np.testing.assert_allclose(x, np.linalg.pinv(k) @ r, atol=1e-10)


def test_pencil_family_matches_fresh_pencil(rng):
    k0 = random_psd(rng, 4)
    k1 = random_psd(rng, 4) + np.eye(4)
    n = random_psd(rng, 4) + np.eye(4)
    r = crandn(rng, 4, 2)
    make = Pencil.family(k0, k1, n, r)
    for t in (0.0, 0.3, 4.0):
        fresh = Pencil(k0 + t * k1, n, r)
        np.testing.assert_allclose(make(t).solution(0.7), fresh.solution(0.7), rtol=1e-9, atol=1e-11)
