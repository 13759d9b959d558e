import math
import warnings

import numpy as np
import pytest
from scipy import optimize

from hybrid_relay._linalg import logdet2_pd
from hybrid_relay.rf_design import RfStage
from hybrid_relay.wmmse import (
    ConvergenceWarning,
    RelayProblem,
    SolverConfig,
    composite_channel,
    emmse,
    emmse_expanded,
    mmse_receiver,
    mutual_information,
    noise_cov_effective,
    relay_tx_power,
    solve_relay_filter,
    solve_source_precoder,
    source_tx_power,
    update_weight,
    wmmse_design,
)

from conftest import crandn, reference_instance, random_psd


def small_system(rng, nrf=4, ns=2, n_ant=(6, 5, 7)):
    nt, nr, nd = n_ant
    stage = RfStage(
        ft_rf=np.exp(2j * np.pi * rng.random((nt, nrf))) / np.sqrt(nt),
        wr_rf=np.exp(2j * np.pi * rng.random((nrf, nr))) / np.sqrt(nr),
        fr_rf=np.exp(2j * np.pi * rng.random((nr, nrf))) / np.sqrt(nr),
        wd_rf=np.exp(2j * np.pi * rng.random((nrf, nd))) / np.sqrt(nd),
    )
    h1 = crandn(rng, nrf, nrf)
    h2 = crandn(rng, nrf, nrf)
    f = crandn(rng, nrf, ns)
    g = crandn(rng, nrf, nrf)
    return stage, h1, h2, f, g


# ---------------------------------------------------------------------------
# noise, receiver, MSE and information


def test_noise_cov_without_relay_filter(rng):
    stage, h1, h2, f, g = small_system(rng)
    r = noise_cov_effective(h2, np.zeros_like(g), stage.wr_rf, stage.wd_rf, 0.7, 0.3)
    np.testing.assert_allclose(r, 0.09 * stage.wd_rf @ stage.wd_rf.conj().T, atol=1e-15)
    assert not np.any(noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.0, 0.0))


def test_noise_cov_is_psd(rng):
    stage, h1, h2, f, g = small_system(rng)
    r = noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.7, 0.3)
    assert np.abs(r - r.conj().T).max() <= 1e-12
    assert np.linalg.eigvalsh(r).min() >= -1e-10


def test_scalar_receiver_and_mse():
    one = np.ones((1, 1))
    g, r = 2.0, 0.5
    w = mmse_receiver(one, one, g * one, one, r * one)
    assert w.item() == pytest.approx(g / (g * g + r))
    assert emmse(one, one, g * one, one, r * one).item() == pytest.approx(1 / (1 + g * g / r))


def test_receiver_vanishes_in_noise(rng):
    stage, h1, h2, f, g = small_system(rng)
    w = mmse_receiver(h1, h2, f, g, 1e12 * np.eye(4))
    assert np.abs(w).max() < 1e-9


def test_receiver_matches_numerical_minimizer(rng):
    stage, h1, h2, f, g = small_system(rng)
    r = noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.8, 0.6)
    gc = composite_channel(h1, h2, f, g)
    ns, nrf = gc.shape[1], gc.shape[0]

    def mse(x):
        w = (x[: ns * nrf] + 1j * x[ns * nrf:]).reshape(ns, nrf)
        return np.real(np.trace(emmse_expanded(h1, h2, f, g, r, w)))

    def grad(x):
        w = (x[: ns * nrf] + 1j * x[ns * nrf:]).reshape(ns, nrf)
        d = 2.0 * (w @ (gc @ gc.conj().T + r) - gc.conj().T)
        return np.concatenate([d.real.ravel(), d.imag.ravel()])

    res = optimize.minimize(mse, np.zeros(2 * ns * nrf), jac=grad, method="BFGS",
                            options={"gtol": 1e-12, "maxiter": 10_000})
    w_num = (res.x[: ns * nrf] + 1j * res.x[ns * nrf:]).reshape(ns, nrf)
    np.testing.assert_allclose(w_num, mmse_receiver(h1, h2, f, g, r), atol=1e-6)


def test_emmse_forms_agree(rng):
    for _ in range(20):
        stage, h1, h2, f, g = small_system(rng, ns=4)
        r = noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.5, 0.4)
        e1 = emmse(h1, h2, f, g, r)
        e2 = emmse_expanded(h1, h2, f, g, r, mmse_receiver(h1, h2, f, g, r))
        assert np.linalg.norm(e1 - e2) <= 1e-10 * np.linalg.norm(e1)


def test_emmse_without_signal_is_identity(rng):
    stage, h1, h2, f, g = small_system(rng)
    r = noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.5, 0.4)
    np.testing.assert_allclose(emmse(h1, h2, np.zeros_like(f), g, r), np.eye(2), atol=1e-15)


def test_mutual_information_examples(rng):
    assert mutual_information(np.eye(3)) == 0.0
    assert mutual_information(np.diag([0.5, 0.5])) == pytest.approx(2.0, abs=1e-14)
    stage, h1, h2, f, g = small_system(rng)
    r = noise_cov_effective(h2, g, stage.wr_rf, stage.wd_rf, 0.5, 0.4)
    gc = composite_channel(h1, h2, f, g)
    want = logdet2_pd(np.eye(2) + gc.conj().T @ np.linalg.solve(r, gc))
    assert mutual_information(emmse(h1, h2, f, g, r)) == pytest.approx(want, abs=1e-10)


def test_update_weight(rng):
    np.testing.assert_allclose(update_weight(np.eye(2)), np.eye(2) / math.log(2))
    np.testing.assert_allclose(update_weight(2 * np.eye(2)), np.eye(2) / (2 * math.log(2)))
    e = random_psd(rng, 4) + 0.1 * np.eye(4)
    np.testing.assert_allclose(update_weight(e) @ e, np.eye(4) / math.log(2), atol=1e-12)
    with pytest.raises(ValueError):
        update_weight(-np.eye(2))


def test_relay_power_zero_cases(rng):
    stage, h1, h2, f, g = small_system(rng)
    assert relay_tx_power(np.zeros_like(g), stage.fr_rf, h1, f, stage.wr_rf, 0.5) == 0.0
    assert relay_tx_power(g, stage.fr_rf, h1, np.zeros_like(f), stage.wr_rf, 0.0) == 0.0


def test_relay_power_matches_monte_carlo(rng):
    stage, h1, h2, f, g = small_system(rng)
    sigma1 = 0.8
    n = 100_000
    s = crandn(rng, 2, n)
    noise = sigma1 * crandn(rng, stage.wr_rf.shape[1], n)
    x = stage.fr_rf @ g @ (h1 @ f @ s + stage.wr_rf @ noise)
    mc = np.mean(np.sum(np.abs(x) ** 2, axis=0))
    assert relay_tx_power(g, stage.fr_rf, h1, f, stage.wr_rf, sigma1) == pytest.approx(mc, rel=0.02)


# ---------------------------------------------------------------------------
# constrained filter updates


def cfg_for(et, er, s1=0.5, s2=0.5, **kw):
    return SolverConfig(power_source=et, power_relay=er, sigma1=s1, sigma2=s2, **kw)


def test_relay_filter_inactive_constraint(rng):
    stage, h1, h2, f, g = small_system(rng)
    cfg = cfg_for(1.0, 1e9)
    problem = RelayProblem(h1, h2, RfStage(np.eye(4), stage.wr_rf, stage.fr_rf, np.eye(4)), cfg)
    w, e, _ = problem.receiver(f, g)
    v = update_weight(e)
    g_new, lam = solve_relay_filter(v, f, h1, h2, w, stage.fr_rf, stage.wr_rf, cfg)
    assert lam == 0.0
    # unconstrained stationarity: K1 G Q = (H2^H W^H V ...)^H terms
    a = w @ h2
    q = problem.relay_input_cov(f)
    lhs = a.conj().T @ v @ a @ g_new @ q
    rhs = (h1 @ f @ v @ a).conj().T
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * np.abs(rhs).max())


@pytest.mark.parametrize("er", [1e-3, 10.0])
def test_relay_filter_scalar_oracle(er):
    h1, h2, f, w, v, fr, wr = 1.3 + 0.2j, 0.7 - 0.4j, 0.9, 0.6 + 0.1j, 1.7, 1.0, 1.0
    s1, s2 = 0.4, 0.3
    cfg = cfg_for(1.0, er, np.sqrt(s1), np.sqrt(s2))
    m = lambda z: np.array([[z]], dtype=complex)
    g, lam = solve_relay_filter(m(v), m(f), m(h1), m(h2), m(w), m(fr), m(wr), cfg)
    c = v * w * h2 * h1 * f
    q = abs(h1 * f) ** 2 + s1 * abs(wr) ** 2
    k1 = v * abs(w * h2) ** 2
    mag = min(abs(c) / (q * k1), np.sqrt(er / (q * abs(fr) ** 2)))
    assert g.item() == pytest.approx(np.conj(c) / abs(c) * mag, rel=1e-9)
    assert (lam > 0) == (er == 1e-3)


def test_relay_filter_binding_budget(rng):
    stage, h1, h2, f, g = small_system(rng)
    cfg = cfg_for(1.0, 0.05)
    problem = RelayProblem(h1, h2, RfStage(np.eye(4), stage.wr_rf, stage.fr_rf, np.eye(4)), cfg)
    w, e, _ = problem.receiver(f, g)
    g_new, lam = solve_relay_filter(update_weight(e), f, h1, h2, w, stage.fr_rf, stage.wr_rf, cfg)
    assert lam > 0
    p = relay_tx_power(g_new, stage.fr_rf, h1, f, stage.wr_rf, cfg.sigma1)
    assert 0.05 * (1 - 1e-6) <= p <= 0.05 * (1 + 1e-6)


def source_case(rng, et, er):
    stage, h1, h2, f, g = small_system(rng)
    cfg = cfg_for(et, er, 0.3, 0.3)
    problem = RelayProblem(h1, h2, stage, cfg)
    g = 0.3 * g
    w, e, _ = problem.receiver(f, g)
    v = update_weight(e)
    f_new, l1, l2 = solve_source_precoder(v, g, h1, h2, w, stage.ft_rf, stage.fr_rf, stage.wr_rf, cfg)
    pt = source_tx_power(stage.ft_rf, f_new)
    pr = relay_tx_power(g, stage.fr_rf, h1, f_new, stage.wr_rf, cfg.sigma1)
    return f_new, l1, l2, pt, pr, (v, w, g, h1, h2, stage, cfg)


def test_source_precoder_unconstrained(rng):
    f_new, l1, l2, pt, pr, (v, w, g, h1, h2, stage, cfg) = source_case(rng, 1e9, 1e9)
    assert l1 == 0.0 and l2 == 0.0
    c = w @ h2 @ g @ h1
    np.testing.assert_allclose(c.conj().T @ v @ c @ f_new, c.conj().T @ v, atol=1e-8)


def test_source_precoder_only_source_binding(rng):
    f_new, l1, l2, pt, pr, _ = source_case(rng, 0.01, 1e9)
    assert l2 == 0.0 and l1 > 0
    assert pt == pytest.approx(0.01, rel=1e-6)


def test_source_precoder_both_binding(rng):
    _, _, _, pt0, pr0, _ = source_case(np.random.default_rng(5), 1e9, 1e9)
    f_new, l1, l2, pt, pr, _ = source_case(np.random.default_rng(5), 0.5 * pt0, 0.5 * pr0)
    # halving both budgets of the unconstrained solution makes both bind
    assert l1 > 0 and l2 > 0
    assert pt == pytest.approx(0.5 * pt0, rel=1e-6)
    assert pr == pytest.approx(0.5 * pr0, rel=1e-6)


def test_bisection_and_brent_agree():
    _, _, _, pt0, pr0, _ = source_case(np.random.default_rng(5), 1e9, 1e9)
    out = []
    for method in ("brent", "bisection"):
        stage, h1, h2, f, g = small_system(np.random.default_rng(5))
        cfg = cfg_for(0.5 * pt0, 0.5 * pr0, 0.3, 0.3, root_method=method)
        problem = RelayProblem(h1, h2, stage, cfg)
        w, e, _ = problem.receiver(f, 0.3 * g)
        out.append(solve_source_precoder(update_weight(e), 0.3 * g, h1, h2, w, stage.ft_rf, stage.fr_rf,
                                         stage.wr_rf, cfg)[0])
    np.testing.assert_allclose(out[0], out[1], rtol=1e-6, atol=1e-8)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        cfg_for(-1.0, 1.0)
    with pytest.raises(ValueError):
        cfg_for(1.0, 1.0, root_method="newton")


# ---------------------------------------------------------------------------
# full alternation


def test_initial_point_is_feasible():
    _, _, stage, eff, cfg = reference_instance(3)
    problem = RelayProblem(eff.h1_eff, eff.h2_eff, stage, cfg)
    f, g = problem.initial(4)
    pt, pr = problem.powers(f, g)
    assert pt == pytest.approx(cfg.power_source, rel=1e-12)
    assert pr == pytest.approx(cfg.power_relay, rel=1e-12)
    np.testing.assert_allclose(f / f[0, 0], np.eye(6, 4), atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_design_improves_and_respects_budgets(seed):
    _, _, stage, eff, cfg = reference_instance(seed, snr_db=0.0)
    sol = wmmse_design(eff, stage, 4, cfg)
    assert sol.converged
    assert sol.mutual_info_trace[-1] >= sol.mutual_info_trace[1]
    assert np.all(np.diff(sol.surrogate_trace) <= 1e-9)
    pt = source_tx_power(stage.ft_rf, sol.ft_bb)
    pr = relay_tx_power(sol.gr_bb, stage.fr_rf, eff.h1_eff, sol.ft_bb, stage.wr_rf, cfg.sigma1)
    assert pt <= cfg.power_source * (1 + 1e-6)
    assert pr <= cfg.power_relay * (1 + 1e-6)


def test_mmse_weighting_keeps_identity_weight():
    _, _, stage, eff, cfg = reference_instance(1, snr_db=0.0)
    sol = wmmse_design(eff, stage, 4, cfg, weighting="mmse")
    assert len(sol.mutual_info_trace) >= 2
    with pytest.raises(ValueError):
        wmmse_design(eff, stage, 4, cfg, weighting="other")


def test_nonconvergence_warns_and_returns_best():
    _, _, stage, eff, cfg = reference_instance(2, snr_db=10.0, max_outer_iters=3)
    with pytest.warns(ConvergenceWarning):
        sol = wmmse_design(eff, stage, 4, cfg)
    assert not sol.converged and sol.iterations == 3
    problem = RelayProblem(eff.h1_eff, eff.h2_eff, stage, cfg)
    assert problem.receiver(sol.ft_bb, sol.gr_bb)[2] == pytest.approx(max(sol.mutual_info_trace), abs=1e-12)


def test_stream_count_validated():
    _, _, stage, eff, cfg = reference_instance(0)
    with pytest.raises(ValueError, match="ns"):
        wmmse_design(eff, stage, 7, cfg)
