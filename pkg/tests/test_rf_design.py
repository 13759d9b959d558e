import numpy as np
import pytest

from hybrid_relay.channel import draw_simple_channel, trial_rng
from hybrid_relay.rf_design import (
    RankDeficiencyError,
    RfStage,
    build_rf_stage,
    effective_channels,
    phase_only,
    truncated_svd,
)

from conftest import crandn


def test_svd_of_identity():
    t = truncated_svd(np.eye(3), 2)
    np.testing.assert_allclose(t.singulars, [1.0, 1.0])
    np.testing.assert_allclose(t.left, np.eye(3)[:, :2], atol=1e-15)
    np.testing.assert_allclose(t.right, np.eye(3)[:, :2], atol=1e-15)


def test_svd_of_diagonal():
    np.testing.assert_allclose(truncated_svd(np.diag([3.0, 1.0]), 1).singulars, [3.0])


def test_full_svd_reconstructs(rng):
    h = crandn(rng, 8, 6)
    assert np.linalg.norm(truncated_svd(h, 6).reconstruct() - h) <= 1e-10


def test_svd_phase_convention(rng):
    t = truncated_svd(crandn(rng, 6, 5), 3)
    pivots = t.right[np.argmax(np.abs(t.right), axis=0), np.arange(3)]
    np.testing.assert_allclose(pivots.imag, 0.0, atol=1e-15)
    assert np.all(pivots.real > 0)


def test_phase_only_examples(rng):
    np.testing.assert_allclose(phase_only(np.array([[1.0, 2.0], [3.0, 0.5]])), np.full((2, 2), 1 / np.sqrt(2)))
    np.testing.assert_allclose(phase_only(1j * np.ones((4, 3))), np.full((4, 3), 0.5j), atol=1e-15)
    out = phase_only(crandn(rng, 7, 3))
    np.testing.assert_allclose(np.abs(out), 1 / np.sqrt(7), rtol=1e-12)


def test_projection_closed_form_with_dft_modes():
    n = 4
    dft = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
    h1 = dft @ np.diag([4.0, 3.0, 2.0, 1.0]) @ dft.conj().T
    h2 = np.eye(n)
    stage = build_rf_stage(h1, h2, 2)
    svd = truncated_svd(h1, 2)
    for i in range(2):
        u, v = svd.left[:, i], svd.right[:, i]
        got = abs(stage.wr_rf[i] @ np.outer(u, v.conj()) @ stage.ft_rf[:, i])
        want = np.sum(np.abs(u)) / np.sqrt(n) * np.sum(np.abs(v)) / np.sqrt(n)
        assert got == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(1.0, abs=1e-12)


def test_rank_one_channel_single_chain():
    a = np.full(4, 0.5)
    h = 3.0 * np.outer(a, a)
    stage = build_rf_stage(h, h, 1)
    assert abs(stage.wr_rf @ h @ stage.ft_rf).item() > 0


def test_too_many_chains_rejected():
    h = draw_simple_channel(16, 16, 3, trial_rng(0)).h
    with pytest.raises(RankDeficiencyError, match="n_rf=4"):
        build_rf_stage(h, h, 4)


def test_stage_shapes_at_reference_dims():
    rng = trial_rng(4)
    h1 = draw_simple_channel(64, 32, 20, rng).h
    h2 = draw_simple_channel(32, 48, 20, rng).h
    stage = build_rf_stage(h1, h2, 6)
    assert stage.ft_rf.shape == (64, 6) and stage.wr_rf.shape == (6, 32)
    assert stage.fr_rf.shape == (32, 6) and stage.wd_rf.shape == (6, 48)
    eff = effective_channels(stage, h1, h2)
    assert eff.h1_eff.shape == (6, 6) and eff.h2_eff.shape == (6, 6)
    for m in (stage.ft_rf, stage.wr_rf, stage.fr_rf, stage.wd_rf):
        np.testing.assert_allclose(np.abs(m), np.abs(m).flat[0], rtol=1e-12)


def test_scalar_toy_effective_channel():
    stage = RfStage(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    eff = effective_channels(stage, np.array([[2.0]]), np.array([[3.0]]))
    assert eff.h1_eff.item() == 2.0 and eff.h2_eff.item() == 3.0


def test_effective_channel_shape_mismatch():
    stage = RfStage(np.ones((4, 1)), np.ones((1, 3)), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError, match="H1 shape"):
        effective_channels(stage, np.ones((4, 4)), np.ones((2, 3)))


def test_large_arrays_make_effective_channel_nearly_diagonal():
    # distinct path directions become orthogonal as the arrays grow
    ratios = []
    for t in range(20):
        rng = trial_rng(11, t)
        h1 = draw_simple_channel(256, 256, 8, rng).h
        stage = build_rf_stage(h1, h1, 4)
        m = np.abs(effective_channels(stage, h1, h1).h1_eff) ** 2
        ratios.append((m.sum() - np.trace(m)) / np.trace(m))
    assert np.mean(ratios) < 0.2
