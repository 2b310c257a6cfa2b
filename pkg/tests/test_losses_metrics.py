import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metalgraph import autodiff as ad
from metalgraph.errors import InvalidArgumentError
from metalgraph.losses import (FusionParams, clinical_fuse,
                               geometric_alignment_loss, minmax_norm,
                               total_loss)
from metalgraph.metrics import normalized_gain, psnr, ssim, windowed_metrics
from metalgraph.oracles import gradcheck, leaf, oracle_ssim


# ------------------------------------------------------------ minmax norm

def test_minmax_basic():
    assert np.allclose(minmax_norm(np.array([0.0, 5.0, 10.0])), [0, 0.5, 1])


def test_minmax_constant_zero():
    assert not minmax_norm(np.full((3, 3), 7.0)).any()


def test_minmax_range():
    a = np.random.default_rng(0).standard_normal((9, 9))
    n = minmax_norm(a)
    assert n.min() == 0.0 and n.max() == pytest.approx(1.0, abs=1e-6)


# ------------------------------------------------------- alignment loss

def test_alignment_zero_when_equal():
    g = np.random.default_rng(1).random((8, 8)).astype(np.float32)
    loss = geometric_alignment_loss(g, g, n_implants=2)
    assert float(loss.value) == pytest.approx(0.0, abs=1e-10)


def test_alignment_skip_single_implant():
    rng = np.random.default_rng(2)
    a, b = rng.random((6, 6)), rng.random((6, 6))
    assert float(geometric_alignment_loss(a, b, 1).value) == 0.0
    assert float(geometric_alignment_loss(a, b, 0).value) == 0.0


def test_alignment_mse_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    a, b = rng.random((7, 5)), rng.random((7, 5))
    an, bn = minmax_norm(a).astype(np.float64), minmax_norm(b).astype(np.float64)
    ref = np.mean((an - bn) ** 2)
    got = float(geometric_alignment_loss(a, b, 3, "mse").value)
    assert got == pytest.approx(ref, rel=1e-5)


def test_alignment_affine_invariance():
    rng = np.random.default_rng(4)
    a, b = rng.random((6, 6)), rng.random((6, 6))
    base = float(geometric_alignment_loss(a, b, 2).value)
    scaled = float(geometric_alignment_loss(3.5 * a - 1.0, 0.2 * b + 9.0, 2).value)
    assert scaled == pytest.approx(base, rel=1e-4)


def test_alignment_kl_nonnegative_zero_at_equal():
    rng = np.random.default_rng(5)
    a = rng.random((6, 6))
    b = rng.random((6, 6))
    kl_same = float(geometric_alignment_loss(a, a, 2, "kl").value)
    kl_diff = float(geometric_alignment_loss(a, b, 2, "kl").value)
    assert kl_same == pytest.approx(0.0, abs=1e-8)
    assert kl_diff > 0


def test_alignment_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        geometric_alignment_loss(np.zeros((3, 3)), np.zeros((4, 4)), 2)


def test_alignment_gradcheck():
    rng = np.random.default_rng(6)
    target = rng.random((5, 5))
    for variant in ("mse", "kl"):
        x = leaf(rng.random((5, 5)) + 0.1)
        gradcheck(lambda: geometric_alignment_loss(x, target, 2, variant),
                  [x], rtol=1e-3, eps=1e-6)


# ----------------------------------------------------------- total loss

def test_total_loss_identities():
    y = np.random.default_rng(7).random((4, 4)).astype(np.float32)
    node, rep = total_loss(ad.constant(y), y)
    assert rep.total == pytest.approx(0.0, abs=1e-8)
    node, rep = total_loss(ad.constant(y + 1.0), y)
    assert rep.l1 == pytest.approx(1.0, abs=1e-6)
    g = ad.constant(np.asarray(2.0, np.float32))
    node, rep = total_loss(ad.constant(y), y, g, lam=0.0)
    assert rep.total == rep.l1


def test_total_loss_lambda_composition():
    y = np.zeros((3, 3), np.float32)
    g = ad.constant(np.asarray(4.0, np.float32))
    _, rep = total_loss(ad.constant(y + 0.5), y, g, lam=0.1)
    assert rep.total == pytest.approx(rep.l1 + 0.1 * rep.graph, abs=1e-6)
    assert rep.total >= 0


# ---------------------------------------------------------------- psnr

def test_psnr_identical_cap():
    a = np.random.default_rng(8).random((16, 16))
    assert psnr(a, a, 1.0) == 100.0


def test_psnr_full_range_error_zero_db():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 2.5)
    assert psnr(a, b, 2.5) == pytest.approx(0.0, abs=1e-9)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(9)
    a = rng.random((32, 32))
    vals = []
    for amp in (0.01, 0.05, 0.2):
        vals.append(psnr(a, a + amp * rng.standard_normal(a.shape), 1.0))
    assert vals[0] > vals[1] > vals[2]


# ---------------------------------------------------------------- ssim

def test_ssim_identical_one():
    a = np.random.default_rng(10).random((16, 16))
    assert ssim(a, a, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_ssim_matches_reference_oracle():
    rng = np.random.default_rng(11)
    a = rng.random((20, 20))
    b = np.clip(a + 0.15 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b, 1.0) == pytest.approx(oracle_ssim(a, b, 1.0), abs=1e-4)


def test_ssim_less_than_one_for_noise():
    rng = np.random.default_rng(12)
    a = rng.random((16, 16))
    assert ssim(a, np.clip(a + 0.3 * rng.standard_normal(a.shape), 0, 1), 1.0) < 0.99


# ------------------------------------------------------ windowed metrics

def test_windowed_identical():
    a = np.random.default_rng(13).uniform(-1024, 3000, (16, 16))
    m = windowed_metrics(a, a)
    assert m["full"]["psnr"] == 100.0 and m["soft"]["psnr"] == 100.0
    assert m["mean"]["ssim"] == pytest.approx(1.0, abs=1e-9)


def test_windowed_soft_ignores_bone_differences():
    rng = np.random.default_rng(14)
    a = rng.uniform(-150, 250, (16, 16))
    b = a.copy()
    bone = rng.random((16, 16)) < 0.2
    a2 = a.copy()
    a2[bone] = rng.uniform(1000, 2000, bone.sum())   # both above 300 HU
    b2 = b.copy()
    b2[bone] = rng.uniform(1000, 2000, bone.sum())
    m = windowed_metrics(a2, b2)
    assert m["soft"]["psnr"] == 100.0    # clamped identical in soft window


def test_windowed_mean_is_arithmetic_mean():
    rng = np.random.default_rng(15)
    a = rng.uniform(-1024, 3000, (16, 16))
    b = a + rng.normal(0, 30, a.shape)
    m = windowed_metrics(a, b)
    assert m["mean"]["psnr"] == pytest.approx(
        (m["full"]["psnr"] + m["soft"]["psnr"]) / 2)


# ------------------------------------------------------ normalized gain

def test_gain_zero_at_baseline():
    assert normalized_gain(40.0, 40.0, 30.0, 50.0) == 0.0


def test_gain_reference_values():
    assert normalized_gain(43.89, 40.54, 33.71, 50.0) == pytest.approx(20.6, abs=0.05)
    assert normalized_gain(39.44, 37.35, 26.94, 50.0) == pytest.approx(9.1, abs=0.05)


def test_gain_degenerate_rejected():
    with pytest.raises(InvalidArgumentError):
        normalized_gain(1.0, 1.0, 50.0, 50.0)


# -------------------------------------------------------- clinical fuse

def fuse_inputs(seed=16, shape=(12, 12)):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-500, 500, shape).astype(np.float32)
    y = rng.uniform(-500, 500, shape).astype(np.float32)
    att = rng.random(shape).astype(np.float32)
    return x, y, att


def test_fuse_tau_one_returns_prediction():
    x, y, att = fuse_inputs()
    assert np.array_equal(clinical_fuse(x, y, att, FusionParams(0.7, 1.0)), y)


def test_fuse_full_mask_returns_prediction():
    x, y, att = fuse_inputs()
    out = clinical_fuse(x, y, np.ones_like(att), FusionParams(0.5, 0.123))
    assert np.array_equal(out, y)


def test_fuse_tau_zero_empty_mask_returns_input():
    x, y, att = fuse_inputs()
    out = clinical_fuse(x, y, np.zeros_like(att), FusionParams(0.5, 0.0))
    assert np.array_equal(out, x)


def test_fuse_params_validated():
    with pytest.raises(InvalidArgumentError):
        FusionParams(threshold=1.5)
    with pytest.raises(InvalidArgumentError):
        FusionParams(tau=-0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 10_000))
def test_fuse_between_min_and_max(t, tau, seed):
    x, y, att = fuse_inputs(seed)
    out = clinical_fuse(x, y, att, FusionParams(t, tau))
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    assert (out >= lo - 1e-4).all() and (out <= hi + 1e-4).all()


def test_fuse_monotone_in_tau():
    x, y, att = fuse_inputs(17)
    params = [FusionParams(0.5, t) for t in (0.0, 0.3, 0.7, 1.0)]
    outs = [clinical_fuse(x, y, att, p) for p in params]
    where_up = y >= x
    for a, b in zip(outs, outs[1:]):
        assert (b[where_up] >= a[where_up] - 1e-4).all()
        assert (b[~where_up] <= a[~where_up] + 1e-4).all()
