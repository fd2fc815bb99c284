import numpy as np
import pytest
import torch

from helpers import fd_gradcheck
from usrnet.blocks import laplacian_filter
from usrnet.losses import (
    LAYER_WEIGHTS,
    FeatureExtractor,
    LossWeights,
    contrastive_loss,
    edge_loss,
    edge_target,
    luminance,
    mae_loss,
    total_loss,
)

WEIGHT_SUM = 47.0 / 32.0  # 1/32 + 1/16 + 1/8 + 1/4 + 1


def rand(*shape, seed=0, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=gen, dtype=dtype)


@pytest.fixture(scope="module")
def extractor():
    return FeatureExtractor(seed=7).double()


# ------------------------------------------------------------------------ mae


def test_mae_identical_is_zero():
    x = rand(1, 3, 4, 4, seed=1)
    assert mae_loss(x, x).item() == 0.0


def test_mae_constant_offset():
    x = rand(1, 3, 4, 4, seed=2)
    assert mae_loss(x, x + 0.25).item() == pytest.approx(0.25, abs=1e-12)


def test_mae_matches_elementwise_oracle():
    a = rand(1, 3, 2, 2, seed=3)
    b = rand(1, 3, 2, 2, seed=4)
    expected = float(np.mean(np.abs(a.numpy() - b.numpy())))
    assert mae_loss(a, b).item() == pytest.approx(expected, abs=1e-12)


def test_mae_shape_mismatch_raises():
    with pytest.raises(ValueError):
        mae_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 2, 2))


# ----------------------------------------------------------------------- edge


def test_edge_loss_identical_is_zero():
    x = rand(1, 3, 8, 8, seed=5)
    assert edge_loss(x, x).item() == 0.0


def test_edge_loss_ignores_constant_offsets():
    a = torch.full((1, 1, 8, 8), 0.2, dtype=torch.float64)
    b = torch.full((1, 1, 8, 8), 0.9, dtype=torch.float64)
    assert edge_loss(a, b).item() == pytest.approx(0.0, abs=1e-12)


def test_edge_loss_unit_impulse_difference():
    n = 8 * 8
    a = torch.zeros(1, 1, 8, 8, dtype=torch.float64)
    b = a.clone()
    b[0, 0, 4, 4] = 1.0
    # |kernel stamp| sums to 8, averaged over the n pixels
    assert edge_loss(a, b).item() == pytest.approx(8.0 / n, abs=1e-12)


def test_edge_loss_rejects_tiny_images():
    with pytest.raises(ValueError):
        edge_loss(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 2))


# ---------------------------------------------------------------- contrastive


def test_contrastive_zero_when_restored_equals_target(extractor):
    target = rand(1, 3, 16, 16, seed=6)
    degraded = rand(1, 3, 16, 16, seed=7)
    loss = contrastive_loss(target, target, degraded, extractor)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_contrastive_anchor_when_restored_equals_degraded(extractor):
    target = rand(1, 3, 16, 16, seed=8)
    degraded = rand(1, 3, 16, 16, seed=9)
    loss = contrastive_loss(degraded, target, degraded, extractor).item()
    assert WEIGHT_SUM - 1e-3 <= loss <= WEIGHT_SUM


def test_contrastive_matches_layer_by_layer_oracle(extractor):
    restored = rand(1, 3, 16, 16, seed=10)
    target = rand(1, 3, 16, 16, seed=11)
    degraded = rand(1, 3, 16, 16, seed=12)
    with torch.no_grad():
        taps_r = [t.numpy() for t in extractor.features(restored)]
        taps_t = [t.numpy() for t in extractor.features(target)]
        taps_d = [t.numpy() for t in extractor.features(degraded)]
    expected = 0.0
    for w, fr, ft, fd in zip(LAYER_WEIGHTS, taps_r, taps_t, taps_d):
        d_ap = np.mean(np.abs(ft - fr))
        d_an = np.mean(np.abs(ft - fd))
        expected += w * d_ap / (d_an + 1e-7)
    got = contrastive_loss(restored, target, degraded, extractor).item()
    assert got == pytest.approx(expected, rel=1e-10)


def test_contrastive_decreasing_in_negative_distance(extractor):
    target = rand(1, 3, 16, 16, seed=13)
    restored = target + 0.05
    delta = rand(1, 3, 16, 16, seed=14) - 0.5
    losses = [
        contrastive_loss(restored, target, target + k * delta, extractor).item()
        for k in (0.5, 1.0, 2.0, 4.0)
    ]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_contrastive_weight_count_mismatch_raises(extractor):
    x = rand(1, 3, 16, 16, seed=15)
    with pytest.raises(ValueError):
        contrastive_loss(x, x, x, extractor, weights=(1.0, 2.0))


def test_extractor_is_frozen_and_seed_deterministic():
    a = FeatureExtractor(seed=3)
    b = FeatureExtractor(seed=3)
    c = FeatureExtractor(seed=4)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert not pa.requires_grad
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


# ---------------------------------------------------------------------- total


def test_total_loss_zero_at_perfect_prediction(extractor):
    target = rand(1, 3, 16, 16, seed=16)
    degraded = rand(1, 3, 16, 16, seed=17)
    parts = total_loss(target, edge_target(target), target, degraded, extractor)
    assert parts.total.item() == pytest.approx(0.0, abs=1e-12)


def test_total_loss_reduces_to_weighted_mae(extractor):
    restored = rand(1, 3, 16, 16, seed=18)
    target = rand(1, 3, 16, 16, seed=19)
    degraded = rand(1, 3, 16, 16, seed=20)
    edge_pred = rand(1, 1, 16, 16, seed=21)
    weights = LossWeights(gamma1=0.85, gamma2=0.0, lambda_edge=0.0)
    parts = total_loss(restored, edge_pred, target, degraded, extractor, weights)
    assert parts.total.item() == pytest.approx(0.85 * parts.mae.item(), rel=1e-12)


def test_total_loss_combines_sub_losses(extractor):
    restored = rand(1, 3, 16, 16, seed=22)
    target = rand(1, 3, 16, 16, seed=23)
    degraded = rand(1, 3, 16, 16, seed=24)
    edge_pred = rand(1, 1, 16, 16, seed=25)
    w = LossWeights()
    parts = total_loss(restored, edge_pred, target, degraded, extractor, w)
    expected = (
        w.gamma1 * mae_loss(restored, target).item()
        + w.gamma2 * contrastive_loss(restored, target, degraded, extractor,
                                      epsilon=w.epsilon).item()
        + w.lambda_edge * mae_loss(edge_pred, edge_target(target)).item()
    )
    assert parts.total.item() == pytest.approx(expected, rel=1e-12)


def test_total_loss_affine_in_each_weight(extractor):
    restored = rand(1, 3, 16, 16, seed=26)
    target = rand(1, 3, 16, 16, seed=27)
    degraded = rand(1, 3, 16, 16, seed=28)
    edge_pred = rand(1, 1, 16, 16, seed=29)
    base = LossWeights()
    ref = total_loss(restored, edge_pred, target, degraded, extractor, base)
    for name, part in (("gamma1", ref.mae), ("gamma2", ref.contrastive), ("lambda_edge", ref.edge)):
        bumped = LossWeights(**{**base.__dict__, name: getattr(base, name) + 0.5})
        out = total_loss(restored, edge_pred, target, degraded, extractor, bumped)
        assert out.total.item() - ref.total.item() == pytest.approx(0.5 * part.item(), rel=1e-9)


def test_luminance_is_bt601():
    img = torch.zeros(1, 3, 2, 2, dtype=torch.float64)
    img[0, 0] = 1.0
    assert torch.allclose(luminance(img), torch.full((1, 1, 2, 2), 0.299, dtype=torch.float64))


def test_loss_weights_reject_bad_values():
    with pytest.raises(ValueError):
        LossWeights(gamma1=-0.1)
    with pytest.raises(ValueError):
        LossWeights(epsilon=0.0)


# ------------------------------------------------------------- gradient checks


def test_mae_gradients_match_finite_differences():
    restored = rand(1, 3, 4, 4, seed=30).requires_grad_()
    target = rand(1, 3, 4, 4, seed=31)
    fd_gradcheck(lambda: mae_loss(restored, target), [restored], n_probes=20)


def test_edge_gradients_match_finite_differences():
    restored = rand(1, 3, 6, 6, seed=32).requires_grad_()
    target = rand(1, 3, 6, 6, seed=33)
    fd_gradcheck(lambda: edge_loss(restored, target), [restored], n_probes=20)


def test_contrastive_gradients_match_finite_differences(extractor):
    restored = rand(1, 3, 16, 16, seed=34).requires_grad_()
    target = rand(1, 3, 16, 16, seed=35)
    degraded = rand(1, 3, 16, 16, seed=36)
    fd_gradcheck(
        lambda: contrastive_loss(restored, target, degraded, extractor),
        [restored],
        n_probes=20,
    )


def test_total_gradients_match_finite_differences(extractor):
    restored = rand(1, 3, 16, 16, seed=37).requires_grad_()
    edge_pred = rand(1, 1, 16, 16, seed=38).requires_grad_()
    target = rand(1, 3, 16, 16, seed=39)
    degraded = rand(1, 3, 16, 16, seed=40)

    def make_loss():
        return total_loss(restored, edge_pred, target, degraded, extractor).total

    fd_gradcheck(make_loss, [restored, edge_pred], n_probes=25)
