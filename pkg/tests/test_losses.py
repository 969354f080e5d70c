import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from avtpr import oracles
from avtpr.losses import missing_modality_loss, stable_softplus, total_loss, triplet_hard_loss
from avtpr.verify import gradient_errors, random_batch


def t(x, dtype=torch.float64):
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def test_all_components_zero_gives_ln2():
    # every point identical: positives, negatives and missing points all at distance 0
    X = t(np.tile([[0.6, 0.8]], (6, 1)))
    Y = torch.tensor([0, 0, 1, 1, 2, 2])
    B = torch.tensor([1, 1, 1, 0, 1, 0])
    assert missing_modality_loss(X, Y, B).item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_no_valid_anchors_gives_zero(rng):
    X = t(rng.normal(size=(5, 3)))
    assert missing_modality_loss(X, torch.tensor([0, 0, 1, 1, 2]), torch.zeros(5, dtype=torch.long)).item() == 0.0


def test_missing_loss_matches_oracle_on_random_batch():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(8, 5))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y = np.array([0, 0, 1, 1, 2, 2, 0, 1])
    B = np.array([1, 1, 0, 1, 1, 1, 0, 1])
    got = missing_modality_loss(t(X), t(Y, torch.long), t(B, torch.long)).item()
    assert got == pytest.approx(oracles.missing_modality_loss(X, Y, B), abs=1e-6)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        missing_modality_loss(t(np.zeros((4, 2))), torch.tensor([0, 1, 0]), torch.ones(4))
    with pytest.raises(ValueError):
        triplet_hard_loss(t(np.zeros(4)), torch.tensor([0, 1, 0, 1]))


def test_triplet_separated_clusters():
    X = t([[0.0, 1.0], [0.0, 1.0], [0.0, -1.0], [0.0, -1.0]])
    assert triplet_hard_loss(X, torch.tensor([0, 0, 1, 1]), margin=0.2).item() == 0.0


def test_triplet_identical_points_equals_margin():
    X = t(np.ones((6, 3)) / np.sqrt(3))
    assert triplet_hard_loss(X, torch.tensor([0, 0, 1, 1, 2, 2]), margin=0.2).item() == pytest.approx(0.2)


def test_triplet_single_class_warns(caplog):
    X = t(np.eye(3))
    assert triplet_hard_loss(X, torch.tensor([1, 1, 1])).item() == 0.0
    assert "single-class" in caplog.text


def test_triplet_matches_oracle():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(8, 6))
    Y = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    assert triplet_hard_loss(t(X), t(Y, torch.long)).item() == pytest.approx(oracles.triplet_hard_loss(X, Y), abs=1e-6)


def test_softplus_is_stable_at_extremes():
    x = t([-1000.0, -30.0, 0.0, 30.0, 1000.0])
    y = stable_softplus(x)
    assert torch.isfinite(y).all()
    assert y[2].item() == pytest.approx(math.log(2))
    assert y[4].item() == pytest.approx(1000.0)
    assert y[0].item() == pytest.approx(0.0, abs=1e-300)


def test_total_loss_sums_terms(rng):
    X = [t(rng.normal(size=(8, 4))) for _ in range(4)]
    Y = torch.tensor([0, 0, 1, 1, 2, 2, 3, 3])
    Bs = [torch.tensor(rng.integers(0, 2, 8)) for _ in range(3)]
    out = total_loss((X[0], Y, Bs[0]), (X[1], Y, Bs[1]), (X[2], Y, Bs[2]), (X[3], Y))
    expected = (missing_modality_loss(X[0], Y, Bs[0]) + missing_modality_loss(X[1], Y, Bs[1])
                + missing_modality_loss(X[2], Y, Bs[2]) + triplet_hard_loss(X[3], Y))
    assert out.total.item() == pytest.approx(expected.item(), abs=1e-12)
    f = out.as_floats()
    assert f["L_total"] == pytest.approx(f["L_c"] + f["L_t"] + f["L_s"] + f["L_j"], abs=1e-6)


def test_total_loss_arithmetic():
    # ln2 from identical points, and a joint triplet term equal to the margin
    same = t(np.ones((4, 2)) / np.sqrt(2))
    Y = torch.tensor([0, 0, 1, 1])
    B = torch.tensor([1, 0, 1, 1])
    out = total_loss((same, Y, B), (same, Y, B), (same, Y, B), (same, Y))
    assert out.total.item() == pytest.approx(3 * math.log(2) + 0.2, abs=1e-9)


def test_total_loss_zero():
    sep = t([[0.0, 1.0], [0.0, 1.0], [0.0, -1.0], [0.0, -1.0]])
    Y = torch.tensor([0, 0, 1, 1])
    none = torch.zeros(4, dtype=torch.long)
    assert total_loss((sep, Y, none), (sep, Y, none), (sep, Y, none), (sep, Y)).total.item() == 0.0


def test_total_loss_rejects_misaligned():
    X = t(np.eye(4))
    Y = torch.tensor([0, 0, 1, 1])
    with pytest.raises(ValueError):
        total_loss((X, Y, torch.ones(4)), (X, Y.flip(0), torch.ones(4)), (X, Y, torch.ones(4)), (X, Y))


def test_gradients_match_finite_differences():
    gm, gt = gradient_errors(n_batches=10, seed=5)
    assert gm < 1e-4 and gt < 1e-4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_loss_nonnegative_and_zero_iff_no_valid(seed):
    X, Y, B = random_batch(np.random.default_rng(seed))
    val = missing_modality_loss(t(X), t(Y, torch.long), t(B, torch.long)).item()
    assert val >= 0
    assert (val == 0) == (B.sum() == 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_losses_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X, Y, B = random_batch(rng)
    perm = rng.permutation(len(Y))
    a = missing_modality_loss(t(X), t(Y, torch.long), t(B, torch.long)).item()
    b = missing_modality_loss(t(X[perm]), t(Y[perm], torch.long), t(B[perm], torch.long)).item()
    assert a == pytest.approx(b, abs=1e-12)
    a = triplet_hard_loss(t(X), t(Y, torch.long)).item()
    b = triplet_hard_loss(t(X[perm]), t(Y[perm], torch.long)).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_moving_missing_point_away_never_increases_loss():
    X = np.array([[0.0, 0.0], [0.2, 0.0], [1.0, 0.0], [0.0, 0.5]])
    Y = np.array([0, 0, 1, 2])
    B = np.array([1, 1, 1, 0])
    prev = None
    for r in np.linspace(0.1, 3.0, 30):
        X[3] = [0.0, r]
        val = missing_modality_loss(t(X), t(Y, torch.long), t(B, torch.long)).item()
        if prev is not None:
            assert val <= prev + 1e-12
        prev = val


def test_duplicate_missing_point_leaves_loss_unchanged(rng):
    X = rng.normal(size=(6, 4))
    X[4] = X[5] = [0.5, 0.5, 0.5, 0.5]   # shared missing embedding
    Y = np.array([0, 0, 1, 1, 2, 3])
    B = np.array([1, 1, 1, 1, 0, 0])
    base = missing_modality_loss(t(X), t(Y, torch.long), t(B, torch.long)).item()
    X2 = np.vstack([X, X[4:5]])
    more = missing_modality_loss(t(X2), t(np.append(Y, 0), torch.long), t(np.append(B, 0), torch.long)).item()
    assert more == pytest.approx(base, abs=1e-12)


def test_missing_cap_limits_push():
    X = t([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [0.0, 5.0]])
    Y, B = torch.tensor([0, 0, 1, 2]), torch.tensor([1, 1, 1, 0])
    capped = missing_modality_loss(X, Y, B, missing_cap=1.0).item()
    assert capped > missing_modality_loss(X, Y, B).item()
