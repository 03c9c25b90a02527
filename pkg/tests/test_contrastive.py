import numpy as np
import pytest

from helpers import central_difference, rel_error
from neuralign import contrastive
from neuralign.errors import DegenerateInputError, DimensionError

RNG = np.random.default_rng(77)


def random_orthogonal(d: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


# ---------------------------------------------------------------------------
# l2_normalize


def test_l2_normalize_345_triangle():
    out = contrastive.l2_normalize(np.array([[3.0, 4.0]]))
    np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-15)


def test_l2_normalize_idempotent_on_basis_vectors():
    e = np.eye(4)[:2]
    np.testing.assert_array_equal(contrastive.l2_normalize(e), e)
    generic = contrastive.l2_normalize(RNG.normal(size=(5, 7)))
    np.testing.assert_allclose(contrastive.l2_normalize(generic), generic,
                               rtol=0, atol=1e-15)


def test_l2_normalize_zero_row_rejected():
    with pytest.raises(DegenerateInputError):
        contrastive.l2_normalize(np.array([[1.0, 1.0], [0.0, 0.0]]))


def test_l2_normalize_output_unit_norm():
    out = contrastive.l2_normalize(RNG.normal(size=(20, 9)) * 100.0)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# similarity_logits / make_targets


def test_logits_orthonormal_identity():
    e = np.eye(3)[:2]
    np.testing.assert_array_equal(contrastive.similarity_logits(e, e, 1.0),
                                  np.eye(2))


def test_logits_temperature_scaling():
    e = np.eye(3)[:2]
    np.testing.assert_allclose(contrastive.similarity_logits(e, e, 0.5),
                               2.0 * np.eye(2))


def test_logits_repeated_rows():
    z_i = np.stack([np.eye(3)[0], np.eye(3)[0]])
    z_j = np.eye(3)[:2]
    np.testing.assert_array_equal(contrastive.similarity_logits(z_i, z_j, 1.0),
                                  [[1.0, 0.0], [1.0, 0.0]])


def test_logits_dimension_mismatch():
    with pytest.raises(DimensionError):
        contrastive.similarity_logits(np.zeros((2, 3)), np.zeros((2, 4)), 1.0)


def test_make_targets():
    np.testing.assert_array_equal(contrastive.make_targets(3), [0, 1, 2])
    np.testing.assert_array_equal(contrastive.make_targets(1), [0])
    with pytest.raises(ValueError):
        contrastive.make_targets(0)


# ---------------------------------------------------------------------------
# contrastive_loss values


def test_loss_single_pair_is_zero():
    loss, d_i, d_j = contrastive.contrastive_loss(RNG.normal(size=(1, 8)),
                                                  RNG.normal(size=(1, 8)))
    assert loss == 0.0
    np.testing.assert_array_equal(d_i, np.zeros((1, 8)))
    np.testing.assert_array_equal(d_j, np.zeros((1, 8)))


def test_loss_orthonormal_matched_pair():
    e = np.eye(3)[:2]
    loss, _, _ = contrastive.contrastive_loss(e, e, 1.0)
    assert abs(loss - 0.31326168751822286) <= 1e-9   # ln(1 + e^-1)


def test_loss_collapsed_batch_is_log_b():
    z_i = np.tile(RNG.normal(size=(1, 6)), (4, 1))
    z_j = np.tile(RNG.normal(size=(1, 6)), (4, 1))
    loss, _, _ = contrastive.contrastive_loss(z_i, z_j, 1.0)
    assert abs(loss - np.log(4.0)) <= 1e-12


def test_loss_nonnegative():
    for _ in range(20):
        b, d = int(RNG.integers(1, 9)), int(RNG.integers(2, 17))
        loss, _, _ = contrastive.contrastive_loss(RNG.normal(size=(b, d)),
                                                  RNG.normal(size=(b, d)),
                                                  float(RNG.uniform(0.1, 2.0)))
        assert loss >= 0.0


def test_loss_degenerate_row_propagates():
    z = RNG.normal(size=(3, 4))
    z[1] = 0.0
    with pytest.raises(DegenerateInputError):
        contrastive.contrastive_loss(z, RNG.normal(size=(3, 4)))


# ---------------------------------------------------------------------------
# invariances


def test_loss_symmetry_under_swap():
    for _ in range(100):
        b, d = int(RNG.integers(2, 9)), int(RNG.integers(2, 17))
        z_i = RNG.normal(size=(b, d))
        z_j = RNG.normal(size=(b, d))
        tau = float(RNG.uniform(0.2, 2.0))
        l1, _, _ = contrastive.contrastive_loss(z_i, z_j, tau)
        l2, _, _ = contrastive.contrastive_loss(z_j, z_i, tau)
        assert abs(l1 - l2) <= 1e-12


def test_loss_scale_invariance_and_tangential_gradients():
    z_i = RNG.normal(size=(5, 8))
    z_j = RNG.normal(size=(5, 8))
    base, d_i, d_j = contrastive.contrastive_loss(z_i, z_j)
    scales = RNG.uniform(0.1, 10.0, size=(5, 1))
    scaled, _, _ = contrastive.contrastive_loss(z_i * scales, z_j)
    assert abs(base - scaled) <= 1e-10
    for raw, grad in ((z_i, d_i), (z_j, d_j)):
        inner = np.abs((raw * grad).sum(axis=1))
        bound = 1e-8 * np.linalg.norm(raw, axis=1) * np.linalg.norm(grad, axis=1)
        assert (inner <= bound).all()


def test_loss_joint_rotation_invariance():
    d = 10
    z_i = RNG.normal(size=(6, d))
    z_j = RNG.normal(size=(6, d))
    q = random_orthogonal(d, RNG)
    base, _, _ = contrastive.contrastive_loss(z_i, z_j)
    rotated, _, _ = contrastive.contrastive_loss(z_i @ q, z_j @ q)
    assert abs(base - rotated) <= 1e-10


def test_loss_gradients_match_finite_differences():
    for trial in range(5):
        rng = np.random.default_rng(trial)
        b, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
        tau = float(rng.uniform(0.3, 1.5))
        z_i = rng.normal(size=(b, d))
        z_j = rng.normal(size=(b, d))
        _, d_i, d_j = contrastive.contrastive_loss(z_i, z_j, tau)
        fd_i = central_difference(
            lambda a: contrastive.contrastive_loss(a, z_j, tau)[0], z_i.copy())
        fd_j = central_difference(
            lambda a: contrastive.contrastive_loss(z_i, a, tau)[0], z_j.copy())
        assert rel_error(d_i, fd_i) <= 1e-6
        assert rel_error(d_j, fd_j) <= 1e-6
