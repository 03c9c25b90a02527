import numpy as np
import pytest

from helpers import flat_kind
from neuralign import training
from neuralign.datastore import SyntheticConfig, generate_synthetic
from neuralign.encoders import EncoderConfig, Linear, Activation, init_encoder
from neuralign.training import (AdamWState, TrainConfig, adamw_step,
                                evaluation_loss, fit, init_adamw_state,
                                make_batches, train_epoch)

D = 6


def tiny_dataset(noise=0.0, num_stimuli=12, num_test=3, subjects=2, seed=21):
    config = SyntheticConfig(modalities=(flat_kind(D),), num_stimuli=num_stimuli,
                             num_test_stimuli=num_test, num_subjects=subjects,
                             embed_dim=D, noise_sigma=noise, seed=seed)
    return generate_synthetic(config).datasets["fmri"]


def tiny_encoder(seed=0, subjects=("sub-00", "sub-01")):
    config = EncoderConfig(align_out=8,
                           layers=(Linear(8, 8), Activation("gelu"), Linear(8, D)),
                           embed_dim=D)
    return init_encoder(flat_kind(D), subjects, config, seed=seed)


def snapshot(params):
    return {k: v.copy() for k, v in params.items()}


def assert_params_equal(a, b):
    assert set(a) == set(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


# ---------------------------------------------------------------------------
# adamw


def test_adamw_first_step_no_decay():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.0)
    params = {"w": np.array([1.0])}
    state = init_adamw_state(params)
    adamw_step(params, {"w": np.array([1.0])}, state, config)
    expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
    assert abs(params["w"][0] - expected) <= 1e-9
    assert abs(params["w"][0] - 0.9) <= 1e-8
    assert state.step == 1


def test_adamw_first_step_decoupled_decay():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.1)
    params = {"w": np.array([1.0])}
    adamw_step(params, {"w": np.array([1.0])}, init_adamw_state(params), config)
    expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.1 * 1.0)
    assert abs(params["w"][0] - expected) <= 1e-9
    assert abs(params["w"][0] - 0.89) <= 1e-8


def test_adamw_zero_grad_no_decay_keeps_params():
    config = TrainConfig(learning_rate=0.1, weight_decay=0.0)
    params = {"w": np.array([0.3, -1.7])}
    before = snapshot(params)
    adamw_step(params, {"w": np.zeros(2)}, init_adamw_state(params), config)
    assert_params_equal(params, before)


def test_adamw_zero_grad_with_decay_shrinks_exactly():
    # power-of-two lr and wd make theta - lr*(wd*theta) round identically
    # to theta * (1 - lr*wd)
    config = TrainConfig(learning_rate=0.25, weight_decay=0.5)
    params = {"w": np.array([0.3, -1.7, 42.0])}
    before = snapshot(params)
    adamw_step(params, {"w": np.zeros(3)}, init_adamw_state(params), config)
    np.testing.assert_array_equal(params["w"], before["w"] * (1.0 - 0.25 * 0.5))


def test_adamw_without_decay_is_plain_adam():
    rng = np.random.default_rng(8)
    config = TrainConfig(learning_rate=0.01, weight_decay=0.0)
    theta = rng.normal(size=5)
    params = {"w": theta.copy()}
    state = init_adamw_state(params)

    # independent plain-Adam reference
    ref = theta.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for t in range(1, 6):
        g = rng.normal(size=5)
        adamw_step(params, {"w": g.copy()}, state, config)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(params["w"], ref, rtol=0, atol=1e-15)


def test_adamw_shape_mismatch():
    config = TrainConfig()
    params = {"w": np.zeros(3)}
    with pytest.raises(Exception):
        adamw_step(params, {"w": np.zeros(4)}, init_adamw_state(params), config)


# ---------------------------------------------------------------------------
# batching


def test_make_batches_deterministic():
    a = make_batches(23, 5, epoch_index=3, seed=9)
    b = make_batches(23, 5, epoch_index=3, seed=9)
    assert len(a) == len(b) == 5
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_make_batches_cover_all_indices_once():
    batches = make_batches(17, 4, epoch_index=0, seed=1)
    allidx = np.concatenate(batches)
    assert sorted(allidx.tolist()) == list(range(17))
    assert [len(b) for b in batches] == [4, 4, 4, 4, 1]


def test_make_batches_vary_with_epoch():
    a = np.concatenate(make_batches(16, 16, epoch_index=0, seed=5))
    b = np.concatenate(make_batches(16, 16, epoch_index=1, seed=5))
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# train_epoch / fit


def test_zero_learning_rate_keeps_params_bit_identical():
    dataset = tiny_dataset()
    enc = tiny_encoder()
    before = snapshot(enc.params)
    config = TrainConfig(learning_rate=0.0, batch_size=4, epochs=1, seed=3)
    state = init_adamw_state(enc.params)
    train_epoch(enc, dataset, state, config, epoch_index=0)
    assert_params_equal(enc.params, before)
    assert state.step > 0


def test_one_epoch_reduces_loss_on_noiseless_data():
    dataset = tiny_dataset()
    enc = tiny_encoder()
    config = TrainConfig(learning_rate=3e-4, batch_size=6, epochs=1, seed=3)
    initial = evaluation_loss(enc, dataset, config)
    state = init_adamw_state(enc.params)
    for epoch in range(5):
        train_epoch(enc, dataset, state, config, epoch_index=epoch)
    assert evaluation_loss(enc, dataset, config) < initial


def test_training_is_seed_deterministic():
    dataset = tiny_dataset()
    config = TrainConfig(batch_size=5, epochs=3, seed=12)
    enc_a = tiny_encoder(seed=7)
    enc_b = tiny_encoder(seed=7)
    _, _, curve_a = fit(enc_a, dataset, config)
    _, _, curve_b = fit(enc_b, dataset, config)
    assert curve_a == curve_b
    assert_params_equal(enc_a.params, enc_b.params)


def test_fit_zero_epochs_is_identity():
    dataset = tiny_dataset()
    enc = tiny_encoder()
    before = snapshot(enc.params)
    _, _, curve = fit(enc, dataset, TrainConfig(epochs=0))
    assert curve == []
    assert_params_equal(enc.params, before)


def test_fit_curve_length_equals_epochs():
    dataset = tiny_dataset()
    _, _, curve = fit(tiny_encoder(), dataset, TrainConfig(epochs=4, batch_size=8))
    assert len(curve) == 4


def test_singleton_batches_are_skipped():
    # one training sample: the only batch has B=1, so no step happens
    dataset = tiny_dataset(num_stimuli=2, num_test=1, subjects=1)
    assert len(dataset.train_samples()) == 1
    enc = tiny_encoder(subjects=dataset.subjects)
    before = snapshot(enc.params)
    config = TrainConfig(learning_rate=0.1, batch_size=4, seed=0)
    state = init_adamw_state(enc.params)
    loss = train_epoch(enc, dataset, state, config, epoch_index=0)
    assert np.isnan(loss)
    assert state.step == 0
    assert_params_equal(enc.params, before)


def test_lr0_full_batch_epoch_loss_equals_evaluation_loss():
    # with batch_size >= n the shuffled epoch is one full batch, and the
    # contrastive loss is permutation-invariant up to float summation order
    dataset = tiny_dataset()
    enc = tiny_encoder()
    config = TrainConfig(learning_rate=0.0, batch_size=64, seed=4)
    state = init_adamw_state(enc.params)
    losses = [train_epoch(enc, dataset, state, config, epoch_index=e) for e in range(3)]
    ref = evaluation_loss(enc, dataset, config)
    for loss in losses:
        assert abs(loss - ref) <= 1e-12


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(temperature=0.0)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)


def test_loss_curve_csv_format():
    csv = training.loss_curve_csv([1.5, float("nan")])
    lines = csv.strip().split("\n")
    assert lines[0] == "epoch,mean_loss"
    assert lines[1] == "0,1.5"
    assert lines[2] == "1,nan"
