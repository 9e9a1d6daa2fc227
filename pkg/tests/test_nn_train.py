"""Loss algebra, the optimizer update, early stopping, and the full loop."""

import numpy as np
import pytest

from maskpf.errors import ConfigError, DataError, NumericError
from maskpf.nn.adam import Adam
from maskpf.nn.kernels import set_backend
from maskpf.nn.loss import LOSS_EPS, logmag_mse
from maskpf.nn.models import build_model
from maskpf.nn.train import (
    Dataset,
    EarlyStopping,
    TrainConfig,
    train_model,
)


@pytest.fixture(autouse=True)
def numpy_backend():
    set_backend("numpy")
    yield
    set_backend(None)


def test_loss_zero_when_masks_agree():
    rng = np.random.default_rng(140)
    mask = rng.uniform(0.1, 1.9, (6, 20))
    mags = rng.uniform(1e-3, 1.0, (6, 20))
    loss, grad = logmag_mse(mask, mask, mags)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_loss_reduces_to_log_mask_ratio_above_floor():
    """With magnitudes above the floor the products cancel: the loss is the
    mean squared difference of the log masks."""
    rng = np.random.default_rng(141)
    pred = rng.uniform(0.2, 1.8, (5, 16))
    target = rng.uniform(0.2, 1.8, (5, 16))
    mags = rng.uniform(1e-2, 1.0, (5, 16))
    loss, _ = logmag_mse(pred, target, mags)
    direct = np.mean((np.log(pred) - np.log(target)) ** 2)
    assert abs(loss - direct) < 1e-10


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(142)
    pred = rng.uniform(0.2, 1.8, (4, 9))
    target = rng.uniform(0.2, 1.8, (4, 9))
    mags = rng.uniform(1e-2, 1.0, (4, 9))
    _, grad = logmag_mse(pred, target, mags)
    h = 1e-7
    for idx in [(0, 0), (1, 4), (3, 8)]:
        stepped = pred.copy()
        stepped[idx] += h
        plus, _ = logmag_mse(stepped, target, mags)
        stepped[idx] -= 2 * h
        minus, _ = logmag_mse(stepped, target, mags)
        num = (plus - minus) / (2 * h)
        assert np.isclose(grad[idx], num, rtol=1e-5)


def test_loss_flat_below_floor():
    """Predictions whose product sits under the floor get zero gradient; the
    floor region is genuinely flat, not just clipped."""
    pred = np.array([[1e-13]])
    target = np.array([[1.0]])
    mags = np.array([[1e-3]])
    loss_a, grad = logmag_mse(pred, target, mags)
    loss_b, _ = logmag_mse(pred * 0.5, target, mags)
    assert grad[0, 0] == 0.0
    assert loss_a == loss_b


def test_loss_rejects_nan():
    with pytest.raises(NumericError):
        logmag_mse(np.array([[np.nan]]), np.array([[1.0]]), np.array([[1.0]]))


def test_adam_single_step_hand_computed():
    """One step from zero moments: update = lr * g / (|g| + eps) elementwise
    after bias correction collapses."""
    p = np.array([1.0, -2.0, 3.0])
    opt = Adam({"p": p}, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    g = np.array([0.5, -1.0, 2.0])
    opt.step({"p": g.copy()})
    # m_hat = g, v_hat = g^2, so the step is lr * sign-ish update
    want = np.array([1.0, -2.0, 3.0]) - 0.1 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p, want, atol=1e-12)


def test_adam_two_steps_match_reference_formula():
    rng = np.random.default_rng(143)
    p = rng.standard_normal(5)
    p0 = p.copy()
    opt = Adam({"p": p}, lr=0.01)
    g1 = rng.standard_normal(5)
    g2 = rng.standard_normal(5)
    opt.step({"p": g1.copy()})
    opt.step({"p": g2.copy()})

    m = np.zeros(5)
    v = np.zeros(5)
    ref = p0.copy()
    for t, g in enumerate([g1, g2], 1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        ref -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.allclose(p, ref, atol=1e-12)


def test_adam_validation():
    with pytest.raises(ConfigError):
        Adam({"p": np.zeros(2)}, lr=-1.0)
    opt = Adam({"p": np.zeros(2)})
    with pytest.raises(ConfigError):
        opt.step({"q": np.zeros(2)})


def test_adam_updates_in_place_so_models_see_steps():
    model = build_model("fcnn", seed=1, n_bins=8)
    before = model.state()["dense1.w"].copy()
    opt = Adam(model.params(), lr=0.05)
    grads = {k: np.ones_like(v) for k, v in model.params().items()}
    opt.step(grads)
    assert not np.array_equal(model.state()["dense1.w"], before)


def test_early_stopping_counts_and_restores():
    model = build_model("fcnn", seed=2, n_bins=8)
    stopper = EarlyStopping(patience=2, min_delta=0.1)
    assert stopper.update(1.0, 1, model) is False
    snapshot = {k: v.copy() for k, v in model.state().items()}
    model.params()["dense1.w"][...] += 1.0
    assert stopper.update(0.95, 2, model) is False  # within min_delta: no improvement
    assert stopper.update(1.2, 3, model) is True
    stopper.restore(model)
    assert np.array_equal(model.state()["dense1.w"], snapshot["dense1.w"])
    assert stopper.best_epoch == 1


def make_synthetic_dataset(rng, n, kind="lstm"):
    if kind == "lstm":
        inputs = rng.standard_normal((n, 10, 205))
    else:
        inputs = rng.standard_normal((n, 820))
    targets = rng.uniform(0.3, 1.7, (n, 205))
    mags = rng.uniform(1e-2, 1.0, (n, 205))
    return Dataset(inputs, targets, mags)


def test_dataset_validation():
    rng = np.random.default_rng(144)
    with pytest.raises(DataError):
        Dataset(rng.standard_normal((3, 4)), rng.standard_normal((2, 5)),
                rng.standard_normal((3, 5)))
    with pytest.raises(DataError):
        Dataset(rng.standard_normal((3, 4)), rng.standard_normal((3, 5)),
                rng.standard_normal((3, 6)))


def test_zero_lr_patience_gives_exactly_patience_plus_one_evals():
    """With lr=0 the model never changes, so epoch 1 sets the best loss and
    every later epoch is a non-improvement: training must run exactly
    1 + patience validation passes and stop."""
    rng = np.random.default_rng(145)
    train = make_synthetic_dataset(rng, 24)
    val = make_synthetic_dataset(rng, 12)
    config = TrainConfig(kind="lstm", learning_rate=0.0, batch_size=8,
                         max_epochs=50, patience=3, seed=3)
    result = train_model(config, train, val)
    assert result.val_evaluations == 4
    assert result.stopped_early
    assert result.best_epoch == 1
    assert len(result.history) == 4
    losses = [h.val_loss for h in result.history]
    assert all(x == losses[0] for x in losses)


def test_training_reduces_loss_and_restores_best():
    rng = np.random.default_rng(146)
    train = make_synthetic_dataset(rng, 48, kind="fcnn")
    val = make_synthetic_dataset(rng, 16, kind="fcnn")
    config = TrainConfig(kind="fcnn", learning_rate=1e-3, batch_size=16,
                         max_epochs=6, patience=6, seed=4)
    result = train_model(config, train, val)
    assert result.history[0].train_loss > result.history[-1].train_loss
    best = min(h.val_loss for h in result.history)
    assert result.best_val_loss == best


def test_train_is_deterministic():
    rng = np.random.default_rng(147)
    train = make_synthetic_dataset(rng, 32, kind="fcnn")
    val = make_synthetic_dataset(rng, 8, kind="fcnn")
    config = TrainConfig(kind="fcnn", learning_rate=1e-3, batch_size=8,
                         max_epochs=3, patience=5, seed=5)
    a = train_model(config, train, val)
    b = train_model(config, train, val)
    for key, arr in a.model.state().items():
        assert np.array_equal(arr, b.model.state()[key]), key
    assert [h.val_loss for h in a.history] == [h.val_loss for h in b.history]


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(kind="vgg")
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
