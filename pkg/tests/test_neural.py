import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fauxaudit.dataset import Dataset
from fauxaudit.errors import ContractError, DivergenceError
from fauxaudit.linalg import make_rng
from fauxaudit.neural import (AdversaryConfig, Layer, MlpModel, TrainConfig, dumps, embed_columns,
                              fit_logistic, forward, init_mlp, input_gradient, input_jacobian,
                              integrated_gradient, loads, logits, train, train_adversarial)
from fauxaudit.neural.mlp import sigmoid
from fauxaudit.neural.train import accuracy, fit

from conftest import blob_dataset, central_difference, constant_model, linear_model, random_mlp


# -- forward ------------------------------------------------------------------

def test_forward_identity_layer():
    m = MlpModel((Layer(np.eye(2), [0, 0], "identity"),))
    assert np.array_equal(forward(m, [1.0, 2.0]), [1.0, 2.0])


def test_forward_zero_logit():
    assert forward(constant_model(3), np.ones(3))[0] == 0.5


def test_forward_relu_clamp():
    m = MlpModel((Layer([[-1.0]], [0.0], "relu"),))
    assert forward(m, [3.0])[0] == 0.0


def test_forward_dimension_mismatch():
    with pytest.raises(ContractError):
        forward(constant_model(3), np.ones(4))


def test_layers_must_chain():
    with pytest.raises(ContractError):
        MlpModel((Layer(np.ones((3, 2)), np.zeros(3), "relu"),
                  Layer(np.ones((1, 4)), [0.0], "sigmoid")))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_softmax_head_rows_sum_to_one(seed):
    rng = make_rng(seed)
    m = random_mlp(rng, head="softmax", out=int(rng.integers(2, 6)), widths=(8, 32))
    p = forward(m, rng.normal(scale=3.0, size=(20, m.input_dim)))
    assert np.all((p > 0) & (p < 1))
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)


# -- gradients ------------------------------------------------------------------

def test_gradient_linear_sigmoid_closed_form():
    w = np.array([0.5, -1.0, 2.0])
    x = np.array([0.3, 0.1, -0.2])
    s = sigmoid(w @ x)
    assert np.allclose(input_gradient(linear_model(w), x), s * (1 - s) * w, rtol=1e-15, atol=0)


def test_gradient_constant_model():
    assert np.array_equal(input_gradient(constant_model(4), np.ones(4)), np.zeros(4))


def test_gradient_matches_finite_differences(rng):
    m = init_mlp(5, [16], 1, seed=3)
    x = rng.normal(size=5)
    fd = central_difference(lambda v: forward(m, v)[0], x)
    g = input_gradient(m, x)
    assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) <= 1e-5


def test_logit_space_gradient(rng):
    m = init_mlp(4, [8], 1, seed=5)
    x = rng.normal(size=4)
    fd = central_difference(lambda v: logits(m, v)[0], x)
    assert np.allclose(input_gradient(m, x, space="logit"), fd, rtol=1e-6, atol=1e-9)


def test_softmax_jacobian_matches_finite_differences(rng):
    m = init_mlp(4, [8], 3, head="softmax", seed=9)
    x = rng.normal(size=4)
    jac = input_jacobian(m, x)
    for j in range(3):
        fd = central_difference(lambda v: forward(m, v)[j], x)
        assert np.allclose(jac[j], fd, rtol=1e-5, atol=1e-9)


def test_output_index_out_of_range():
    with pytest.raises(ContractError):
        input_gradient(constant_model(2), np.zeros(2), output_index=1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_gradient_check_property(seed):
    rng = make_rng(seed)
    m = random_mlp(rng, widths=(8, 32))
    x = rng.normal(size=m.input_dim)
    fd = central_difference(lambda v: forward(m, v)[0], x)
    g = input_gradient(m, x)
    scale = max(np.max(np.abs(fd)), 1e-3)
    assert np.max(np.abs(g - fd)) / scale <= 1e-5


# -- integrated gradients ---------------------------------------------------------

def test_ig_linear_model_exact():
    w = np.array([1.5, -2.0, 0.5])
    x = np.array([0.2, 0.4, -1.0])
    m = linear_model(w, head="identity")
    for steps in (1, 7, 64):
        assert np.array_equal(integrated_gradient(m, x, np.zeros(3), steps=steps), w * x)


def test_ig_zero_at_baseline(rng):
    m = init_mlp(3, [8], 1, seed=1)
    x = rng.normal(size=3)
    assert np.array_equal(integrated_gradient(m, x, x), np.zeros(3))


def test_ig_completeness(rng):
    m = init_mlp(4, [16, 16], 1, seed=2)
    x, base = rng.normal(size=4), rng.normal(size=4)
    ig = integrated_gradient(m, x, base, steps=256)
    assert abs(ig.sum() - (forward(m, x)[0] - forward(m, base)[0])) <= 1e-3


def test_ig_batch_matches_rows(rng):
    m = init_mlp(3, [8], 1, seed=4)
    x = rng.normal(size=(5, 3))
    batch = integrated_gradient(m, x, np.zeros(3), steps=16)
    rows = np.array([integrated_gradient(m, r, np.zeros(3), steps=16) for r in x])
    assert np.allclose(batch, rows, rtol=1e-14, atol=1e-16)


def test_ig_needs_steps():
    with pytest.raises(ContractError):
        integrated_gradient(constant_model(2), np.zeros(2), np.zeros(2), steps=0)


# -- training ---------------------------------------------------------------------

def test_train_separable_blobs():
    data = blob_dataset(n=400, gap=6.0)
    res = train(init_mlp(2, [8], 1, seed=0), data, "y", TrainConfig(seed=0, learning_rate=0.01),
                full_result=True)
    assert res.train_accuracy >= 0.99


def test_train_zero_epochs_returns_init():
    init = init_mlp(2, [4], 1, seed=0)
    out = train(init, blob_dataset(n=50), "y", TrainConfig(max_epochs=0))
    for a, b in zip(init.params(), out.params()):
        assert np.array_equal(a, b)


def test_train_constant_labels():
    data = blob_dataset(n=200)
    data.labels[:] = 1.0
    res = train(init_mlp(2, [4], 1, seed=0), data, "y",
                TrainConfig(learning_rate=0.05, max_epochs=200, patience=200), full_result=True)
    p = forward(res.model, data.features)[:, 0]
    assert np.all(p > 0.5)
    assert res.history[-1]["val_loss"] < 0.01


def test_train_deterministic():
    data = blob_dataset(n=200, seed=3)
    cfg = TrainConfig(seed=11, max_epochs=15)
    a = train(init_mlp(2, [8], 1, seed=1), data, "y", cfg)
    b = train(init_mlp(2, [8], 1, seed=1), data, "y", cfg)
    assert dumps(a) == dumps(b)


def test_early_stopping_returns_best_epoch():
    data = blob_dataset(n=300, seed=1, gap=1.0)
    res = train(init_mlp(2, [16], 1, seed=0), data, "y",
                TrainConfig(seed=2, max_epochs=60, patience=5, learning_rate=0.01),
                full_result=True)
    losses = {h["epoch"]: h["val_loss"] for h in res.history}
    best = losses[res.best_epoch]
    assert all(best <= v for e, v in losses.items())
    assert res.epochs_run - res.best_epoch <= 5


def test_train_divergence_names_epoch():
    rng = make_rng(0)
    x = rng.normal(size=(100, 2))
    x[7, 0] = np.nan
    data = Dataset(x, rng.integers(0, 2, 100), rng.integers(0, 2, 100))
    with pytest.raises(DivergenceError) as err:
        with np.errstate(all="ignore"):
            train(init_mlp(2, [4], 1, seed=0), data, "y", TrainConfig(batch_size=100))
    assert err.value.epoch == 1
    assert "epoch 1" in str(err.value)


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ContractError):
        TrainConfig(batch_size=0)
    with pytest.raises(ContractError):
        TrainConfig(patience=0)
    with pytest.raises(ContractError):
        AdversaryConfig(alpha=-1)
    with pytest.raises(ContractError):
        AdversaryConfig(alpha_decay=0)
    with pytest.raises(ContractError):
        AdversaryConfig(n_adv=0)


def test_train_on_protected_role():
    rng = make_rng(4)
    x = rng.normal(size=(300, 3))
    c = (x[:, 1] > 0).astype(float)
    data = Dataset(x, rng.integers(0, 2, 300), c)
    res = train(init_mlp(3, [8], 1, seed=0), data, "c", TrainConfig(learning_rate=0.01),
                full_result=True)
    assert res.val_accuracy >= 0.95


# -- adversarial debiasing -------------------------------------------------------------

def test_adversarial_alpha_zero_equals_train():
    data = blob_dataset(n=200, seed=5, gap=2.0)
    init = init_mlp(2, [8], 1, seed=3)
    base = TrainConfig(seed=4, max_epochs=20)
    plain = train(init, data, "y", base)
    adv = train_adversarial(init, data, TrainConfig(seed=4, max_epochs=20,
                                                    adversary=AdversaryConfig(alpha=0.0)))
    assert dumps(plain) == dumps(adv)


def test_adversary_cannot_beat_base_rate_on_independent_c():
    rng = make_rng(8)
    n = 1000
    x = rng.normal(size=(n, 3))
    y = (x[:, 0] > 0).astype(float)
    c = (rng.random(n) < 0.3).astype(float)
    data = Dataset(x, y, c)
    res = train_adversarial(init_mlp(3, [8], 1, seed=0), data,
                            TrainConfig(seed=0, max_epochs=20, adversary=AdversaryConfig()),
                            full_result=True)
    probs = forward(res.model, x)
    adv_acc = accuracy("sigmoid", forward(res.adversary, probs), c[:, None])
    base_rate = max(c.mean(), 1 - c.mean())
    assert abs(adv_acc - base_rate) <= 0.05


def test_adversarial_reduces_dependence_on_c():
    # y and c are both readable from x; the debiased target should lean on c less
    rng = make_rng(2)
    n = 1500
    c = rng.integers(0, 2, n).astype(float)
    y = np.where(rng.random(n) < 0.8, c, 1 - c)
    x = np.column_stack([y + 0.8 * rng.normal(size=n), 2 * c - 1 + 0.3 * rng.normal(size=n)])
    data = Dataset(x, y, c)
    init = init_mlp(2, [8], 1, seed=0)
    plain = train(init, data, "y", TrainConfig(seed=0))
    fair = train_adversarial(init, data, TrainConfig(seed=0, adversary=AdversaryConfig()))
    g_plain = np.abs(input_gradient(plain, x)[:, 1]).mean()
    g_fair = np.abs(input_gradient(fair, x)[:, 1]).mean()
    assert g_fair < g_plain


# -- logistic regression -------------------------------------------------------------------

def test_logistic_axis_aligned():
    rng = make_rng(1)
    x = rng.normal(size=(2000, 4))
    w = fit_logistic(x, (x[:, 0] > 0).astype(float)).weights
    assert abs(w[0]) / np.linalg.norm(w) >= 0.99


def test_logistic_null_shrinks():
    rng = make_rng(2)
    x = rng.normal(size=(2000, 4))
    c = rng.integers(0, 2, 2000).astype(float)
    assert np.linalg.norm(fit_logistic(x, c, l2=1.0).weights) <= 0.1


def test_logistic_duplicated_columns_symmetric():
    rng = make_rng(3)
    a = rng.normal(size=(500, 1))
    x = np.hstack([a, a, rng.normal(size=(500, 1))])
    c = (a[:, 0] + 0.5 * rng.normal(size=500) > 0).astype(float)
    w = fit_logistic(x, c).weights
    assert abs(w[0] - w[1]) <= 1e-6


def test_logistic_requires_binary():
    with pytest.raises(ContractError):
        fit_logistic(np.ones((3, 2)), [0, 1, 2])


def test_logistic_as_mlp_matches():
    rng = make_rng(4)
    x = rng.normal(size=(200, 3))
    lm = fit_logistic(x, (x[:, 2] > 0).astype(float))
    assert np.allclose(forward(lm.as_mlp(), x)[:, 0], lm.predict_proba(x), rtol=1e-14)


# -- serialization and lifting ---------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_model_json_round_trip_bit_exact(seed):
    rng = make_rng(seed)
    m = random_mlp(rng, widths=(8, 16))
    back = loads(dumps(m))
    for a, b in zip(m.params(), back.params()):
        assert np.array_equal(a, b)
    assert [l.activation for l in back.layers] == [l.activation for l in m.layers]


def test_model_json_layout():
    doc = json.loads(dumps(init_mlp(3, [4], 1)))
    assert doc["input_dim"] == 3 and doc["head"] == "sigmoid"
    assert [(l["rows"], l["cols"]) for l in doc["layers"]] == [(4, 3), (1, 4)]


def test_embed_columns_preserves_outputs(rng):
    small = init_mlp(2, [4], 1, seed=6)
    big = embed_columns(small, [3, 1], 5)
    x = rng.normal(size=(10, 5))
    assert np.allclose(forward(big, x), forward(small, x[:, [3, 1]]), rtol=1e-15, atol=0)
    g = input_gradient(big, x)
    assert np.all(g[:, [0, 2, 4]] == 0)
