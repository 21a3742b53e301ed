import math

import numpy as np
import pytest

from gai_forge.diffnet import (
    ArchSpec,
    Classifier,
    cross_entropy,
    grad_input,
    grad_input_batch,
    grad_params,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
    softmax,
)
from gai_forge.numcore import ContractError, make_rng

from oracles import fd_input_check, fd_param_check, random_classifier


def small_arch(**kw):
    base = dict(input_shape=(8, 8, 3), conv_channels=(4, 6), hidden=5, num_classes=4)
    base.update(kw)
    return ArchSpec(**base)


def test_archspec_shapes_and_json():
    arch = ArchSpec()
    assert arch.conv_output_shapes() == [(8, 8, 8), (4, 4, 16)]
    assert arch.flat_width == 256
    assert ArchSpec.from_json(arch.to_json()) == arch
    with pytest.raises(ContractError):
        ArchSpec((0, 4, 3))
    with pytest.raises(ContractError):
        ArchSpec(num_classes=1)


def test_zero_model_gives_uniform_softmax():
    model = Classifier(small_arch())
    x = make_rng(0).uniform(size=(3, 8, 8, 3))
    logits = model.forward(x)
    assert logits.shape == (3, 4) and np.all(logits == 0)
    assert np.allclose(softmax(logits), 0.25, atol=0, rtol=0)


def test_forward_rows_independent_and_deterministic():
    rng = make_rng(1)
    model = Classifier.init(small_arch(), rng)
    x = rng.uniform(size=(1, 8, 8, 3))
    twice = model.forward(np.concatenate([x, x]))
    assert np.array_equal(twice[0], twice[1])
    # batch size can change BLAS blocking, so compare within the same shape
    assert np.allclose(model.forward(x)[0], twice[0], rtol=1e-12, atol=1e-15)
    again = Classifier.init(small_arch(), make_rng(1)).forward(x)
    assert np.array_equal(again, model.forward(x))
    assert np.array_equal(model.forward(x), model.forward(x))


def test_forward_shape_mismatch():
    model = Classifier(small_arch())
    with pytest.raises(ContractError):
        model.forward(np.zeros((2, 8, 8, 1)))


def test_softmax_rows_sum_to_one():
    logits = make_rng(2).normal(0, 30, size=(50, 7))
    p = softmax(logits)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1))


def test_cross_entropy_examples():
    assert cross_entropy(np.zeros((1, 4)), [2]) == pytest.approx(math.log(4), abs=1e-12)
    assert cross_entropy(np.array([[50.0, 0.0]]), [0]) < 1e-20
    assert cross_entropy(np.array([[1.0, 2.0]]), [0]) == pytest.approx(1.313262, abs=5e-7)
    with pytest.raises(ContractError):
        cross_entropy(np.zeros((1, 3)), [3])
    # soft targets equal the hard loss for one-hot rows
    assert cross_entropy(np.array([[1.0, 2.0]]), np.array([[1.0, 0.0]])) == cross_entropy(np.array([[1.0, 2.0]]), [0])


def test_param_gradients_match_finite_differences():
    rng = make_rng(3)
    model = Classifier.init(small_arch(), rng)
    x = rng.uniform(size=(3, 8, 8, 3))
    y = np.array([0, 3, 1])
    errs, skipped = fd_param_check(model, x, y, rng, coords=100)
    assert skipped < 10
    assert max(errs) < 1e-4


def test_input_gradients_match_finite_differences():
    rng = make_rng(4)
    model = Classifier.init(small_arch(), rng)
    x = rng.uniform(size=(8, 8, 3))
    for kind in ("ce", "logit", "prob"):
        errs, _ = fd_input_check(model, x, 2, rng, coords=100, kind=kind)
        assert max(errs) < 1e-4, kind


def test_gradients_on_random_architectures():
    rng = make_rng(5)
    for _ in range(5):
        model, x, y = random_classifier(rng)
        errs, _ = fd_param_check(model, x, y, rng, coords=20)
        assert np.mean(np.array(errs) < 1e-4) >= 0.99


def test_duplicated_batch_gives_same_mean_gradient():
    rng = make_rng(6)
    model = Classifier.init(small_arch(), rng)
    x = rng.uniform(size=(2, 8, 8, 3))
    y = np.array([1, 2])
    l1, g1 = grad_params(model, x, y)
    l2, g2 = grad_params(model, np.concatenate([x, x]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, abs=1e-14)
    for a, b in zip(g1, g2):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_gradient_vanishes_at_a_fitted_sample():
    rng = make_rng(7)
    model = Classifier.init(ArchSpec((4, 4, 1), (), 0, 2), rng)
    x = rng.uniform(size=(1, 4, 4, 1))
    y = np.array([1])
    for _ in range(200):
        _, grads = grad_params(model, x, y)
        for p, g in zip(model.params, grads):
            p -= 50.0 * g
    _, grads = grad_params(model, x, y)
    assert math.sqrt(sum(float((g * g).sum()) for g in grads)) < 1e-8


def test_linear_model_logit_gradient_is_weight_map():
    rng = make_rng(8)
    arch = ArchSpec((4, 5, 2), (), 0, 3)
    model = Classifier.init(arch, rng)
    x = rng.uniform(size=(4, 5, 2))
    g = grad_input(model, ("logit", 1), x)
    assert np.array_equal(g, model.params[0][:, 1].reshape(4, 5, 2))


def test_dead_relu_region_has_zero_input_gradient():
    arch = ArchSpec((4, 4, 1), (), 3, 2)
    model = Classifier(arch)
    model.params[0] = make_rng(9).normal(size=model.params[0].shape)
    model.params[1] = np.full(3, -1e3)  # every hidden unit is off
    model.params[2] = np.ones((3, 2))
    g = grad_input(model, ("ce", 0), make_rng(9).uniform(size=(4, 4, 1)))
    assert np.all(g == 0.0)


def test_grad_input_batch_rows_are_per_sample():
    rng = make_rng(10)
    model = Classifier.init(small_arch(), rng)
    x = rng.uniform(size=(3, 8, 8, 3))
    cls = np.array([0, 2, 3])
    _, gx = grad_input_batch(model, "ce", cls, x)
    for i in range(3):
        assert np.allclose(gx[i], grad_input(model, ("ce", int(cls[i])), x[i]), rtol=0, atol=1e-15)


def test_forward_backward_do_not_mutate_model():
    rng = make_rng(11)
    model = Classifier.init(small_arch(), rng)
    before = model.checksum()
    grad_params(model, rng.uniform(size=(2, 8, 8, 3)), [0, 1])
    predict_proba(model, rng.uniform(size=(5, 8, 8, 3)), chunk=2)
    assert model.checksum() == before


def test_checkpoint_roundtrip(tmp_path):
    model = Classifier.init(small_arch(), make_rng(12))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.arch == model.arch and back.checksum() == model.checksum()
    # header is a canonical JSON line
    assert path.read_bytes().split(b"\n", 1)[0].decode() == model.arch.to_json()
    assert not (tmp_path / "m.ckpt.tmp").exists()
