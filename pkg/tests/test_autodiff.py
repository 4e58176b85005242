import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rgnpp import autodiff as ad
from rgnpp.autodiff import (GraphFreedError, MissingGradientError, ParamStore,
                            ShapeError, Tensor)

# ---------------------------------------------------------------------------
# forward ops


def test_softplus_zero_is_ln2():
    assert ad.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-12)


def test_softmax_symmetry():
    out = ad.softmax(Tensor([3.7, 3.7]))
    np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)


def test_softmax_sums_to_one():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4, 6)) * 10)
    out = ad.softmax(x, axis=1)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_sum_property(vals):
    out = ad.softmax(Tensor(vals))
    assert abs(out.data.sum() - 1.0) < 1e-12


def test_leaky_relu_paper_slope():
    assert ad.leaky_relu(Tensor(-1.0), 0.2).item() == pytest.approx(-0.2)


def test_layer_norm_constant_vector_is_zero():
    out = ad.layer_norm(Tensor([4.2] * 5))
    assert np.max(np.abs(out.data)) < 1e-2


def test_layer_norm_standardizes():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 2.0, size=10)
    out = ad.layer_norm(Tensor(x)).data
    assert abs(out.mean()) < 1e-12
    assert abs(out.std() - 1.0) < 1e-4


def test_softplus_overflow_safe():
    out = ad.softplus(Tensor([1000.0, -1000.0]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(1000.0)
    assert out.data[1] == 0.0


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2,\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


def test_add_shape_error():
    with pytest.raises(ShapeError, match=r"\(3,\).*\(4,\)"):
        ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_dropout_eval_is_identity():
    x = Tensor(np.arange(6.0))
    out = ad.dropout(x, 0.5, train=False)
    assert out is x


def test_dropout_bad_p():
    with pytest.raises(ValueError):
        ad.dropout(Tensor([1.0]), 1.0, train=True)
    with pytest.raises(ValueError):
        ad.dropout(Tensor([1.0]), -0.1, train=True)


def test_dropout_train_fraction_and_scaling():
    rng = np.random.default_rng(5)
    p = 0.3
    n = 20000
    x = Tensor(np.ones(n))
    out = ad.dropout(x, p, train=True, rng=rng).data
    zeros = np.mean(out == 0.0)
    assert abs(zeros - p) < 3 * math.sqrt(p * (1 - p) / n)
    survivors = out[out != 0]
    np.testing.assert_allclose(survivors, 1.0 / (1 - p))


# ---------------------------------------------------------------------------
# backward


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    y = ad.mul(x, x)
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_softplus_at_zero():
    x = Tensor(0.0, requires_grad=True)
    ad.softplus(x).backward()
    assert x.grad == pytest.approx(0.5)


def test_backward_non_scalar_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        ad.mul(x, 2.0).backward()


def test_backward_twice_errors():
    x = Tensor(2.0, requires_grad=True)
    y = ad.mul(x, x)
    y.backward()
    with pytest.raises(GraphFreedError):
        y.backward()


def _lstm_cell(params, x, v, c):
    d = len(v.data)
    z = ad.add(ad.add(ad.matmul(params["W"], x), ad.matmul(params["U"], v)), params["b"])
    f = ad.sigmoid(ad.slice_(z, slice(0, d)))
    i = ad.sigmoid(ad.slice_(z, slice(d, 2 * d)))
    o = ad.sigmoid(ad.slice_(z, slice(2 * d, 3 * d)))
    g = ad.tanh(ad.slice_(z, slice(3 * d, 4 * d)))
    c2 = ad.add(ad.mul(f, c), ad.mul(i, g))
    return ad.sum_(ad.mul(o, ad.tanh(c2)))


def test_lstm_cell_matches_finite_differences():
    rng = np.random.default_rng(7)
    d = 4
    store = ParamStore()
    params = {
        "W": store.add("W", rng.normal(size=(4 * d, d)) * 0.4),
        "U": store.add("U", rng.normal(size=(4 * d, d)) * 0.4),
        "b": store.add("b", rng.normal(size=4 * d) * 0.1),
    }
    x = Tensor(rng.normal(size=d))
    v = Tensor(rng.normal(size=d))
    c = Tensor(rng.normal(size=d))
    report = ad.grad_check(lambda: _lstm_cell(params, x, v, c), store,
                           h=1e-6, tol=1e-6, num_coords=200, rng=rng)
    assert report.global_max_rel_err < 1e-6


OPS = [
    ("sigmoid", lambda t: ad.sigmoid(t)),
    ("tanh", lambda t: ad.tanh(t)),
    ("relu", lambda t: ad.relu(ad.add(t, 0.05))),  # offset avoids the kink
    ("leaky_relu", lambda t: ad.leaky_relu(ad.add(t, 0.05), 0.2)),
    ("softplus", lambda t: ad.softplus(t)),
    ("exp", lambda t: ad.exp(t)),
    ("log", lambda t: ad.log(ad.add(ad.mul(t, t), 0.5))),
    ("softmax", lambda t: ad.softmax(t)),
    ("log_softmax", lambda t: ad.log_softmax(t)),
    ("layer_norm", lambda t: ad.layer_norm(t)),
    ("sum", lambda t: ad.sum_(t)),
    ("mean", lambda t: ad.mean(t)),
    ("square", lambda t: ad.mul(t, t)),
    ("slice", lambda t: ad.slice_(t, slice(1, 4))),
    ("reshape", lambda t: ad.reshape(t, (3, 2))),
]


@pytest.mark.parametrize("name,fn", OPS, ids=[n for n, _ in OPS])
def test_op_backward_matches_finite_differences(name, fn):
    rng = np.random.default_rng(11)
    store = ParamStore()
    t = store.add("x", rng.normal(size=6))

    def closure():
        r = fn(t)
        return ad.sum_(ad.mul(r, r))

    report = ad.grad_check(closure, store, h=1e-6, tol=1e-6, num_coords=6, rng=rng)
    assert report.global_max_rel_err < 1e-6, f"{name}: {report.global_max_rel_err}"


def test_matmul_concat_stack_backward():
    rng = np.random.default_rng(13)
    store = ParamStore()
    a = store.add("a", rng.normal(size=(3, 4)))
    b = store.add("b", rng.normal(size=(4, 2)))
    c = store.add("c", rng.normal(size=(3, 2)))

    def closure():
        m = ad.matmul(a, b)
        cat = ad.concat([m, c], axis=1)
        rows = [ad.slice_(cat, i) for i in range(3)]
        return ad.sum_(ad.mul(ad.stack(rows), ad.stack(rows)))

    report = ad.grad_check(closure, store, h=1e-6, tol=1e-6, num_coords=26, rng=rng)
    assert report.global_max_rel_err < 1e-6


def test_broadcast_add_backward():
    rng = np.random.default_rng(17)
    store = ParamStore()
    col = store.add("col", rng.normal(size=(4, 1)))
    row = store.add("row", rng.normal(size=(1, 4)))
    w = Tensor(rng.normal(size=(4, 4)))

    def closure():
        return ad.sum_(ad.mul(ad.add(col, row), w))

    report = ad.grad_check(closure, store, h=1e-6, tol=1e-6, num_coords=8, rng=rng)
    assert report.global_max_rel_err < 1e-6


def test_log_clamped_floor_and_counter():
    before = ad.LOG_CLAMP_COUNTER["count"]
    out = ad.log_clamped(Tensor([0.0, 1e-320, 1.0]))
    assert np.all(out.data >= -745.0)
    assert out.data[2] == 0.0
    assert ad.LOG_CLAMP_COUNTER["count"] > before


# ---------------------------------------------------------------------------
# ADAM


def test_adam_first_step_magnitude():
    store = ParamStore()
    p = store.add("w", np.array([1.0]))
    p.grad = np.array([1.0])
    ad.adam_step(store, lr=1e-4)
    assert p.data[0] == pytest.approx(1.0 - 1e-4, rel=1e-6)


def test_adam_zero_grad_is_identity():
    store = ParamStore()
    p = store.add("w", np.array([1.5, -2.0]))
    p.grad = np.zeros(2)
    ad.adam_step(store, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.5, -2.0])


def test_adam_constant_grad_steps_non_increasing():
    store = ParamStore()
    p = store.add("w", np.array([0.0]))
    p.grad = np.array([0.7])
    ad.adam_step(store, lr=1e-3)
    d1 = abs(p.data[0])
    prev = p.data[0]
    p.grad = np.array([0.7])
    ad.adam_step(store, lr=1e-3)
    d2 = abs(p.data[0] - prev)
    assert d2 <= d1 * (1 + 1e-6)


def test_adam_missing_grad_names_parameter():
    store = ParamStore()
    store.add("weights.hidden", np.zeros(3))
    with pytest.raises(MissingGradientError, match="weights.hidden"):
        ad.adam_step(store, lr=1e-3)


def test_clip_grad_norm():
    store = ParamStore()
    p = store.add("w", np.zeros(4))
    p.grad = np.full(4, 10.0)
    norm = ad.clip_grad_norm(store, 5.0)
    assert norm == pytest.approx(20.0)
    assert np.linalg.norm(p.grad) == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# grad_check harness


def test_grad_check_quadratic():
    store = ParamStore()
    w = store.add("w", np.arange(1.0, 6.0))

    def closure():
        return ad.sum_(ad.mul(w, w))

    report = ad.grad_check(closure, store, h=1e-6, tol=1e-8, num_coords=5)
    assert report.global_max_rel_err < 1e-8
    assert report.passed


def test_grad_check_flags_nondeterminism():
    store = ParamStore()
    w = store.add("w", np.ones(4))
    rng = np.random.default_rng(3)

    def closure():
        return ad.sum_(ad.dropout(ad.mul(w, w), 0.5, train=True, rng=rng))

    report = ad.grad_check(closure, store, num_coords=4)
    assert report.nondeterministic
    assert not report.passed


# ---------------------------------------------------------------------------
# checkpoint round-trip


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(23)
    store = ParamStore()
    store.add("a", rng.normal(size=(2, 3)))
    store.add("b", rng.normal(size=4))
    store.m["a"][...] = 0.25
    store.step_count = 7
    path = tmp_path / "ckpt.json"
    ad.save_checkpoint(path, {"num_types": 2}, store)
    config, loaded = ad.load_checkpoint(path)
    assert config == {"num_types": 2}
    assert loaded.step_count == 7
    np.testing.assert_array_equal(loaded["a"].data, store["a"].data)
    np.testing.assert_array_equal(loaded.m["a"], store.m["a"])
    np.testing.assert_array_equal(loaded["b"].data, store["b"].data)


def test_checkpoint_rejects_bad_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 99, "config": {}, "params": {}}')
    with pytest.raises(ValueError, match="format_version"):
        ad.load_checkpoint(path)


def test_no_grad_skips_tape():
    x = Tensor(2.0, requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert y._backward is None and y._parents == ()
