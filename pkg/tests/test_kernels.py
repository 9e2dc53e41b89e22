"""Kernel backends: correctness against direct numpy formulas and fast/py parity."""

import numpy as np
import pytest

from xmodal import kernels as K
from xmodal.kernels import _numpy_backend

_fast = pytest.importorskip("xmodal.kernels._fast", reason="compiled backend not built")

BACKENDS = [_numpy_backend, _fast]
SHAPES = [(1, 1, 1), (3, 5, 2), (7, 1, 9), (4, 6, 4), (64, 33, 17), (2, 0, 3), (0, 4, 5)]


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
@pytest.mark.parametrize("shape", SHAPES)
def test_affine_forward_backward_match_formulas(impl, shape):
    n, k, m = shape
    rng = np.random.default_rng(1)
    x = rng.standard_normal((n, k))
    w = rng.standard_normal((k, m))
    b = rng.standard_normal(m)
    g = rng.standard_normal((n, m))

    z = impl.affine_forward(x, w, b)
    assert np.allclose(z, x @ w + b, atol=1e-13)

    gx, gw, gb = impl.affine_backward(x, w, g)
    assert np.allclose(gx, g @ w.T, atol=1e-13)
    assert np.allclose(gw, x.T @ g, atol=1e-13)
    assert np.allclose(gb, g.sum(axis=0), atol=1e-13)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_relu_and_subgradient_at_zero(impl):
    z = np.array([[-1.0, 0.0, 2.0]])
    a = impl.relu_forward(z)
    assert np.array_equal(a, [[0.0, 0.0, 2.0]])
    g = np.array([[5.0, 5.0, 5.0]])
    gz = impl.relu_backward(g, a)
    # subgradient at exactly 0 is 0
    assert np.array_equal(gz, [[0.0, 0.0, 5.0]])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_l2norm_rows_and_degenerate_passthrough(impl):
    x = np.array([[3.0, 4.0], [0.0, 0.0], [1e-13, 0.0]])
    y, norms, skipped = impl.l2norm_rows(x, 1e-12)
    assert np.allclose(y[0], [0.6, 0.8])
    assert skipped.tolist() == [False, True, True]
    assert np.array_equal(y[1], x[1])
    assert np.array_equal(y[2], x[2])
    assert np.isclose(norms[0], 5.0)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_l2norm_backward_is_tangent_projection(impl):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 4))
    y, norms, skipped = impl.l2norm_rows(x, 1e-12)
    g = rng.standard_normal((6, 4))
    gx = impl.l2norm_rows_backward(g, y, norms, skipped)
    expected = (g - y * (g * y).sum(axis=1, keepdims=True)) / norms[:, None]
    assert np.allclose(gx, expected, atol=1e-13)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_pairwise_cosine_range_and_values(impl):
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([[1.0, 0.0], [-3.0, 0.0], [0.0, 1.0]])
    d = impl.pairwise_cosine(a, b)
    assert np.allclose(d[0], [0.0, 2.0, 1.0], atol=1e-15)
    assert np.allclose(d[1], [1.0, 1.0, 0.0], atol=1e-15)
    assert (d >= 0.0).all() and (d <= 2.0).all()


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_momentum_update_two_steps_hand_iterated(impl):
    p = np.array([0.0])
    v = np.zeros(1)
    g = np.array([1.0])
    impl.momentum_update(p, g, v, 0.1, 0.9)
    assert np.isclose(v[0], -0.1) and np.isclose(p[0], -0.1)
    impl.momentum_update(p, g, v, 0.1, 0.9)
    assert np.isclose(v[0], -0.19) and np.isclose(p[0], -0.29)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_hinge_forward_cases(impl):
    d_pos = np.array([0.3, 0.5, 0.5])
    d_neg = np.array([0.5, 0.3, 0.5])
    loss, active = impl.hinge_forward(d_pos, d_neg, 0.1)
    assert np.allclose(loss, [0.0, 0.3, 0.1])
    assert active.tolist() == [False, True, True]
    assert active.dtype == np.bool_


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_add_rows_accumulates_duplicates(impl):
    acc = np.zeros((3, 2))
    idx = np.array([0, 2, 0, 0], dtype=np.int64)
    rows = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
    impl.add_rows(acc, idx, rows)
    assert np.allclose(acc, [[8.0, 8.0], [0.0, 0.0], [2.0, 2.0]])


def test_backends_agree_on_random_inputs():
    rng = np.random.default_rng(7)
    for n, k, m in [(5, 9, 3), (17, 4, 11), (1, 2, 1)]:
        x = rng.standard_normal((n, k))
        w = rng.standard_normal((k, m))
        b = rng.standard_normal(m)
        g = rng.standard_normal((n, m))
        assert np.allclose(_fast.affine_forward(x, w, b),
                           _numpy_backend.affine_forward(x, w, b), atol=1e-12)
        for f1, f2 in zip(_fast.affine_backward(x, w, g),
                          _numpy_backend.affine_backward(x, w, g)):
            assert np.allclose(f1, f2, atol=1e-12)
        a = rng.standard_normal((n, k)) + 0.05
        c = rng.standard_normal((m, k)) + 0.05
        assert np.allclose(_fast.pairwise_cosine(a, c),
                           _numpy_backend.pairwise_cosine(a, c), atol=1e-12)


def test_selected_backend_exposes_all_ops():
    for name in ("affine_forward", "affine_backward", "relu_forward", "relu_backward",
                 "l2norm_rows", "l2norm_rows_backward", "pairwise_cosine",
                 "momentum_update", "hinge_forward", "add_rows"):
        assert callable(getattr(K, name))
    assert K.backend_name() in ("fast", "numpy")
