"""The numba and numpy kernel paths must agree, and both must match direct loops."""
import numpy as np
import pytest

from hodinet import _accel, kernels, oracles


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not _accel.has_numba:
        pytest.skip("numba not installed")
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


def _both(fn):
    prev = _accel.set_backend("numpy")
    try:
        a = fn()
    finally:
        _accel.set_backend(prev)
    if not _accel.has_numba:
        return a, a
    prev = _accel.set_backend("numba")
    try:
        b = fn()
    finally:
        _accel.set_backend(prev)
    return a, b


@pytest.mark.parametrize("k,stride,pad", [(1, 1, 0), (3, 1, 1), (3, 2, 1), (7, 4, 3)])
def test_im2col_col2im_parity(rng, k, stride, pad):
    x = rng.standard_normal((2, 3, 9, 11))
    a, b = _both(lambda: kernels.im2col(x, k, stride, pad))
    assert np.array_equal(a, b)
    ca, cb = _both(lambda: kernels.col2im(a, x.shape, k, stride, pad))
    assert np.allclose(ca, cb, atol=1e-12)


def test_col2im_is_adjoint_of_im2col(rng, backend):
    x = rng.standard_normal((1, 2, 6, 5))
    cols = kernels.im2col(x, 3, 2, 1)
    y = rng.standard_normal(cols.shape)
    lhs = float((cols * y).sum())
    rhs = float((x * kernels.col2im(y, x.shape, 3, 2, 1)).sum())
    assert abs(lhs - rhs) <= 1e-10


@pytest.mark.parametrize("size", [(6, 6), (7, 5), (3, 3), (2, 9)])
def test_resize_parity_and_oracle(rng, size, backend):
    x = rng.standard_normal((1, 2, 3, 4))
    out = kernels.resize_forward(x, *size)
    for c in range(2):
        ref = np.array(oracles.bilinear_resize(x[0, c], *size))
        assert np.max(np.abs(out[0, c] - ref)) <= 1e-12


def test_resize_backward_is_adjoint(rng, backend):
    x = rng.standard_normal((2, 1, 3, 4))
    g = rng.standard_normal((2, 1, 7, 9))
    lhs = float((kernels.resize_forward(x, 7, 9) * g).sum())
    rhs = float((x * kernels.resize_backward(g, 3, 4)).sum())
    assert abs(lhs - rhs) <= 1e-10


def test_resize_backends_agree(rng):
    x = rng.standard_normal((2, 3, 5, 6))
    a, b = _both(lambda: kernels.resize_forward(x, 10, 12))
    assert np.allclose(a, b, atol=1e-13)
    g = rng.standard_normal((2, 3, 10, 12))
    a, b = _both(lambda: kernels.resize_backward(g, 5, 6))
    assert np.allclose(a, b, atol=1e-13)


def test_gaussian_window_normalised():
    w = kernels.gaussian_window(11, 1.5)
    assert w.shape == (11,) and abs(w.sum() - 1) < 1e-15 and w[5] == w.max()


def test_backend_switch_rejects_unknown():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")
