"""Shared test utilities: a standalone finite-difference gradient and loop oracles."""
import numpy as np

from hodinet import tensor as T


def numeric_grad(f, arr, h=1e-6):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (in place)."""
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = float(f())
        flat[i] = keep - h
        fm = float(f())
        flat[i] = keep
        gflat[i] = (fp - fm) / (2 * h)
    return out


def rel_err(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


def grad_vs_fd(build, leaves, h=1e-6):
    """Relative error between backward() and central differences, over all ``leaves`` jointly."""
    for t in leaves:
        t.requires_grad = True
        t.grad = None
    build().backward()
    ana, num = [], []
    for t in leaves:
        ana.append((np.zeros_like(t.data) if t.grad is None else t.grad).ravel())
        with T.no_grad():
            num.append(numeric_grad(lambda: build().item(), t.data, h).ravel())
    return rel_err(np.concatenate(ana), np.concatenate(num))


def loop_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


# criterion number -> (passed, one-line detail); printed in the terminal summary
ACCEPTANCE = {}


def verdict(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail
