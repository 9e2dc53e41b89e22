"""Reference kernel implementations in plain numpy.

Every function here has a drop-in twin in the compiled `_fast` extension.
All arrays are float64 and C-contiguous; matrices are row-major.
"""

import numpy as np

NAME = "numpy"


def affine_forward(x, w, b):
    """z = x @ w + b for a batch of row vectors."""
    return x @ w + b


def affine_backward(x, w, g):
    """Gradients of z = x @ w + b given upstream g: (gx, gw, gb)."""
    return g @ w.T, x.T @ g, g.sum(axis=0)


def relu_forward(z):
    return np.maximum(z, 0.0)


def relu_backward(g, a):
    """Upstream g masked by the forward activation a = relu(z); subgradient at 0 is 0."""
    return np.where(a > 0.0, g, 0.0)


def l2norm_rows(x, eps=1e-12):
    """Row-wise L2 normalization.

    Rows with norm below eps are passed through unchanged and flagged in the
    returned boolean mask, so callers can keep determinism on degenerate input.
    Returns (y, norms, skipped).
    """
    norms = np.sqrt((x * x).sum(axis=1))
    skipped = norms < eps
    safe = np.where(skipped, 1.0, norms)
    y = x / safe[:, None]
    return y, norms, skipped


def l2norm_rows_backward(g, y, norms, skipped):
    """Backward of row normalization; skipped rows behave as identity."""
    dots = (g * y).sum(axis=1)
    safe = np.where(skipped, 1.0, norms)
    gx = (g - y * dots[:, None]) / safe[:, None]
    if skipped.any():
        gx[skipped] = g[skipped]
    return gx


def pairwise_cosine(a, b):
    """Dense (n, m) matrix of cosine distances 1 - cos(a_i, b_j).

    Precondition: no zero-norm rows (callers validate; zero rows yield NaN).
    """
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    s = (a @ b.T) / na[:, None] / nb[None, :]
    return np.clip(1.0 - s, 0.0, 2.0)


def momentum_update(param, grad, vel, lr, m):
    """Classical momentum, in place: v = m*v - lr*g; p += v. 1-D contiguous views."""
    vel *= m
    vel -= lr * grad
    param += vel


def hinge_forward(d_pos, d_neg, gamma):
    """Triplet hinge max(gamma + d_pos - d_neg, 0); returns (losses, active mask)."""
    raw = gamma + d_pos - d_neg
    active = raw > 0.0
    return np.where(active, raw, 0.0), active


def add_rows(acc, idx, rows):
    """acc[idx[i]] += rows[i], duplicates accumulated (fixed order)."""
    np.add.at(acc, idx, rows)
