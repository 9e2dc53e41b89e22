"""Shared test oracles: finite differences and misc numeric helpers."""

import numpy as np


def central_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. array x (mutated in place)."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic, numeric, floor=1e-9):
    """Per-entry |analytic - numeric| / (|analytic| + 1e-8), max over entries.

    Entries where both values sit below `floor` are treated as matching: the
    roundoff floor of central differences (~eps*|f|/h ~ 1e-11) would otherwise
    flag exact analytic zeros as mismatches.
    """
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
    err[(np.abs(analytic) < floor) & (np.abs(numeric) < floor)] = 0.0
    return float(np.max(err)) if err.size else 0.0


def check_grads(f, tensors, analytic_grads, tol=1e-4, h=1e-5):
    """Assert every tensor's analytic gradient matches central differences."""
    for name, x, g in zip(tensors.keys(), tensors.values(), analytic_grads):
        fd = central_diff_grad(f, x, h=h)
        err = rel_err(g, fd)
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.3e}"
