"""Reference numpy implementations of the hot kernels.

The compiled module built from ``_fast.pyx`` mirrors these signatures; the
two backends must agree to float64 rounding (see tests/test_kernels.py).
All inputs are float64 arrays, 1-D or 2-D with samples in columns.
"""

import numpy as np


def tanh_shift_add(pre, add, shift):
    """tanh(pre) + add + shift, the inner step of shifted-tanh layers.

    ``add`` is a scalar, a vector broadcast across columns, or an array of
    the same shape as ``pre``; ``shift`` is a scalar.
    """
    add = np.asarray(add, dtype=np.float64)
    if pre.ndim == 2 and add.ndim == 1:
        add = add[:, None]
    return np.tanh(pre) + add + shift


def column_pnorms(z, p):
    """p-norm of each column of a 2-D array, or of a 1-D array itself.

    Entries are rescaled by the column maximum before powering so large
    values cannot overflow for big p.
    """
    a = np.abs(z)
    if p == np.inf:
        return a.max(axis=0)
    if p == 1.0:
        return a.sum(axis=0)
    m = a.max(axis=0)
    m_safe = np.where(m == 0.0, 1.0, m)
    return m * ((a / m_safe) ** p).sum(axis=0) ** (1.0 / p)


def thompson(x, y):
    """max |ln x - ln y| over entries; NaN when an entry is not positive."""
    if (
        np.any(x <= 0.0)
        or np.any(y <= 0.0)
        or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)))
    ):
        return float("nan")
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.log(x) - np.log(y))))
