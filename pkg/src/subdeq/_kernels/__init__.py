"""Hot-kernel backend selection.

Two implementations serve the same signatures: compiled loops built from
``_fast.pyx`` and the numpy reference in ``_pure``. Neither dominates:
numpy's SIMD transcendentals win on large batched arrays, while the
compiled loops win on the small vectors the probes and vector solves hammer
(one call and zero temporaries instead of several dispatches). The default
backend is therefore a hybrid that routes each call by measured crossover
sizes; ``SUBDEQ_PURE_PYTHON=1`` forces the pure path everywhere, which is
also the baseline side of benchmarks/bench_kernels.py.

Both paths compute identical float64 operations (no fast-math), so results
agree to rounding; tests/test_kernels.py pins the agreement.
"""

import os

import numpy as np

from . import _pure

try:
    from . import _fast
except ImportError:
    _fast = None

# measured crossover sizes: below these the compiled loop wins, above them
# numpy's vectorized kernels do
_TANH_COMPILED_MAX = 96
_PNORM_COMPILED_MAX = 1024
_THOMPSON_COMPILED_MAX = 1024

if os.environ.get("SUBDEQ_PURE_PYTHON") == "1" or _fast is None:
    BACKEND = "pure-python"
    tanh_shift_add = _pure.tanh_shift_add
    column_pnorms = _pure.column_pnorms
    thompson = _pure.thompson
else:
    BACKEND = "compiled-hybrid"

    def tanh_shift_add(pre, add, shift):
        if pre.ndim == 1 and pre.size <= _TANH_COMPILED_MAX:
            return _fast.tanh_shift_add(pre, add, shift)
        return _pure.tanh_shift_add(pre, add, shift)

    def column_pnorms(z, p):
        if z.ndim == 1 and z.size <= _PNORM_COMPILED_MAX:
            return _fast.column_pnorms(np.ascontiguousarray(z), p)
        return _pure.column_pnorms(z, p)

    def thompson(x, y):
        if x.size <= _THOMPSON_COMPILED_MAX:
            return _fast.thompson(x, y)
        return _pure.thompson(x, y)


def backend_name() -> str:
    return BACKEND
