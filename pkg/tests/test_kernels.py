"""Backend agreement: the compiled kernels must match the numpy reference."""

import math

import numpy as np
import pytest

from subdeq import _kernels
from subdeq._kernels import _pure

compiled = pytest.importorskip("subdeq._kernels._fast", reason="compiled kernels not built")

RNG = np.random.default_rng(2024)


def test_backend_name_reports_selection():
    assert _kernels.backend_name() in ("compiled-hybrid", "pure-python")


def test_hybrid_routing_matches_pure_everywhere():
    # the size-based routing must be invisible in results
    gen = np.random.default_rng(5)
    for n in (8, 96, 97, 150, 2000):
        pre = gen.standard_normal(n)
        add = gen.random(n)
        np.testing.assert_allclose(
            _kernels.tanh_shift_add(pre, add, 1.2),
            _pure.tanh_shift_add(pre, add, 1.2),
            rtol=1e-15,
        )
        z = np.abs(gen.standard_normal(n)) + 0.1
        assert float(_kernels.column_pnorms(z, 3.0)) == pytest.approx(
            float(_pure.column_pnorms(z, 3.0)), rel=1e-14
        )
        y = np.abs(gen.standard_normal(n)) + 0.1
        assert _kernels.thompson(z, y) == pytest.approx(_pure.thompson(z, y), rel=1e-13)


@pytest.mark.parametrize("shape", [(7,), (5, 3)])
@pytest.mark.parametrize("add_kind", ["scalar", "vector", "full"])
def test_tanh_shift_add_agreement(shape, add_kind):
    pre = RNG.standard_normal(shape) * 3.0
    if add_kind == "scalar":
        add = 0.7
    elif add_kind == "vector":
        add = RNG.random(shape[0])
    else:
        add = RNG.random(shape)
    got = compiled.tanh_shift_add(pre, add, 1.603)
    want = _pure.tanh_shift_add(pre, add, 1.603)
    np.testing.assert_allclose(got, want, rtol=1e-15, atol=0.0)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5, 10.0, math.inf])
@pytest.mark.parametrize("shape", [(9,), (6, 4)])
def test_column_pnorms_agreement(p, shape):
    z = RNG.standard_normal(shape) * 10.0
    got = np.asarray(compiled.column_pnorms(z, p))
    want = np.asarray(_pure.column_pnorms(z, p))
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_column_pnorms_zero_column():
    z = np.zeros((4, 2))
    z[:, 1] = [1.0, -2.0, 0.0, 2.0]
    for impl in (compiled, _pure):
        out = np.asarray(impl.column_pnorms(z, 3.0))
        assert out[0] == 0.0
        assert out[1] > 0.0


def test_thompson_agreement_and_nan():
    x = np.abs(RNG.standard_normal((5, 3))) + 0.1
    y = np.abs(RNG.standard_normal((5, 3))) + 0.1
    assert compiled.thompson(x, y) == pytest.approx(_pure.thompson(x, y), rel=1e-15)
    assert compiled.thompson(x, x) == 0.0
    bad = x.copy()
    bad[0, 0] = 0.0
    assert math.isnan(compiled.thompson(bad, y))
    assert math.isnan(_pure.thompson(bad, y))
    inf = x.copy()
    inf[0, 0] = math.inf
    assert math.isnan(compiled.thompson(inf, y))
    assert math.isnan(_pure.thompson(inf, y))


def test_noncontiguous_inputs():
    base = RNG.standard_normal((8, 8))
    view = base[::2, ::2]
    np.testing.assert_allclose(
        compiled.tanh_shift_add(view, 0.2, 1.2),
        _pure.tanh_shift_add(view, 0.2, 1.2),
        rtol=1e-15,
    )
    np.testing.assert_allclose(
        np.asarray(compiled.column_pnorms(view, 2.0)),
        np.asarray(_pure.column_pnorms(view, 2.0)),
        rtol=1e-14,
    )
