import numpy as np
import pytest

from subdeq import DEQLayerConfig, Relu, ShiftedTanh, Tanh, power_scale
from subdeq.numerics import RngSpec, random_fill


def seeded_layer(seed=42, n=150, d=400, variant="eq5", weight_scale=1.0):
    """A reproducible layer config plus a matching input sample.

    Variants: "eq5" (shifted-tanh 1.603 after general weights),
    "abs-shift12" (shifted-tanh 1.2 outside absolute weights),
    "abs-power" (power-scaled tanh outside absolute weights).
    """
    rs = RngSpec(seed, "standard-normal").split(4)
    W = random_fill((n, n), rs[0]) / np.sqrt(n) * weight_scale
    U = random_fill((n, d), rs[1]) / np.sqrt(d)
    b = 0.1 * random_fill((n,), rs[2])
    x = random_fill((d,), RngSpec(rs[3].seed, "uniform01"))
    kw = dict(
        weights=W, injection_weights=U, injection_bias=b, injection_activation=Relu()
    )
    if variant == "eq5":
        cfg = DEQLayerConfig(**kw, sigma2=ShiftedTanh(1.603))
    elif variant == "abs-shift12":
        cfg = DEQLayerConfig(**kw, sigma1=ShiftedTanh(1.2), abs_weights=True)
    elif variant == "abs-power":
        cfg = DEQLayerConfig(**kw, sigma1=power_scale(Tanh(), 0.99), abs_weights=True)
    else:
        raise ValueError(variant)
    return cfg, x


@pytest.fixture
def small_eq5():
    return seeded_layer(seed=11, n=24, d=8)
