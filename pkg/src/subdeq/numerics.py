"""Dense array helpers and deterministic randomness.

Vectors and matrices are plain float64 numpy arrays throughout the package;
this module adds the handful of primitives everything else builds on:
p-norms, relative residuals between iterates, and a splittable, seed-stable
sampling scheme so that every experiment is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateIterateError, DimensionError, ParameterError

INF = math.inf

_DISTRIBUTIONS = ("uniform01", "standard-normal")


@dataclass(frozen=True)
class RngSpec:
    """Seeded sampling recipe: (seed, distribution, shape) fixes every sample.

    Streams come from PCG64, which numpy keeps stable across platforms, and
    ``split`` derives independent child specs through SeedSequence spawning,
    so sub-experiments stay reproducible without sharing generator state.
    """

    seed: int
    distribution: str = "uniform01"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.distribution not in _DISTRIBUTIONS:
            raise ParameterError(
                f"unknown distribution {self.distribution!r}; expected one of {_DISTRIBUTIONS}"
            )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def split(self, n: int) -> list["RngSpec"]:
        """n independent child specs, deterministic in (seed, n)."""
        children = np.random.SeedSequence(self.seed).spawn(n)
        return [
            RngSpec(int(c.generate_state(1, np.uint64)[0]), self.distribution)
            for c in children
        ]


def as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def pnorm(v, p: float) -> float:
    """(sum_i |v_i|^p)^(1/p), or max_i |v_i| for p = math.inf.

    1-homogeneous, order-preserving, and strictly positive on positive
    input. Entries are rescaled by their maximum before powering so large
    values cannot overflow for big p; the rescaling is exact for the norm
    because of 1-homogeneity.
    """
    a = np.abs(as_array(v)).ravel()
    if a.size == 0:
        raise DimensionError("pnorm of an empty vector")
    if not p >= 1.0:
        raise ParameterError(f"pnorm requires p >= 1 or p = inf, got {p}")
    m = float(a.max())
    if p == INF or m == 0.0:
        return m
    if p == 1.0:
        return float(a.sum())
    if p == 2.0:
        return m * float(np.sqrt(np.square(a / m).sum()))
    return m * float(np.power(a / m, p).sum() ** (1.0 / p))


def frobenius(a) -> float:
    return float(np.linalg.norm(as_array(a)))


def relative_residual(z_next, z) -> float:
    """||z_next - z||_F / ||z_next||_F between successive iterates."""
    z_next = as_array(z_next)
    z = as_array(z)
    if z_next.shape != z.shape:
        raise DimensionError(f"iterate shapes differ: {z_next.shape} vs {z.shape}")
    denom = frobenius(z_next)
    if denom == 0.0:
        raise DegenerateIterateError("iterate collapsed to zero; relative residual undefined")
    return frobenius(z_next - z) / denom


def random_fill(shape, rng: RngSpec) -> np.ndarray:
    """Deterministic array of samples drawn per the RngSpec distribution."""
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise DimensionError(f"dimensions must be positive, got {shape}")
    gen = rng.generator()
    if rng.distribution == "uniform01":
        return gen.random(shape)
    return gen.standard_normal(shape)


def log_uniform(shape, gen: np.random.Generator, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    """Positive samples log-uniform over [lo, hi], stressing both cone ends."""
    if not 0 < lo < hi:
        raise ParameterError(f"log_uniform needs 0 < lo < hi, got [{lo}, {hi}]")
    u = gen.random(shape)
    return np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
