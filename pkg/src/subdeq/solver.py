"""Globally convergent fixed-point computation with rate diagnostics.

For a certified layer the plain Picard sequence z_{k+1} = G(z_k) converges
to the unique fixed point from any positive start, with the relative
Frobenius residual ||z_{k+1} - z_k||_F / ||z_{k+1}||_F as the stopping
rule. Anderson acceleration (type II, least-squares mixing over a short
history) usually cuts the iteration count; a positivity safeguard falls
back to the plain step whenever the mixed iterate leaves the cone, so the
safeguarded method inherits the global convergence of Picard.

Residuals are measured in the relative Frobenius norm even though the
convergence theorem is stated in the sup norm; the geometric rate read off
the trace is insensitive to the norm choice up to constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import (
    ConeViolationError,
    DivergenceError,
    InsufficientDataError,
    ParameterError,
    ProbeFailureError,
)
from .numerics import RngSpec, log_uniform, relative_residual

_METHODS = ("picard", "anderson")
_POSITIVITY = ("strict", "none")
ANDERSON_POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    method: str = "picard"
    tol: float = 1e-3
    max_iter: int = 500
    record_trace: bool = True
    anderson_memory: int = 5
    anderson_damping: float = 1.0
    anderson_ridge: float = 1e-10
    positivity: str = "strict"

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ParameterError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be positive, got {self.max_iter}")
        if self.anderson_memory < 1:
            raise ParameterError(f"anderson memory must be >= 1, got {self.anderson_memory}")
        if not 0 < self.anderson_damping <= 1:
            raise ParameterError(
                f"anderson damping must lie in (0, 1], got {self.anderson_damping}"
            )
        if self.positivity not in _POSITIVITY:
            raise ParameterError(f"positivity must be one of {_POSITIVITY}")


@dataclass(frozen=True)
class FixedPointReport:
    z_star: np.ndarray
    iterations: int
    residual_trace: np.ndarray
    estimated_rate: Optional[float]
    converged: bool
    anderson_fallbacks: int = 0

    def to_dict(self):
        return {
            "z_star": np.asarray(self.z_star).tolist(),
            "iterations": self.iterations,
            "residual_trace": np.asarray(self.residual_trace).tolist(),
            "estimated_rate": self.estimated_rate,
            "converged": self.converged,
            "anderson_fallbacks": self.anderson_fallbacks,
        }


class _AndersonMixer:
    """Type-II Anderson state: short histories of iterate/residual deltas."""

    def __init__(self, memory: int, damping: float, ridge: float):
        self.memory = memory
        self.damping = damping
        self.ridge = ridge
        self._df: list[np.ndarray] = []
        self._dg: list[np.ndarray] = []
        self._f_prev: Optional[np.ndarray] = None
        self._g_prev: Optional[np.ndarray] = None

    def mix(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        f = g - z
        if self._f_prev is not None:
            self._df.append(f - self._f_prev)
            self._dg.append(g - self._g_prev)
            if len(self._df) > self.memory:
                self._df.pop(0)
                self._dg.pop(0)
        self._f_prev, self._g_prev = f, g
        if not self._df:
            return g
        DF = np.stack(self._df, axis=1)
        DG = np.stack(self._dg, axis=1)
        gram = DF.T @ DF
        gram[np.diag_indices_from(gram)] += self.ridge
        try:
            gamma = np.linalg.solve(gram, DF.T @ f)
        except np.linalg.LinAlgError:
            return g
        beta = self.damping
        mixed = g - DG @ gamma
        if beta != 1.0:
            mixed = beta * mixed + (1.0 - beta) * (z - DF @ gamma)
        return mixed


def solve(G: Callable, z0, cfg: SolverConfig | None = None) -> FixedPointReport:
    """Iterate z_{k+1} = G(z_k) (optionally Anderson-mixed) to the stopping rule.

    Args:
        G: map from positive arrays to positive arrays of the same shape.
        z0: strictly positive start (any positive start converges for
            certified maps).
        cfg: solver configuration; defaults to plain Picard at tol 1e-3.

    Returns:
        FixedPointReport with the final iterate, one residual per
        iteration, and the trace-estimated geometric rate when the trace
        is long enough.

    Raises:
        ConeViolationError: an iterate left the positive cone under strict
            positivity (for a certified G this indicates a bug).
        DivergenceError: an iterate became non-finite.
    """
    if cfg is None:
        cfg = SolverConfig()
    z = np.array(z0, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DivergenceError("starting point has non-finite entries")
    if cfg.positivity == "strict" and not np.all(z > 0.0):
        raise ConeViolationError("starting point must be strictly positive")

    mixer = _AndersonMixer(cfg.anderson_memory, cfg.anderson_damping, cfg.anderson_ridge)
    use_anderson = cfg.method == "anderson"
    shape = z.shape
    flat = z.ravel()
    trace: list[float] = []
    fallbacks = 0
    converged = False

    for _ in range(cfg.max_iter):
        g = np.asarray(G(flat.reshape(shape)), dtype=np.float64).ravel()
        if g.shape != flat.shape:
            raise ParameterError(f"G changed the shape: {shape} -> {g.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("iteration produced non-finite values")
        if cfg.positivity == "strict" and not np.all(g > 0.0):
            raise ConeViolationError("G left the positive cone")
        if use_anderson:
            z_new = mixer.mix(flat, g)
            bad = not np.all(np.isfinite(z_new))
            if cfg.positivity == "strict":
                bad = bad or bool(np.any(z_new <= ANDERSON_POSITIVITY_FLOOR))
            if bad:
                z_new = g
                fallbacks += 1
        else:
            z_new = g
        r = relative_residual(z_new.reshape(shape), flat.reshape(shape))
        trace.append(r)
        flat = z_new
        if r <= cfg.tol:
            converged = True
            break

    trace_arr = np.asarray(trace) if cfg.record_trace else np.asarray(trace[-1:])
    rate = None
    if len(trace) >= 5:
        rate = rate_estimate(trace)
    return FixedPointReport(
        z_star=flat.reshape(shape),
        iterations=len(trace),
        residual_trace=trace_arr,
        estimated_rate=rate,
        converged=converged,
        anderson_fallbacks=fallbacks,
    )


def rate_estimate(trace) -> float:
    """Per-step geometric contraction factor read off a residual trace.

    Least-squares slope of ln(residual) against the iteration index over
    the last half of the trace, exponentiated. An exact zero residual in
    that window means the iteration hit the fixed point; the factor is 0.
    """
    t = np.asarray(trace, dtype=np.float64)
    if t.ndim != 1 or t.size < 5:
        raise InsufficientDataError(
            f"rate estimation needs at least 5 residuals, got {t.size}"
        )
    if np.any(t < 0.0):
        raise ParameterError("residuals must be nonnegative")
    half = t[t.size // 2 :]
    if np.any(half == 0.0):
        return 0.0
    k = np.arange(half.size, dtype=np.float64)
    slope = np.polyfit(k, np.log(half), 1)[0]
    return float(np.exp(slope))


@dataclass(frozen=True)
class UniquenessReport:
    n_starts: int
    max_pairwise_distance: float
    passed: bool
    iterations: tuple[int, ...] = field(default=())

    def to_dict(self):
        return {
            "n_starts": self.n_starts,
            "max_pairwise_distance": self.max_pairwise_distance,
            "passed": self.passed,
            "iterations": list(self.iterations),
        }


def uniqueness_probe(
    G: Callable,
    n_starts: int,
    rng: RngSpec,
    cfg: SolverConfig | None = None,
    shape=None,
    threshold: float = 1e-6,
    lo: float = 1e-3,
    hi: float = 1e3,
) -> UniquenessReport:
    """Solve from several log-uniform positive starts and compare endpoints.

    Each start gets a deterministic sub-seed, so the probe is reproducible
    and starts could run in parallel. A start that fails to converge is a
    probe failure (it names the start); disagreement between converged
    fixed points is reported, not raised, since it is exactly what the
    probe exists to detect.
    """
    if n_starts < 2:
        raise ParameterError(f"uniqueness probe needs at least 2 starts, got {n_starts}")
    if shape is None:
        raise ParameterError("uniqueness probe needs the iterate shape")
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    fixed_points = []
    iterations = []
    for i, sub in enumerate(rng.split(n_starts)):
        z0 = log_uniform(shape, sub.generator(), lo, hi)
        report = solve(G, z0, cfg)
        if not report.converged:
            raise ProbeFailureError(
                f"start {i} failed to converge within {report.iterations} iterations "
                f"(last residual {report.residual_trace[-1]:.3e})"
            )
        fixed_points.append(np.asarray(report.z_star))
        iterations.append(report.iterations)
    max_dist = 0.0
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            d = float(np.max(np.abs(fixed_points[i] - fixed_points[j])))
            max_dist = max(max_dist, d)
    return UniquenessReport(
        n_starts=n_starts,
        max_pairwise_distance=max_dist,
        passed=max_dist < threshold,
        iterations=tuple(iterations),
    )
