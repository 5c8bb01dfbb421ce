"""Composable operator trees with an analytic Jacobian and a degree calculus.

Trees are built from six node kinds: linear maps, absolute-value linear
maps, translations, entrywise activations, vector activations, and
entrywise powers, glued by binary composition. Every node supports

* ``apply(z)``        value, batched over columns,
* ``tangent(z, v)``   forward-mode (value, J(z) v) pair, batched,
* ``jacobian(z)``     the full Jacobian element at a vector point.

``certified_degree`` runs the composition calculus: linear maps and powers
contribute homogeneity factors, nonnegative translations are transparent,
and activation certificates multiply in, giving the product degree
h * mu_1 * mu_2 * ... for trees of the shape

    sigma_k o ... o T_y o sigma_1 o H,   y >= 0, H homogeneous.

Entrywise activations are strongly subhomogeneous whenever they are
subhomogeneous (the univariate inequality does not see signs), and the
only vector activation in the catalog carries an explicit strong
certificate, so the calculus never needs a separate strong branch for
catalog compositions. Trees outside the shape above (for example a
general linear map applied after an activation) are refused rather than
guessed at.

``verify_subhom`` and ``verify_scaling`` are the numerical cross-checks of
the two defining inequalities; they test, never grant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .activations import (
    Activation,
    Domain,
    SubhomCertificate,
    activation_from_dict,
    activation_name,
    is_vector_activation,
)
from .exceptions import (
    ConeViolationError,
    DimensionError,
    DomainViolationError,
    NoCertificateError,
    ParameterError,
)
from .numerics import RngSpec, log_uniform

DEFAULT_VERIFY_TOL = 1e-8


def _frozen(x, ndim: int, name: str) -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} must have finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Linear:
    """z -> W z for a general weight matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2, "weight matrix"))

    kind = "linear"

    @property
    def input_dim(self) -> Optional[int]:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> Optional[int]:
        return self.matrix.shape[0]

    def apply(self, z):
        return self.matrix @ z

    def tangent(self, z, v):
        return self.matrix @ z, self.matrix @ v

    def jacobian(self, z):
        return np.array(self.matrix)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class AbsLinear:
    """z -> |W| z; a first-class node so nonnegativity is structural.

    Storing W and applying its entrywise absolute value keeps the
    positive-Jacobian flag decidable from the tree alone, and lets
    gradients reach the underlying signed weights.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2, "weight matrix"))
        abs_matrix = np.abs(self.matrix)
        abs_matrix.setflags(write=False)
        object.__setattr__(self, "_abs", abs_matrix)

    kind = "abs-linear"

    @property
    def abs_matrix(self) -> np.ndarray:
        return self._abs

    @property
    def input_dim(self) -> Optional[int]:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> Optional[int]:
        return self.matrix.shape[0]

    @property
    def rows_all_nonzero(self) -> bool:
        return bool(np.all(self._abs.max(axis=1) > 0.0))

    def apply(self, z):
        return self._abs @ z

    def tangent(self, z, v):
        return self._abs @ z, self._abs @ v

    def jacobian(self, z):
        return np.array(self._abs)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class Translation:
    """z -> z + y; the offset may be a vector or a per-column matrix."""

    offset: np.ndarray

    def __post_init__(self):
        a = np.array(self.offset, dtype=np.float64)
        if a.ndim not in (1, 2):
            raise DimensionError(f"translation offset must be 1- or 2-D, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("translation offset must have finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "offset", a)

    kind = "translation"

    @property
    def input_dim(self) -> Optional[int]:
        return self.offset.shape[0]

    @property
    def output_dim(self) -> Optional[int]:
        return self.offset.shape[0]

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.offset >= 0.0))

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.offset > 0.0))

    def _offset_for(self, z):
        if self.offset.ndim == 1 and np.ndim(z) == 2:
            return self.offset[:, None]
        return self.offset

    def apply(self, z):
        return z + self._offset_for(z)

    def tangent(self, z, v):
        return z + self._offset_for(z), v

    def jacobian(self, z):
        if self.offset.ndim != 1:
            raise DimensionError("per-column translation has no single vector Jacobian")
        return np.eye(self.offset.shape[0])

    def to_dict(self):
        return {"kind": self.kind, "offset": self.offset.tolist()}


@dataclass(frozen=True, eq=False)
class Entrywise:
    """Entrywise application of a univariate activation."""

    activation: Activation

    def __post_init__(self):
        if is_vector_activation(self.activation):
            raise ParameterError(
                "approxmax maps whole vectors; use a VectorActivation node"
            )

    kind = "entrywise"
    input_dim = None
    output_dim = None

    def apply(self, z):
        return self.activation.value(z)

    def tangent(self, z, v):
        return self.activation.value(z), self.activation.derivative(z) * v

    def jacobian(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise DimensionError("jacobian needs a vector point")
        return np.diag(np.asarray(self.activation.derivative(z)))

    def to_dict(self):
        return {"kind": self.kind, "activation": self.activation.to_dict()}


@dataclass(frozen=True, eq=False)
class VectorActivation:
    """A vector-to-scalar activation (approxmax), applied per column."""

    activation: Activation

    def __post_init__(self):
        if not is_vector_activation(self.activation):
            raise ParameterError("entrywise activations belong in an Entrywise node")

    kind = "vector-activation"
    input_dim = None

    @property
    def output_dim(self) -> Optional[int]:
        return 1

    def apply(self, z):
        out = self.activation.value(z)
        return np.atleast_1d(out)

    def tangent(self, z, v):
        grad = np.asarray(self.activation.derivative(z))
        return np.atleast_1d(self.activation.value(z)), np.atleast_1d((grad * v).sum(axis=0))

    def jacobian(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise DimensionError("jacobian needs a vector point")
        return np.asarray(self.activation.derivative(z))[None, :]

    def to_dict(self):
        return {"kind": self.kind, "activation": self.activation.to_dict()}


@dataclass(frozen=True, eq=False)
class Power:
    """Entrywise z -> z^alpha on the open positive cone, alpha in (0, 1]."""

    exponent: float

    def __post_init__(self):
        if not 0 < self.exponent <= 1:
            raise ParameterError(f"power exponent must lie in (0, 1], got {self.exponent}")

    kind = "power"
    input_dim = None
    output_dim = None

    def _check(self, z):
        if self.exponent != 1.0 and np.any(np.asarray(z) <= 0.0):
            raise ConeViolationError("fractional power applied off the open positive cone")

    def apply(self, z):
        self._check(z)
        return np.power(z, self.exponent)

    def tangent(self, z, v):
        self._check(z)
        z = np.asarray(z, dtype=np.float64)
        return np.power(z, self.exponent), self.exponent * np.power(z, self.exponent - 1.0) * v

    def jacobian(self, z):
        self._check(z)
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise DimensionError("jacobian needs a vector point")
        return np.diag(self.exponent * np.power(z, self.exponent - 1.0))

    def to_dict(self):
        return {"kind": self.kind, "exponent": self.exponent}


@dataclass(frozen=True, eq=False)
class Compose:
    """outer o inner."""

    outer: "OperatorNode"
    inner: "OperatorNode"

    def __post_init__(self):
        out_dim = self.inner.output_dim
        in_dim = self.outer.input_dim
        if out_dim is not None and in_dim is not None and out_dim != in_dim:
            raise DimensionError(
                f"composition shapes do not match: inner yields {out_dim}, outer expects {in_dim}"
            )

    kind = "compose"

    @property
    def input_dim(self) -> Optional[int]:
        return self.inner.input_dim

    @property
    def output_dim(self) -> Optional[int]:
        return self.outer.output_dim

    def apply(self, z):
        return self.outer.apply(self.inner.apply(z))

    def tangent(self, z, v):
        mid, tv = self.inner.tangent(z, v)
        return self.outer.tangent(mid, tv)

    def jacobian(self, z):
        mid = self.inner.apply(z)
        return self.outer.jacobian(mid) @ self.inner.jacobian(z)

    def to_dict(self):
        return {"kind": self.kind, "children": [self.outer.to_dict(), self.inner.to_dict()]}


OperatorNode = Linear | AbsLinear | Translation | Entrywise | VectorActivation | Power | Compose


def compose(*stages: OperatorNode) -> OperatorNode:
    """compose(f, g, h) builds f o g o h, read like the mathematical product."""
    if not stages:
        raise ParameterError("compose needs at least one stage")
    tree = stages[-1]
    for stage in reversed(stages[:-1]):
        tree = Compose(stage, tree)
    return tree


def stages_outer_to_inner(tree: OperatorNode) -> list[OperatorNode]:
    if isinstance(tree, Compose):
        return stages_outer_to_inner(tree.outer) + stages_outer_to_inner(tree.inner)
    return [tree]


def _check_entry_dim(tree, z) -> None:
    expected = getattr(tree, "input_dim", None)
    if isinstance(tree, Compose):
        expected = tree.input_dim
    if expected is not None and z.shape[0] != expected:
        raise DimensionError(f"operator expects dimension {expected}, got {z.shape[0]}")


def apply(tree: OperatorNode, z) -> np.ndarray:
    """Evaluate the tree bottom-up; accepts vectors or column batches."""
    z = np.asarray(z, dtype=np.float64)
    _check_entry_dim(tree, z)
    return np.asarray(tree.apply(z))


def jacobian(tree: OperatorNode, z) -> np.ndarray:
    """Analytic Jacobian element via the chain rule at a vector point."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionError("jacobian needs a vector point")
    _check_entry_dim(tree, z)
    return tree.jacobian(z)


def value_and_jvp(tree: OperatorNode, z, v) -> tuple[np.ndarray, np.ndarray]:
    """(F(z), J(z) v) by forward-mode propagation; batched over columns."""
    z = np.asarray(z, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if z.shape != v.shape:
        raise DimensionError("point and tangent must share a shape")
    _check_entry_dim(tree, z)
    out, tv = tree.tangent(z, v)
    return np.asarray(out), np.asarray(tv)


def infer_input_dim(tree: OperatorNode) -> Optional[int]:
    for node in reversed(stages_outer_to_inner(tree)):
        if node.input_dim is not None:
            return node.input_dim
    return None


def _describe(node: OperatorNode) -> str:
    if isinstance(node, Entrywise | VectorActivation):
        return f"{node.kind}({activation_name(node.activation)})"
    return node.kind


def certified_degree(tree: OperatorNode) -> SubhomCertificate:
    """Degree of a certifiable composition, or the reason there is none.

    Walks the pipeline innermost-first, multiplying homogeneity factors of
    linear/power prefixes into the first activation certificate and
    activation degrees into each other afterwards. Raises
    NoCertificateError naming the offending node when the tree leaves the
    certifiable shape, and with the homogeneity degree attached when the
    tree is purely homogeneous.
    """
    pipeline = stages_outer_to_inner(tree)
    if len(pipeline) == 1 and isinstance(pipeline[0], Entrywise | VectorActivation):
        return pipeline[0].activation.certificate()

    mu: Optional[float] = None
    h_pending = 1.0
    range_class = Domain.POSITIVE_OPEN
    differentiable = True
    nonneg_jacobian = True
    translation_in_block = False
    saw_translation = False

    for node in reversed(pipeline):
        if isinstance(node, Linear):
            if mu is not None:
                raise NoCertificateError(
                    f"node {_describe(node)}: a general linear map after an activation "
                    "is outside the certifiable composition shape"
                )
            if translation_in_block:
                raise NoCertificateError(
                    f"node {_describe(node)}: a linear map applied after a translation "
                    "is not homogeneous, so the prefix cannot be certified"
                )
            range_class = Domain.ALL_REALS
            nonneg_jacobian = False
        elif isinstance(node, AbsLinear):
            if mu is not None:
                raise NoCertificateError(
                    f"node {_describe(node)}: a linear map after an activation "
                    "is outside the certifiable composition shape"
                )
            if translation_in_block:
                raise NoCertificateError(
                    f"node {_describe(node)}: a linear map applied after a translation "
                    "is not homogeneous, so the prefix cannot be certified"
                )
            if range_class is Domain.ALL_REALS:
                pass  # nonnegative matrix times signed input stays signed
            elif range_class is Domain.POSITIVE_OPEN and node.rows_all_nonzero:
                range_class = Domain.POSITIVE_OPEN
            else:
                range_class = Domain.POSITIVE_CLOSED
        elif isinstance(node, Power):
            if range_class is not Domain.POSITIVE_OPEN and node.exponent != 1.0:
                raise NoCertificateError(
                    f"node {_describe(node)}: fractional powers need a strictly "
                    f"positive argument, but the prefix ranges over {range_class.value}"
                )
            if mu is None:
                h_pending *= node.exponent
            else:
                mu *= node.exponent
        elif isinstance(node, Translation):
            if not node.nonnegative:
                raise NoCertificateError(
                    f"node {_describe(node)}: translation has negative entries, "
                    "violating the nonnegative-shift hypothesis"
                )
            translation_in_block = True
            saw_translation = True
            if range_class is Domain.POSITIVE_CLOSED and node.strictly_positive:
                range_class = Domain.POSITIVE_OPEN
        elif isinstance(node, Entrywise | VectorActivation):
            cert = node.activation.certificate()
            if not cert.domain.accepts(range_class):
                raise NoCertificateError(
                    f"node {_describe(node)}: certificate holds on {cert.domain.value} "
                    f"but the inner stages range over {range_class.value}"
                )
            if mu is None:
                mu = h_pending * cert.mu
                h_pending = 1.0
            else:
                mu *= cert.mu
            range_class = node.activation.output_range(range_class)
            differentiable = differentiable and cert.differentiable
            nonneg_jacobian = nonneg_jacobian and cert.positive_jacobian
            translation_in_block = False
        else:
            raise NoCertificateError(f"node {_describe(node)}: unknown node kind")

    if mu is None:
        if saw_translation:
            raise NoCertificateError(
                "tree has no activation stage; translated homogeneous prefixes "
                "are not certified on their own"
            )
        raise NoCertificateError(
            f"tree is purely {h_pending:g}-homogeneous; no subhomogeneity degree applies",
            homogeneity=h_pending,
        )
    if range_class is not Domain.POSITIVE_OPEN:
        raise NoCertificateError(
            "operator is not certifiably positive on the open positive cone "
            f"(final range class {range_class.value})"
        )
    return SubhomCertificate(mu, Domain.POSITIVE_OPEN, differentiable, nonneg_jacobian)


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of a sampled inequality check."""

    samples_tested: int
    max_violation: float
    worst_point: np.ndarray
    passed: bool
    tolerance: float = DEFAULT_VERIFY_TOL
    mu: float = float("nan")
    mode: str = "subhom"

    def to_dict(self):
        return {
            "samples_tested": self.samples_tested,
            "max_violation": self.max_violation,
            "worst_point": np.asarray(self.worst_point).tolist(),
            "passed": self.passed,
            "tolerance": self.tolerance,
            "mu": self.mu,
            "mode": self.mode,
        }


def _sample_points(domain: Domain, dim: int, n: int, gen: np.random.Generator) -> np.ndarray:
    if domain is Domain.ALL_REALS:
        return gen.uniform(-20.0, 20.0, size=(dim, n))
    return log_uniform((dim, n), gen)


def _resolve_dim(tree, dim: Optional[int]) -> int:
    try:
        inferred = infer_input_dim(tree)
    except AttributeError:
        inferred = None
    if inferred is not None:
        if dim is not None and dim != inferred:
            raise DimensionError(f"requested dim {dim} but the tree expects {inferred}")
        return inferred
    if dim is not None:
        return dim
    return 1


def verify_subhom(
    tree,
    mu: float,
    domain: Domain = Domain.POSITIVE_OPEN,
    n_samples: int = 10_000,
    rng: RngSpec | None = None,
    tol: float = DEFAULT_VERIFY_TOL,
    dim: Optional[int] = None,
    strong: bool = False,
) -> VerificationReport:
    """Sampled check of |J(z) z| <= mu F(z) (or |J| |z| <= mu F with strong=True).

    Violations are measured relative to 1 + |F(z)| entrywise because F
    values span orders of magnitude on the sampled cone. Raises
    DomainViolationError when a sample leaves the positivity domain of F,
    which Definition-style certificates require.
    """
    if rng is None:
        rng = RngSpec(0)
    gen = rng.generator()
    d = _resolve_dim(tree, dim)
    points = _sample_points(domain, d, n_samples, gen)

    if strong:
        worst = -np.inf
        worst_point = points[:, 0]
        for i in range(n_samples):
            z = points[:, i]
            values = np.atleast_1d(np.asarray(tree.apply(z), dtype=np.float64))
            if np.any(values <= 0.0):
                raise DomainViolationError(
                    f"F(z) is not strictly positive at sampled z = {z!r}"
                )
            lhs = np.abs(tree.jacobian(z)) @ np.abs(z)
            rel = float(np.max((lhs - mu * values) / (1.0 + np.abs(values))))
            if rel > worst:
                worst, worst_point = rel, z
        return VerificationReport(n_samples, worst, worst_point, worst <= tol, tol, mu, "strong-subhom")

    values, jz = value_and_jvp(tree, points, points)
    values = np.atleast_2d(values)
    jz = np.atleast_2d(jz)
    if np.any(values <= 0.0):
        bad = int(np.argmax(np.any(values <= 0.0, axis=0)))
        raise DomainViolationError(
            f"F(z) is not strictly positive at sampled z = {points[:, bad]!r}"
        )
    rel = (np.abs(jz) - mu * values) / (1.0 + np.abs(values))
    per_sample = rel.max(axis=0)
    worst_idx = int(np.argmax(per_sample))
    max_violation = float(per_sample[worst_idx])
    return VerificationReport(
        n_samples, max_violation, points[:, worst_idx], max_violation <= tol, tol, mu, "subhom"
    )


def subhom_check_at(tree, z, mu: float, strong: bool = False):
    """Pointwise inequality data: (lhs, F(z), entrywise slack mu F - lhs).

    Unlike the sampled verifier this does not require F(z) > 0, so it can
    exercise maps with a vanishing component, such as the counterexample
    below.
    """
    z = np.asarray(z, dtype=np.float64)
    values = np.atleast_1d(np.asarray(tree.apply(z), dtype=np.float64))
    jac = np.asarray(tree.jacobian(z), dtype=np.float64)
    lhs = np.abs(jac) @ np.abs(z) if strong else np.abs(jac @ z)
    return lhs, values, mu * values - lhs


def verify_scaling(
    tree,
    mu: float,
    domain: Domain = Domain.POSITIVE_OPEN,
    lambda_grid: Sequence[float] = (1.0, 2.0, 10.0),
    n_samples: int = 1_000,
    rng: RngSpec | None = None,
    tol: float = DEFAULT_VERIFY_TOL,
    dim: Optional[int] = None,
) -> VerificationReport:
    """Sampled check of F(lambda z) <= lambda^mu F(z) for lambda >= 1, z > 0.

    Meaningful for differentiable operators with an entrywise positive
    Jacobian on the cone, where the scaling bound characterizes the degree.
    """
    lambdas = [float(lam) for lam in lambda_grid]
    if any(lam < 1.0 for lam in lambdas):
        raise ParameterError(f"scaling grid must satisfy lambda >= 1, got {lambda_grid}")
    if domain is Domain.ALL_REALS:
        raise ParameterError("the scaling characterization lives on the positive cone")
    if rng is None:
        rng = RngSpec(0)
    gen = rng.generator()
    d = _resolve_dim(tree, dim)
    points = log_uniform((d, n_samples), gen)

    base = np.atleast_2d(np.asarray(tree.apply(points), dtype=np.float64))
    if np.any(base <= 0.0):
        bad = int(np.argmax(np.any(base <= 0.0, axis=0)))
        raise DomainViolationError(f"F(z) is not strictly positive at z = {points[:, bad]!r}")
    worst = -np.inf
    worst_point = points[:, 0]
    for lam in lambdas:
        scaled = np.atleast_2d(np.asarray(tree.apply(lam * points), dtype=np.float64))
        bound = lam**mu * base
        rel = (scaled - bound) / (1.0 + np.abs(bound))
        per_sample = rel.max(axis=0)
        idx = int(np.argmax(per_sample))
        if per_sample[idx] > worst:
            worst, worst_point = float(per_sample[idx]), points[:, idx]
    return VerificationReport(
        n_samples * len(lambdas), worst, worst_point, worst <= tol, tol, mu, "scaling"
    )


class PlanarCounterexample:
    """1-homogeneous map on R^2 that is not strongly 1-subhomogeneous.

    F(x, y) = (x^2 y / (x^2 + y^2), 0). Euler's identity makes the plain
    degree-1 inequality an equality wherever it is evaluated, while the
    strong variant fails: at z = (1, 2) the Jacobian is
    [[16/25, -3/25], [0, 0]], so |F'(z)| |z| = (22/25, 0) = (0.88, 0)
    strictly exceeds F(z) = (2/5, 0) = (0.4, 0) in the first component.
    """

    kind = "planar-counterexample"
    input_dim = 2
    output_dim = 2

    def apply(self, z):
        z = np.asarray(z, dtype=np.float64)
        x, y = z[0], z[1]
        r2 = x * x + y * y
        out = np.zeros_like(z)
        out[0] = x * x * y / r2
        return out

    def tangent(self, z, v):
        return self.apply(z), np.einsum("ij...,j...->i...", self._jac(z), np.asarray(v))

    def _jac(self, z):
        z = np.asarray(z, dtype=np.float64)
        x, y = z[0], z[1]
        r2 = x * x + y * y
        j = np.zeros((2, 2) + np.shape(x))
        j[0, 0] = 2.0 * x * y**3 / r2**2
        j[0, 1] = x * x * (x * x - y * y) / r2**2
        return j

    def jacobian(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1:
            raise DimensionError("jacobian needs a vector point")
        return self._jac(z)

    def to_dict(self):
        return {"kind": self.kind}


def operator_from_dict(d: dict) -> OperatorNode:
    kind = d.get("kind")
    if kind == "linear":
        return Linear(np.array(d["matrix"], dtype=np.float64))
    if kind == "abs-linear":
        return AbsLinear(np.array(d["matrix"], dtype=np.float64))
    if kind == "translation":
        return Translation(np.array(d["offset"], dtype=np.float64))
    if kind == "entrywise":
        return Entrywise(activation_from_dict(d["activation"]))
    if kind == "vector-activation":
        return VectorActivation(activation_from_dict(d["activation"]))
    if kind == "power":
        return Power(d["exponent"])
    if kind == "compose":
        children = [operator_from_dict(c) for c in d["children"]]
        if len(children) < 2:
            raise ParameterError("compose needs at least two children")
        return compose(*children)
    raise ParameterError(f"unknown operator kind {kind!r}")
