"""Catalog of subhomogeneous activation functions.

Every activation here ships three things: a closed-form value, one element
of its Clarke generalized derivative (with a documented selection at
kinks), and a certificate ``(mu, domain, flags)`` stating where the
defining inequality

    |sigma'(z) * z| <= mu * sigma(z)

is guaranteed. Degrees are exact where the supremum of |z sigma'(z)| /
sigma(z) has a closed form (it is 1 for sigmoid, softplus, tanh, hardtanh,
relu, and the log-sum-exp max approximation). For the shifted hyperbolic
tangent tanh(z) + alpha the supremum has no closed form; the granted
degrees are frozen upper bounds of high-resolution numerical maximizations
(reproducible with ``estimate_degree``):

    alpha = 1.2    sup = 0.9991232...   granted degree 0.9992
    alpha = 1.603  sup = 0.4991952...   granted degree 0.4993

Granting anything below the supremum would be unsound: the verifier in
``operators.verify_subhom`` locates the violation near |z| = 1.2 and
|z| = 0.99 respectively (pinned as negative tests). Both granted degrees
keep the properties the fixed-point theory needs: below 1 for alpha >= 1.2
and below 1/2 for alpha >= 1.603.

Kink selections: relu'(0) = 0, leaky-relu'(0) = slope, hardtanh' = 1 at
both breakpoints. Any Clarke element satisfies the certificate inequality,
so the selection is free; these choices keep iterates inside the positive
orthant.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DimensionError, NoCertificateError, ParameterError

# Frozen covering degrees for tanh(z) + alpha (see module docstring).
SHIFTED_TANH_DEGREE_BELOW_ONE = 0.9992
SHIFTED_TANH_DEGREE_BELOW_HALF = 0.4993
SHIFTED_TANH_THRESHOLD_BELOW_ONE = 1.2
SHIFTED_TANH_THRESHOLD_BELOW_HALF = 1.603


class Domain(enum.Enum):
    """Where a certificate's inequality holds; doubles as a range class."""

    POSITIVE_OPEN = "positive-orthant-open"
    POSITIVE_CLOSED = "positive-orthant-closed"
    ALL_REALS = "all-reals"

    def accepts(self, other: "Domain") -> bool:
        """True when values ranging over ``other`` stay inside this domain."""
        if self is Domain.ALL_REALS:
            return True
        if self is Domain.POSITIVE_CLOSED:
            return other in (Domain.POSITIVE_OPEN, Domain.POSITIVE_CLOSED)
        return other is Domain.POSITIVE_OPEN


@dataclass(frozen=True)
class SubhomCertificate:
    """Degree mu, certification domain, and the Lipschitz-bound flags."""

    mu: float
    domain: Domain
    differentiable: bool
    positive_jacobian: bool

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"certificate degree must be positive, got {self.mu}")

    @property
    def contraction_bound(self) -> float:
        """Thompson-metric Lipschitz bound after normalization.

        mu when the operator is differentiable with an entrywise
        nonnegative Jacobian on the positive cone, 2*mu otherwise.
        """
        if self.differentiable and self.positive_jacobian:
            return self.mu
        return 2.0 * self.mu


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        ez = np.exp(z)
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), ez / (1.0 + ez))


@dataclass(frozen=True)
class Sigmoid:
    kind = "sigmoid"
    nonnegative_output = True

    def value(self, z):
        return _sigmoid(z)

    def derivative(self, z):
        s = _sigmoid(z)
        return s * (1.0 - s)

    def output_range(self, input_range: Domain) -> Domain:
        return Domain.POSITIVE_OPEN

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.POSITIVE_CLOSED, True, True)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Softplus:
    beta: float = 1.0
    kind = "softplus"
    nonnegative_output = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"softplus needs beta > 0, got {self.beta}")

    def value(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.logaddexp(0.0, self.beta * z) / self.beta

    def derivative(self, z):
        return _sigmoid(self.beta * np.asarray(z, dtype=np.float64))

    def output_range(self, input_range: Domain) -> Domain:
        return Domain.POSITIVE_OPEN

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.POSITIVE_CLOSED, True, True)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta}


@dataclass(frozen=True)
class Tanh:
    kind = "tanh"
    nonnegative_output = False

    def value(self, z):
        return np.tanh(np.asarray(z, dtype=np.float64))

    def derivative(self, z):
        t = np.tanh(np.asarray(z, dtype=np.float64))
        return 1.0 - t * t

    def output_range(self, input_range: Domain) -> Domain:
        return input_range

    def certificate(self) -> SubhomCertificate:
        # tanh(0) = 0 would break positivity of the denominator, so the
        # certificate lives on the open orthant rather than the closed one.
        return SubhomCertificate(1.0, Domain.POSITIVE_OPEN, True, True)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ShiftedTanh:
    alpha: float
    kind = "shifted-tanh"

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ParameterError("shifted-tanh needs a finite shift")

    @property
    def nonnegative_output(self):
        return self.alpha >= 1.0

    def value(self, z):
        return np.tanh(np.asarray(z, dtype=np.float64)) + self.alpha

    def derivative(self, z):
        t = np.tanh(np.asarray(z, dtype=np.float64))
        return 1.0 - t * t

    def output_range(self, input_range: Domain) -> Domain:
        if self.alpha > 1.0:
            return Domain.POSITIVE_OPEN
        if self.alpha >= 1.0:
            return Domain.POSITIVE_CLOSED
        return Domain.ALL_REALS

    def certificate(self) -> SubhomCertificate:
        if self.alpha >= SHIFTED_TANH_THRESHOLD_BELOW_HALF:
            mu = SHIFTED_TANH_DEGREE_BELOW_HALF
        elif self.alpha >= SHIFTED_TANH_THRESHOLD_BELOW_ONE:
            mu = SHIFTED_TANH_DEGREE_BELOW_ONE
        else:
            raise NoCertificateError(
                f"shifted-tanh with alpha = {self.alpha} has no certified degree; "
                f"a degree below 1 is granted only for alpha >= "
                f"{SHIFTED_TANH_THRESHOLD_BELOW_ONE}"
            )
        return SubhomCertificate(mu, Domain.ALL_REALS, True, True)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class HardTanh:
    alpha1: float
    alpha2: float
    kind = "hardtanh"

    def __post_init__(self):
        if not 0 < self.alpha1 < self.alpha2 < math.inf:
            raise ParameterError(
                f"hardtanh needs 0 < alpha1 < alpha2 < inf, got ({self.alpha1}, {self.alpha2})"
            )

    @property
    def nonnegative_output(self):
        return True

    def value(self, z):
        return np.clip(np.asarray(z, dtype=np.float64), self.alpha1, self.alpha2)

    def derivative(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.where((z >= self.alpha1) & (z <= self.alpha2), 1.0, 0.0)

    def output_range(self, input_range: Domain) -> Domain:
        return Domain.POSITIVE_OPEN

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.ALL_REALS, False, False)

    def to_dict(self):
        return {"kind": self.kind, "alpha1": self.alpha1, "alpha2": self.alpha2}


@dataclass(frozen=True)
class Relu:
    kind = "relu"
    nonnegative_output = True

    def value(self, z):
        return np.maximum(np.asarray(z, dtype=np.float64), 0.0)

    def derivative(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.where(z > 0, 1.0, 0.0)

    def output_range(self, input_range: Domain) -> Domain:
        if input_range is Domain.POSITIVE_OPEN:
            return Domain.POSITIVE_OPEN
        return Domain.POSITIVE_CLOSED

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.POSITIVE_OPEN, False, False)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class LeakyRelu:
    slope: float
    kind = "leaky-relu"
    nonnegative_output = False

    def __post_init__(self):
        if not 0 < self.slope < 1:
            raise ParameterError(f"leaky-relu slope must lie in (0, 1), got {self.slope}")

    def value(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.where(z >= 0, z, self.slope * z)

    def derivative(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.where(z > 0, 1.0, self.slope)

    def output_range(self, input_range: Domain) -> Domain:
        return input_range

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.POSITIVE_OPEN, False, False)

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope}


@dataclass(frozen=True)
class Approxmax:
    """Vector-level smooth max: z -> ln(sum_i e^{z_i})."""

    kind = "approxmax"
    nonnegative_output = False

    def value(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.size == 0:
            raise DimensionError("approxmax of an empty vector")
        m = z.max(axis=0, keepdims=True)
        return (m + np.log(np.exp(z - m).sum(axis=0, keepdims=True)))[0]

    def derivative(self, z):
        """Softmax gradient; entries sum to 1 for every z."""
        z = np.asarray(z, dtype=np.float64)
        if z.size == 0:
            raise DimensionError("approxmax of an empty vector")
        e = np.exp(z - z.max(axis=0, keepdims=True))
        return e / e.sum(axis=0, keepdims=True)

    def output_range(self, input_range: Domain) -> Domain:
        if input_range is Domain.POSITIVE_OPEN:
            return Domain.POSITIVE_OPEN
        if input_range is Domain.POSITIVE_CLOSED:
            return Domain.POSITIVE_CLOSED
        return Domain.ALL_REALS

    def certificate(self) -> SubhomCertificate:
        return SubhomCertificate(1.0, Domain.POSITIVE_CLOSED, True, True)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class PowerScaled:
    """Entrywise power of a base activation: z -> base(z)^exponent.

    The power map x -> x^a is strongly a-subhomogeneous, so the composition
    carries degree exponent * base_degree. Requires the base to be positive
    on its certified domain (all catalog members are, given their domains).
    """

    base: "Activation"
    exponent: float
    kind = "power-scaled"

    def __post_init__(self):
        if not 0 < self.exponent <= 1:
            raise ParameterError(
                f"power exponent must lie in (0, 1], got {self.exponent}"
            )
        if isinstance(self.base, PowerScaled):
            raise ParameterError("nest exponents by multiplying, not by wrapping twice")

    @property
    def nonnegative_output(self):
        return self.base.nonnegative_output

    def value(self, z):
        return np.power(self.base.value(z), self.exponent)

    def derivative(self, z):
        b = self.base.value(z)
        return self.exponent * np.power(b, self.exponent - 1.0) * self.base.derivative(z)

    def output_range(self, input_range: Domain) -> Domain:
        return self.base.output_range(input_range)

    def certificate(self) -> SubhomCertificate:
        base_cert = self.base.certificate()
        domain = base_cert.domain
        if domain is Domain.POSITIVE_CLOSED:
            # base(0) may vanish and x^(a-1) blows up there; stay in the interior
            domain = Domain.POSITIVE_OPEN
        return SubhomCertificate(
            self.exponent * base_cert.mu,
            domain,
            base_cert.differentiable,
            base_cert.positive_jacobian,
        )

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "exponent": self.exponent}


Activation = Union[
    Sigmoid, Softplus, Tanh, ShiftedTanh, HardTanh, Relu, LeakyRelu, Approxmax, PowerScaled
]

SCALAR_KINDS = ("sigmoid", "softplus", "tanh", "shifted-tanh", "hardtanh", "relu", "leaky-relu")


def is_vector_activation(a: Activation) -> bool:
    base = a.base if isinstance(a, PowerScaled) else a
    return isinstance(base, Approxmax)


def act_eval(a: Activation, z):
    """Closed-form activation value; scalar in, scalar out."""
    out = a.value(z)
    return float(out) if np.ndim(out) == 0 else out


def act_derivative(a: Activation, z):
    """One element of the Clarke generalized derivative at z."""
    out = a.derivative(z)
    return float(out) if np.ndim(out) == 0 else out


def act_eval_vec(a: Activation, z):
    """Entrywise application; approxmax maps the whole vector to a scalar."""
    z = np.asarray(z, dtype=np.float64)
    if is_vector_activation(a):
        if z.size == 0:
            raise DimensionError("approxmax of an empty vector")
        out = a.value(z)
        return float(out) if np.ndim(out) == 0 else out
    return a.value(z)


def certificate(a: Activation) -> SubhomCertificate:
    """The catalog certificate; raises NoCertificateError when none exists."""
    return a.certificate()


def power_scale(a: Activation, alpha: float) -> Activation:
    """a(z)^alpha with certificate degree alpha * mu(a); alpha in (0, 1]."""
    if not 0 < alpha <= 1:
        raise ParameterError(f"power exponent must lie in (0, 1], got {alpha}")
    a.certificate()  # the base must itself be certifiable
    if alpha == 1.0:
        return a
    if isinstance(a, PowerScaled):
        return PowerScaled(a.base, a.exponent * alpha)
    return PowerScaled(a, alpha)


def estimate_degree(a: Activation, n_points: int = 10_000, domain: Domain | None = None) -> float:
    """Numerical degree: sup over a log-spaced grid of |z sigma'(z)| / sigma(z).

    Diagnostic only; certificates are granted from the frozen catalog
    records, never from this estimator. sigma(z) is clamped below at
    1e-300 to avoid division blowup near zeros of the activation.
    """
    if is_vector_activation(a):
        raise ParameterError("the univariate degree estimator needs an entrywise activation")
    if domain is None:
        domain = a.certificate().domain
    if domain is Domain.ALL_REALS:
        t = np.logspace(-4, math.log10(20.0), n_points // 2)
        grid = np.concatenate([-t[::-1], t])
    else:
        grid = np.logspace(-4, 3, n_points)
    num = np.abs(grid * np.asarray(a.derivative(grid)))
    den = np.maximum(np.asarray(a.value(grid)), 1e-300)
    return float(np.max(num / den))


_NAME_RE = re.compile(r"^(?P<kind>[a-z0-9-]+)(\{(?P<params>[^}]*)\})?(\^(?P<power>[0-9.]+))?$")


def activation_name(a: Activation) -> str:
    """Config-file spelling, e.g. ``shifted-tanh{alpha=1.603}`` or ``tanh^0.99``."""
    if isinstance(a, PowerScaled):
        return f"{activation_name(a.base)}^{a.exponent:g}"
    d = a.to_dict()
    kind = d.pop("kind")
    if not d:
        return kind
    params = ",".join(f"{k}={v:g}" for k, v in sorted(d.items()))
    return f"{kind}{{{params}}}"


def parse_activation(name: str) -> Activation:
    """Inverse of :func:`activation_name` for catalog activations."""
    m = _NAME_RE.match(name.strip())
    if m is None:
        raise ParameterError(f"cannot parse activation name {name!r}")
    kind = m.group("kind")
    params: dict[str, float] = {}
    if m.group("params"):
        for item in m.group("params").split(","):
            key, _, val = item.partition("=")
            if not _:
                raise ParameterError(f"malformed activation parameter {item!r} in {name!r}")
            params[key.strip()] = float(val)
    base = activation_from_dict({"kind": kind, **params})
    if m.group("power"):
        return power_scale(base, float(m.group("power")))
    return base


def activation_from_dict(d: dict) -> Activation:
    kind = d.get("kind")
    params = {k: v for k, v in d.items() if k != "kind"}
    if kind == "sigmoid":
        return Sigmoid()
    if kind == "softplus":
        return Softplus(**params)
    if kind == "tanh":
        return Tanh()
    if kind == "shifted-tanh":
        return ShiftedTanh(**params)
    if kind == "hardtanh":
        return HardTanh(**params)
    if kind == "relu":
        return Relu()
    if kind == "leaky-relu":
        return LeakyRelu(**params)
    if kind == "approxmax":
        return Approxmax()
    if kind == "power-scaled":
        return PowerScaled(activation_from_dict(params["base"]), params["exponent"])
    raise ParameterError(f"unknown activation kind {kind!r}")
