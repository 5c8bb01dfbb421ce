"""Certified deep-equilibrium layers with implicit-function-theorem gradients.

A layer is the normalized map

    G(z) = norm_phi( sigma1( sigma2(W z) + f(x) + shift ) )

with exactly one of sigma1, sigma2 different from the identity and an
entrywise nonnegative input injection f(x) = rho(U x + b). Construction
assembles the unnormalized operator as a composition tree, obtains its
subhomogeneity certificate from the operators calculus, and refuses any
configuration whose Thompson contraction bound reaches 1, so every layer
that exists has a unique equilibrium and a globally convergent iteration.

When sigma2 is the plain or shifted hyperbolic tangent the scalar shift is
folded into a shifted-tanh activation, which is what makes layers with
*general* weight matrices certifiable: the shifted activation is certified
on all of R, so W z may take any sign. With sigma1 active the weights pass
through their absolute values instead and the shift joins the injection.

Gradients traverse the equilibrium through the implicit function theorem:
(I - J_G^T) u = upstream is solved by a Neumann series, convergent because
the certificate bounds the spectral radius below 1, and u^T dG/dtheta is
assembled analytically per parameter block. The sup-norm normalization is
nonsmooth at argmax ties; the max-index subgradient (lowest index on
ties) is used, which is exact away from ties and ties have measure zero
under random weights.

A batch is a matrix whose columns are independent samples; the slice
normalization applies per column and the equilibrium solve runs all
columns jointly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels
from .activations import (
    Activation,
    ShiftedTanh,
    SubhomCertificate,
    Tanh,
    activation_name,
)
from .exceptions import (
    ConeViolationError,
    DimensionError,
    IllConditionedEquilibriumError,
    NoCertificateError,
    ParameterError,
    TrainingFailureError,
    UncertifiedLayerError,
)
from .metric import NormalizationSpec, normalize, normalize_columns
from .numerics import RngSpec
from .operators import (
    AbsLinear,
    Entrywise,
    Linear,
    OperatorNode,
    Translation,
    certified_degree,
    compose,
)
from .solver import FixedPointReport, SolverConfig, solve

NEUMANN_TOL = 1e-13


def _array(x, ndim, name):
    a = np.array(x, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} must be finite")
    return a


@dataclass(frozen=True, eq=False)
class DEQLayerConfig:
    """Weights and shape choices of one equilibrium layer.

    ``weights`` is the n x n hidden matrix W, ``injection_weights`` the
    n x d input matrix U, ``injection_bias`` the length-n vector b. The
    injection activation must have nonnegative output (relu, sigmoid,
    softplus, a shifted tanh with shift >= 1, ...) so the translation
    hypothesis of the composition certificate holds for every input.
    """

    weights: np.ndarray
    injection_weights: np.ndarray
    injection_bias: np.ndarray
    injection_activation: Activation
    sigma1: Optional[Activation] = None
    sigma2: Optional[Activation] = None
    shift: float = 0.0
    normalization: NormalizationSpec = NormalizationSpec()
    abs_weights: bool = False

    def __post_init__(self):
        W = _array(self.weights, 2, "weights")
        U = _array(self.injection_weights, 2, "injection_weights")
        b = _array(self.injection_bias, 1, "injection_bias")
        if W.shape[0] != W.shape[1]:
            raise DimensionError(f"hidden weights must be square, got {W.shape}")
        if U.shape[0] != W.shape[0] or b.shape[0] != W.shape[0]:
            raise DimensionError(
                f"injection shapes {U.shape}, {b.shape} do not match width {W.shape[0]}"
            )
        for arr in (W, U, b):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "injection_weights", U)
        object.__setattr__(self, "injection_bias", b)
        if (self.sigma1 is None) == (self.sigma2 is None):
            raise ParameterError("exactly one of sigma1, sigma2 must be an activation")
        if not self.shift >= 0.0:
            raise ParameterError(f"shift must be nonnegative, got {self.shift}")
        if not self.injection_activation.nonnegative_output:
            raise ParameterError(
                f"injection activation {activation_name(self.injection_activation)} "
                "can output negative values; the injection must be entrywise >= 0"
            )

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.injection_weights.shape[1]


def _fold_shift(sigma: Activation, shift: float) -> tuple[Activation, float]:
    """Move a scalar output shift into the tanh family where possible."""
    if shift == 0.0:
        return sigma, 0.0
    if isinstance(sigma, Tanh):
        return ShiftedTanh(shift), 0.0
    if isinstance(sigma, ShiftedTanh):
        return ShiftedTanh(sigma.alpha + shift), 0.0
    return sigma, shift


class Layer:
    """An accepted layer: config, certificate, and the equilibrium map."""

    def __init__(self, cfg: DEQLayerConfig):
        self.config = cfg
        n = cfg.width
        if cfg.sigma2 is not None:
            self._case = "sigma2"
            self._sigma, self._residual_shift = _fold_shift(cfg.sigma2, cfg.shift)
        else:
            self._case = "sigma1"
            self._sigma, self._residual_shift = cfg.sigma1, cfg.shift
        self._linear = AbsLinear(cfg.weights) if cfg.abs_weights else Linear(cfg.weights)
        self._fast_tanh = isinstance(self._sigma, (Tanh, ShiftedTanh))
        try:
            self.certificate: SubhomCertificate = certified_degree(
                self.operator_tree(np.zeros(n))
            )
        except NoCertificateError as err:
            raise UncertifiedLayerError(f"layer is not certifiable: {err}") from err
        bound = self.certificate.contraction_bound
        if bound >= 1.0:
            raise UncertifiedLayerError(
                f"certified degree mu = {self.certificate.mu} gives contraction bound "
                f"{bound} >= 1; the fixed point is not guaranteed unique "
                "(need mu < 1/2, or mu < 1 with a positive Jacobian)"
            )

    @property
    def contraction_bound(self) -> float:
        return self.certificate.contraction_bound

    def injection(self, x) -> np.ndarray:
        """f(x) = rho(U x + b), validated entrywise nonnegative."""
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != cfg.input_dim:
            raise DimensionError(f"input dim {x.shape[0]} != expected {cfg.input_dim}")
        pre = cfg.injection_weights @ x
        if pre.ndim == 1:
            pre = pre + cfg.injection_bias
        else:
            pre = pre + cfg.injection_bias[:, None]
        f = np.asarray(cfg.injection_activation.value(pre))
        if not np.all(np.isfinite(f)):
            raise ParameterError("injection produced non-finite values")
        if np.any(f < 0.0):
            raise ConeViolationError("injection output must be entrywise nonnegative")
        return f

    def operator_tree(self, f: np.ndarray) -> OperatorNode:
        """The unnormalized operator for a given injection value."""
        if self._case == "sigma2":
            return compose(
                Translation(f + self._residual_shift),
                Entrywise(self._sigma),
                self._linear,
            )
        return compose(
            Entrywise(self._sigma),
            Translation(f + self._residual_shift),
            self._linear,
        )

    def _unnormalized(self, f: np.ndarray):
        """Callable F(z); a fused kernel serves the tanh family fast path.

        The kernel path and the operator-tree path compute the same map;
        tests pin their agreement so the certificate always describes what
        the solver iterates.
        """
        A = self._linear.abs_matrix if self.config.abs_weights else self.config.weights
        if self._fast_tanh and self._case == "sigma2":
            alpha = self._sigma.alpha if isinstance(self._sigma, ShiftedTanh) else 0.0
            add = f + self._residual_shift

            def F(z):
                return _kernels.tanh_shift_add(A @ z, add, alpha)

            return F
        if self._fast_tanh and self._case == "sigma1":
            alpha = self._sigma.alpha if isinstance(self._sigma, ShiftedTanh) else 0.0
            add = f + self._residual_shift

            def F(z):
                if z.ndim == 2 and add.ndim == 1:
                    return _kernels.tanh_shift_add(A @ z + add[:, None], 0.0, alpha)
                return _kernels.tanh_shift_add(A @ z + add, 0.0, alpha)

            return F
        tree = self.operator_tree(f)
        return tree.apply

    def equilibrium_map(self, x):
        """G(z) = norm_phi(F(z; x)); batched inputs normalize per column."""
        f = self.injection(x)
        F = self._unnormalized(f)
        spec = self.config.normalization

        def G(z):
            out = F(np.asarray(z, dtype=np.float64))
            if out.ndim == 1:
                return normalize(out, spec)
            return normalize_columns(out, spec)

        return G


def build_layer(cfg: DEQLayerConfig) -> Layer:
    """Assemble and certify a layer; raises UncertifiedLayerError otherwise."""
    return Layer(cfg)


def forward(
    cfg: DEQLayerConfig,
    x,
    solver_cfg: SolverConfig | None = None,
    z0=None,
) -> FixedPointReport:
    """Equilibrium of the layer at input x, with phi(z*) = 1 per sample."""
    layer = build_layer(cfg)
    G = layer.equilibrium_map(x)
    x = np.asarray(x, dtype=np.float64)
    n = cfg.width
    if z0 is None:
        shape = (n,) if x.ndim == 1 else (n, x.shape[1])
        z0 = np.ones(shape)
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim == 1:
        z0 = normalize(z0, cfg.normalization)
    else:
        z0 = normalize_columns(z0, cfg.normalization)
    return solve(G, z0, solver_cfg)


@dataclass(frozen=True, eq=False)
class GradientBundle:
    dW: np.ndarray
    dU: np.ndarray
    db: np.ndarray
    dx: np.ndarray


def _norm_transpose_apply(F_val: np.ndarray, p: float, u: np.ndarray) -> np.ndarray:
    """J_norm(F)^T u for the slice map v -> v / phi(v), batched over columns.

    phi is the p-norm; for p = inf the argmax subgradient is used with
    ties broken at the lowest index (np.argmax convention).
    """
    single = F_val.ndim == 1
    F2 = F_val[:, None] if single else F_val
    u2 = u[:, None] if single else u
    if p == math.inf:
        phi = F2.max(axis=0)
        N = F2 / phi[None, :]
        dot = (N * u2).sum(axis=0)
        out = u2.copy()
        idx = np.argmax(F2, axis=0)
        cols = np.arange(F2.shape[1])
        out[idx, cols] -= dot
        out /= phi[None, :]
    else:
        phi = np.asarray(_kernels.column_pnorms(F2, p), dtype=np.float64)
        N = F2 / phi[None, :]
        w = N ** (p - 1.0)
        dot = (N * u2).sum(axis=0)
        out = (u2 - w * dot[None, :]) / phi[None, :]
    return out[:, 0] if single else out


def ift_gradient(
    cfg: DEQLayerConfig,
    x,
    z_star,
    upstream,
    solver_cfg: SolverConfig | None = None,
) -> GradientBundle:
    """Implicit gradients of <upstream, z*(theta, x)> at a solved equilibrium.

    Solves (I - J_G^T) u = upstream by the Neumann series, which converges
    because the certificate bounds the contraction factor below 1, then
    assembles u^T dG/dtheta analytically for theta in {W, U, b} and the
    input x. Only differentiable layers are accepted.
    """
    layer = build_layer(cfg)
    if not layer.certificate.differentiable:
        raise ParameterError(
            "implicit gradients need a differentiable layer; "
            f"{activation_name(layer._sigma)} has kinks"
        )
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z_star, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != z.shape:
        raise DimensionError("upstream must match the equilibrium shape")
    single = z.ndim == 1
    Z = z[:, None] if single else z
    X = x[:, None] if single else x
    Up = upstream[:, None] if single else upstream

    W = cfg.weights
    U = cfg.injection_weights
    A = np.abs(W) if cfg.abs_weights else W
    sigma = layer._sigma
    rho = cfg.injection_activation
    p = cfg.normalization.p
    f = layer.injection(x)
    F2 = f[:, None] if f.ndim == 1 else f

    P = U @ X + cfg.injection_bias[:, None]
    if layer._case == "sigma2":
        S = A @ Z
        F_val = np.asarray(sigma.value(S)) + F2 + layer._residual_shift
    else:
        S = A @ Z + F2 + layer._residual_shift
        F_val = np.asarray(sigma.value(S))
    sig_prime = np.asarray(sigma.derivative(S))

    def JG_T(V):
        return A.T @ (sig_prime * _norm_transpose_apply(F_val, p, V))

    bound = layer.contraction_bound
    max_terms = int(math.ceil(10.0 / (1.0 - bound)))
    u = Up.copy()
    term = Up.copy()
    for _ in range(max_terms):
        term = JG_T(term)
        u += term
        if np.linalg.norm(term) <= NEUMANN_TOL * (1.0 + np.linalg.norm(u)):
            break
    else:
        raise IllConditionedEquilibriumError(
            f"Neumann series for the adjoint solve did not converge in {max_terms} terms"
        )

    v = _norm_transpose_apply(F_val, p, u)
    d_sig = v * sig_prime
    rho_prime = np.asarray(rho.derivative(P))
    if layer._case == "sigma2":
        dW = d_sig @ Z.T
        e = v * rho_prime
    else:
        dW = d_sig @ Z.T
        e = d_sig * rho_prime
    if cfg.abs_weights:
        dW = dW * np.sign(W)
    dU = e @ X.T
    db = e.sum(axis=1)
    dx = U.T @ e
    return GradientBundle(dW=dW, dU=dU, db=db, dx=dx[:, 0] if single else dx)


def finite_difference_gradcheck(
    cfg: DEQLayerConfig,
    x,
    upstream,
    coords_per_block: int = 20,
    step: float = 1e-5,
    rng: RngSpec | None = None,
    solver_tol: float = 1e-10,
) -> dict:
    """Implicit gradients against central finite differences of the probe
    loss L(theta) = <upstream, z*(theta)>.

    The equilibrium at each perturbed theta is re-solved with a *fixed*
    iteration count (the count needed for ``solver_tol`` at theta, plus a
    cushion), so both sides of each difference quotient follow the same
    smooth map and tolerance-triggered early stops cannot pollute the
    quotient. Relative error per coordinate is |a - f| / max(|a|, |f|,
    1e-8); the report carries the max per block and overall.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if rng is None:
        rng = RngSpec(0)
    gen = rng.generator()

    base_cfg = SolverConfig(tol=solver_tol, max_iter=5000)
    base = forward(cfg, x, base_cfg)
    if not base.converged:
        raise ParameterError("equilibrium did not reach the requested tolerance")
    fixed = SolverConfig(tol=1e-300, max_iter=base.iterations + 25)
    analytic = ift_gradient(cfg, x, np.asarray(base.z_star), upstream)

    def loss(cfg_eval, x_eval):
        rep = forward(cfg_eval, x_eval, fixed)
        return float(np.sum(upstream * np.asarray(rep.z_star)))

    def rel_err(a, f):
        return abs(a - f) / max(abs(a), abs(f), 1e-8)

    blocks = {}
    worst = 0.0
    specs = {
        "W": (cfg.weights, analytic.dW),
        "U": (cfg.injection_weights, analytic.dU),
        "b": (cfg.injection_bias, analytic.db),
        "x": (x, analytic.dx),
    }
    for name, (value, grad) in specs.items():
        flat = np.array(value, dtype=np.float64).ravel()
        count = min(coords_per_block, flat.size)
        idx = gen.choice(flat.size, size=count, replace=False)
        block_worst = 0.0
        for i in idx:
            plus = flat.copy()
            minus = flat.copy()
            plus[i] += step
            minus[i] -= step
            if name == "x":
                lp = loss(cfg, plus.reshape(value.shape))
                lm = loss(cfg, minus.reshape(value.shape))
            else:
                field_name = {
                    "W": "weights", "U": "injection_weights", "b": "injection_bias"
                }[name]
                lp = loss(replace(cfg, **{field_name: plus.reshape(value.shape)}), x)
                lm = loss(replace(cfg, **{field_name: minus.reshape(value.shape)}), x)
            fd = (lp - lm) / (2.0 * step)
            block_worst = max(block_worst, rel_err(float(grad.ravel()[i]), fd))
        blocks[name] = block_worst
        worst = max(worst, block_worst)
    return {"blocks": blocks, "max_rel_error": worst, "iterations": base.iterations}


def two_gaussian_dataset(
    n_points: int, rng: RngSpec, separation: float = 3.0
) -> tuple[np.ndarray, np.ndarray]:
    """Two separated 2-D Gaussian blobs, labels 0/1; points in columns."""
    if n_points < 2:
        raise ParameterError("need at least 2 points")
    gen = rng.generator()
    half = n_points // 2
    n1 = n_points - half
    c0 = np.array([-separation / 2.0, 0.0])
    c1 = np.array([separation / 2.0, 0.0])
    pts0 = gen.standard_normal((2, half)) * 0.6 + c0[:, None]
    pts1 = gen.standard_normal((2, n1)) * 0.6 + c1[:, None]
    X = np.concatenate([pts0, pts1], axis=1)
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = gen.permutation(n_points)
    return X[:, perm], labels[perm]


def save_dataset_csv(path, X, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "label"])
        for j in range(X.shape[1]):
            writer.writerow([repr(float(X[0, j])), repr(float(X[1, j])), int(labels[j])])


def load_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["x1", "x2", "label"]:
            raise ParameterError(f"{path}: expected header x1,x2,label")
        for row in reader:
            xs.append([float(row[0]), float(row[1])])
            ys.append(int(row[2]))
    return np.asarray(xs).T, np.asarray(ys, dtype=np.int64)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def train_toy(
    dataset: tuple[np.ndarray, np.ndarray],
    cfg: DEQLayerConfig,
    steps: int = 200,
    lr: float = 0.05,
    rng: RngSpec | None = None,
    solver_cfg: SolverConfig | None = None,
) -> np.ndarray:
    """Full-batch SGD on equilibrium features with a linear softmax readout.

    Every step solves the batched equilibrium, backpropagates the
    cross-entropy through the implicit function theorem into W, U, b and
    directly into the readout, and applies plain gradient steps. The layer
    is rebuilt (and so re-certified) after each update. Returns the
    per-step loss trace, deterministic in (dataset, cfg, rng).
    """
    X, labels = dataset
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != cfg.input_dim:
        raise DimensionError(f"dataset points must be {cfg.input_dim}-D columns")
    n_classes = int(labels.max()) + 1
    n_pts = X.shape[1]
    onehot = np.zeros((n_classes, n_pts))
    onehot[labels, np.arange(n_pts)] = 1.0

    if rng is None:
        rng = RngSpec(0)
    gen = rng.generator()
    R = 0.05 * gen.standard_normal((n_classes, cfg.width))
    c = np.zeros(n_classes)
    if solver_cfg is None:
        solver_cfg = SolverConfig(tol=1e-8, max_iter=300)

    W = np.array(cfg.weights)
    U = np.array(cfg.injection_weights)
    b = np.array(cfg.injection_bias)
    losses = np.empty(steps)

    for step in range(steps):
        step_cfg = replace(cfg, weights=W, injection_weights=U, injection_bias=b)
        report = forward(step_cfg, X, solver_cfg)
        Z = np.asarray(report.z_star)
        logits = R @ Z + c[:, None]
        probs = _softmax_rows(logits)
        loss = float(-np.mean(np.log(np.maximum(probs[labels, np.arange(n_pts)], 1e-300))))
        if not math.isfinite(loss):
            raise TrainingFailureError(f"loss became non-finite at step {step}")
        losses[step] = loss

        dlogits = (probs - onehot) / n_pts
        dR = dlogits @ Z.T
        dc = dlogits.sum(axis=1)
        upstream = R.T @ dlogits
        grads = ift_gradient(step_cfg, X, Z, upstream, solver_cfg)

        W = W - lr * grads.dW
        U = U - lr * grads.dU
        b = b - lr * grads.db
        R = R - lr * dR
        c = c - lr * dc
    return losses
