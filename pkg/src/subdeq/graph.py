"""Nonlinear graph propagation with certified convergence.

The linear baseline iterates the personalized-PageRank diffusion

    Z <- (1 - alpha) A~ Z + alpha f(X),      A~ from A + I,

whose fixed point is the resolvent alpha (I - (1-alpha) A~)^{-1} f(X). The
nonlinear variants wrap the propagation in a shifted hyperbolic tangent
and project every embedding column back onto the sup-norm slice:

    tanh-outside:  Z <- norm_inf_cols( tanh((1-alpha) A~ Z) + alpha f(X) + shift )
    tanh-inside:   Z <- norm_inf_cols( tanh((1-alpha) A~ Z + alpha f(X)) + shift )

Both assemble as operator trees over the nonnegative propagation matrix,
so the composition calculus certifies a degree below one with an entrywise
nonnegative Jacobian and the columnwise fixed point is unique with a
linearly convergent iteration.

Two standard propagation-matrix normalizations are provided and the choice
is exposed: row-stochastic D~^{-1} (A + I) (default) and symmetric
D~^{-1/2} (A + I) D~^{-1/2}. Iteration runs either to a residual tolerance
or to a step cap, whichever the configuration reaches first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .activations import ShiftedTanh
from .exceptions import (
    DimensionError,
    EdgeRangeError,
    GraphParseError,
    NoCertificateError,
    ParameterError,
    UncertifiedLayerError,
)
from .metric import NormalizationSpec, normalize_columns
from .numerics import RngSpec
from .operators import AbsLinear, Entrywise, Translation, certified_degree, compose
from .solver import FixedPointReport, SolverConfig, solve

_VARIANTS = ("linear", "tanh-outside", "tanh-inside")
_MODES = ("row-stochastic", "symmetric")


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph as a deduplicated edge list; no stored self-loops."""

    node_count: int
    edges: tuple[tuple[int, int], ...]
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.node_count < 1:
            raise ParameterError(f"node_count must be positive, got {self.node_count}")
        for i, j in self.edges:
            if i == j:
                raise ParameterError(f"self-loop ({i}, {j}) must not be stored")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise EdgeRangeError(
                    f"edge ({i}, {j}) references a node >= node_count {self.node_count}"
                )

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def graph_from_edges(node_count: int, edge_iter, features=None) -> Graph:
    """Normalize an edge iterable: orient, deduplicate, drop self-loops."""
    edges = sorted({(min(i, j), max(i, j)) for i, j in edge_iter if i != j})
    return Graph(node_count, tuple(edges), features)


def load_edge_list(path, node_count: Optional[int] = None) -> Graph:
    """Whitespace-separated integer pairs, one edge per line; '#' comments.

    Duplicate and reversed edges collapse to one undirected edge and
    self-loops are dropped (they re-enter through the identity shift of
    the propagation matrix).
    """
    pairs = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise GraphParseError(f"{path}:{ln}: expected two node indices, got {raw!r}")
            try:
                i, j = int(tokens[0]), int(tokens[1])
            except ValueError as err:
                raise GraphParseError(f"{path}:{ln}: non-integer node index in {raw!r}") from err
            if i < 0 or j < 0:
                raise GraphParseError(f"{path}:{ln}: negative node index in {raw!r}")
            pairs.append((i, j))
    if node_count is None:
        if not pairs:
            raise GraphParseError(f"{path}: empty edge list needs an explicit node_count")
        node_count = max(max(i, j) for i, j in pairs) + 1
    return graph_from_edges(node_count, pairs)


def erdos_renyi(node_count: int, edge_probability: float, rng: RngSpec) -> Graph:
    """Seeded G(n, p) random graph."""
    if not 0 <= edge_probability <= 1:
        raise ParameterError(f"edge probability must lie in [0, 1], got {edge_probability}")
    gen = rng.generator()
    iu = np.triu_indices(node_count, k=1)
    mask = gen.random(iu[0].size) < edge_probability
    edges = list(zip(iu[0][mask].tolist(), iu[1][mask].tolist()))
    return graph_from_edges(node_count, edges)


def adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        A[i, j] = 1.0
        A[j, i] = 1.0
    return A


def normalized_adjacency(g: Graph, mode: str = "row-stochastic") -> np.ndarray:
    """Normalized propagation matrix built from A + I (so no zero degrees)."""
    if mode not in _MODES:
        raise ParameterError(f"adjacency mode must be one of {_MODES}, got {mode!r}")
    shifted = adjacency(g) + np.eye(g.node_count)
    deg = shifted.sum(axis=1)
    if mode == "row-stochastic":
        return shifted / deg[:, None]
    d = 1.0 / np.sqrt(deg)
    return shifted * d[:, None] * d[None, :]


@dataclass(frozen=True, eq=False)
class GraphPropagationConfig:
    """Teleport coefficient, variant, propagation matrix mode, injection.

    ``injection`` is the precomputed nonnegative matrix f(X) with one row
    per node; training the injection network is out of scope here.
    ``alpha = 1`` (teleport-only) is rejected unless the testing override
    ``allow_teleport_only`` is set.
    """

    alpha: float
    injection: np.ndarray
    variant: str = "tanh-outside"
    adjacency_mode: str = "row-stochastic"
    shift: float = 1.2
    tol: float = 1e-6
    max_iter: int = 500
    allow_teleport_only: bool = False

    def __post_init__(self):
        alpha_ok = 0.0 < self.alpha < 1.0 or (self.allow_teleport_only and self.alpha == 1.0)
        if not alpha_ok:
            raise ParameterError(
                f"teleport coefficient must lie in (0, 1), got {self.alpha}"
            )
        if self.variant not in _VARIANTS:
            raise ParameterError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.adjacency_mode not in _MODES:
            raise ParameterError(f"adjacency mode must be one of {_MODES}")
        inj = np.array(self.injection, dtype=np.float64)
        if inj.ndim != 2:
            raise DimensionError(f"injection must be a node x class matrix, got {inj.shape}")
        if not np.all(np.isfinite(inj)) or np.any(inj < 0.0):
            raise ParameterError("injection must be finite and entrywise nonnegative")
        inj.setflags(write=False)
        object.__setattr__(self, "injection", inj)
        if not self.tol > 0 or self.max_iter < 1:
            raise ParameterError("tol must be positive and max_iter >= 1")


def propagation_tree(g: Graph, cfg: GraphPropagationConfig):
    """The unnormalized nonlinear operator as a certifiable tree."""
    M = AbsLinear((1.0 - cfg.alpha) * normalized_adjacency(g, cfg.adjacency_mode))
    act = Entrywise(ShiftedTanh(cfg.shift))
    inject = Translation(cfg.alpha * cfg.injection)
    if cfg.variant == "tanh-outside":
        return compose(inject, act, M)
    if cfg.variant == "tanh-inside":
        return compose(act, inject, M)
    raise ParameterError(f"no operator tree for the {cfg.variant!r} variant")


def propagate(
    g: Graph, cfg: GraphPropagationConfig, z0=None
) -> tuple[np.ndarray, FixedPointReport]:
    """Run the configured propagation to its fixed point.

    The linear variant iterates without normalization, matching the
    PageRank diffusion; nonlinear variants solve the columnwise-normalized
    fixed point and refuse to run without a certificate.
    """
    n = g.node_count
    f = cfg.injection
    if f.shape[0] != n:
        raise DimensionError(f"injection has {f.shape[0]} rows for {n} nodes")
    solver_cfg = SolverConfig(
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        positivity="none" if cfg.variant == "linear" else "strict",
    )

    if cfg.variant == "linear":
        M = (1.0 - cfg.alpha) * normalized_adjacency(g, cfg.adjacency_mode)
        target = cfg.alpha * f

        def G(Z):
            return M @ Z + target

        start = np.array(target) if z0 is None else np.asarray(z0, dtype=np.float64)
        if np.all(start == 0.0):
            start = np.full_like(f, 1.0)
        report = solve(G, start, solver_cfg)
        return np.asarray(report.z_star), report

    tree = propagation_tree(g, cfg)
    try:
        cert = certified_degree(tree)
    except NoCertificateError as err:
        raise UncertifiedLayerError(f"graph variant is not certifiable: {err}") from err
    if cert.contraction_bound >= 1.0:
        raise UncertifiedLayerError(
            f"certified degree {cert.mu} gives bound {cert.contraction_bound} >= 1"
        )
    spec = NormalizationSpec(p=np.inf, scope="columnwise")

    def G(Z):
        return normalize_columns(tree.apply(Z), spec)

    start = np.ones_like(f) if z0 is None else np.asarray(z0, dtype=np.float64)
    start = normalize_columns(start, spec)
    report = solve(G, start, solver_cfg)
    return np.asarray(report.z_star), report


def linear_closed_form(g: Graph, cfg: GraphPropagationConfig) -> np.ndarray:
    """Dense resolvent alpha (I - (1-alpha) A~)^{-1} f, the linear oracle."""
    M = normalized_adjacency(g, cfg.adjacency_mode)
    n = g.node_count
    return np.linalg.solve(np.eye(n) - (1.0 - cfg.alpha) * M, cfg.alpha * cfg.injection)


def softmax_readout(Z) -> np.ndarray:
    """Rowwise softmax with max-subtraction stabilization; rows sum to 1."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DimensionError(f"softmax readout expects a matrix, got shape {Z.shape}")
    e = np.exp(Z - Z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def save_matrix_csv(path, M, header: Optional[list[str]] = None) -> None:
    M = np.asarray(M, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is None:
            header = [f"c{j}" for j in range(M.shape[1])]
        writer.writerow(header)
        for row in M:
            writer.writerow([repr(float(v)) for v in row])


def load_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if row:
                rows.append([float(v) for v in row])
    if not rows:
        raise ParameterError(f"{path}: no data rows")
    return np.asarray(rows)
