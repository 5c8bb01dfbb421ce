"""Batch experiment runner with machine-readable CSV/JSON outputs.

Commands: certify, converge, contract, unique, gradcheck, train, graph.
Each takes ``--config`` (JSON), ``--seed``, and ``--out``; flag values win
over config-file values, and every report embeds the resolved config and
seed so a run is reproducible from its own output. Exit codes: 0 when all
checks pass, 1 when a mathematical check fails, 2 on usage or config
errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .activations import (
    Approxmax,
    Domain,
    HardTanh,
    Relu,
    ShiftedTanh,
    Sigmoid,
    Softplus,
    Tanh,
    certificate,
    parse_activation,
)
from .deq import (
    DEQLayerConfig,
    build_layer,
    finite_difference_gradcheck,
    forward,
    save_dataset_csv,
    train_toy,
    two_gaussian_dataset,
)
from .exceptions import SubdeqError, UncertifiedLayerError
from .graph import (
    GraphPropagationConfig,
    erdos_renyi,
    linear_closed_form,
    propagate,
    propagation_tree,
    save_matrix_csv,
)
from .metric import NormalizationSpec, contraction_probe, normalize_columns
from .numerics import RngSpec, random_fill
from .operators import (
    Entrywise,
    PlanarCounterexample,
    VectorActivation,
    operator_from_dict,
    subhom_check_at,
    verify_scaling,
    verify_subhom,
)
from .solver import SolverConfig, uniqueness_probe

SCHEMA_VERSION = 1

CATALOG = (
    ("sigmoid", Sigmoid()),
    ("softplus", Softplus()),
    ("tanh", Tanh()),
    ("shifted-tanh-1.2", ShiftedTanh(1.2)),
    ("shifted-tanh-1.603", ShiftedTanh(1.603)),
    ("hardtanh-0.5-2", HardTanh(0.5, 2.0)),
    ("relu", Relu()),
    ("approxmax", Approxmax()),
)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _resolve(defaults: dict, args) -> dict:
    params = dict(defaults)
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        params.update(loaded)
    if args.seed is not None:
        params["seed"] = args.seed
    params.setdefault("seed", 0)
    return params


def _norm_p(p) -> float:
    return math.inf if p == "inf" else float(p)


def _layer_from_params(params: dict, seed: int) -> tuple[DEQLayerConfig, np.ndarray]:
    """Seeded layer weights plus a matching input sample."""
    n = int(params.get("n", 150))
    d = int(params.get("input_dim", 400))
    batch = int(params.get("batch", 0))
    w_rng, u_rng, b_rng, x_rng = RngSpec(seed, "standard-normal").split(4)
    W = random_fill((n, n), w_rng) / math.sqrt(n) * float(params.get("weight_scale", 1.0))
    U = random_fill((n, d), u_rng) / math.sqrt(d)
    b = 0.1 * random_fill((n,), b_rng)
    sigma1 = params.get("sigma1", "identity")
    sigma2 = params.get("sigma2", "shifted-tanh{alpha=1.603}")
    cfg = DEQLayerConfig(
        weights=W,
        injection_weights=U,
        injection_bias=b,
        injection_activation=parse_activation(params.get("injection_activation", "relu")),
        sigma1=None if sigma1 == "identity" else parse_activation(sigma1),
        sigma2=None if sigma2 == "identity" else parse_activation(sigma2),
        shift=float(params.get("shift", 0.0)),
        normalization=NormalizationSpec(p=_norm_p(params.get("p", "inf"))),
        abs_weights=bool(params.get("abs_weights", False)),
    )
    shape = (d, batch) if batch else (d,)
    x = random_fill(shape, RngSpec(x_rng.seed, "uniform01"))
    return cfg, x


def cmd_certify(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    target = params.get("target", "catalog")
    n_samples = int(params.get("n_samples", 10_000))
    results = []
    ok = True

    if target == "catalog":
        for sub, (name, act) in zip(RngSpec(seed).split(len(CATALOG)), CATALOG):
            cert = certificate(act)
            tree = VectorActivation(act) if name == "approxmax" else Entrywise(act)
            dim = 8 if name == "approxmax" else 1
            sub_report = verify_subhom(
                tree, cert.mu, cert.domain, n_samples, sub, dim=dim
            ).to_dict()
            entry = {
                "name": name,
                "mu": cert.mu,
                "domain": cert.domain.value,
                "subhom": sub_report,
            }
            if cert.differentiable and cert.positive_jacobian:
                entry["scaling"] = verify_scaling(
                    tree, cert.mu, Domain.POSITIVE_OPEN, (1.0, 2.0, 10.0), 1000, sub, dim=dim
                ).to_dict()
                ok = ok and entry["scaling"]["passed"]
            else:
                entry["scaling"] = None
            ok = ok and sub_report["passed"]
            results.append(entry)
    elif target == "counterexample":
        lhs, values, slack = subhom_check_at(
            PlanarCounterexample(), np.array(params.get("at", [1.0, 2.0])), 1.0, strong=True
        )
        passed = bool(np.all(slack >= 0.0))
        results.append(
            {
                "name": "planar-counterexample",
                "strong_lhs": lhs.tolist(),
                "value": values.tolist(),
                "slack": slack.tolist(),
                "passed": passed,
            }
        )
        ok = passed
    elif target == "operator":
        tree = operator_from_dict(params["operator"])
        mu = float(params["mu"])
        domain = Domain(params.get("domain", "positive-orthant-open"))
        sub_report = verify_subhom(
            tree, mu, domain, n_samples, RngSpec(seed), dim=params.get("dim")
        ).to_dict()
        entry = {"name": "operator", "mu": mu, "subhom": sub_report}
        if params.get("scaling", True):
            entry["scaling"] = verify_scaling(
                tree, mu, Domain.POSITIVE_OPEN, (1.0, 2.0, 10.0), 1000,
                RngSpec(seed), dim=params.get("dim"),
            ).to_dict()
            ok = ok and entry["scaling"]["passed"]
        ok = ok and sub_report["passed"]
        results.append(entry)
    else:
        raise ValueError(f"unknown certify target {target!r}")

    _write_json(out / "certify.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "certify",
        "config": params,
        "results": results,
        "passed": ok,
    })
    return 0 if ok else 1


def cmd_converge(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    params.setdefault("batch", 128)
    p_values = params.get("p_values", [1, 10, "inf"])
    rows = []
    summary = {}
    ok = True
    for p in p_values:
        run = dict(params)
        run["p"] = p
        cfg, x = _layer_from_params(run, seed)
        report = forward(
            cfg,
            x,
            SolverConfig(
                method=params.get("method", "picard"),
                tol=float(params.get("tol", 1e-3)),
                max_iter=int(params.get("max_iter", 500)),
            ),
        )
        label = f"p={p}"
        for k, r in enumerate(np.asarray(report.residual_trace), start=1):
            rows.append((label, k, float(r)))
        summary[label] = {
            "iterations": report.iterations,
            "converged": report.converged,
            "estimated_rate": report.estimated_rate,
        }
        ok = ok and report.converged
    _write_csv(out / "converge.csv", ["variant", "k", "residual"], rows)
    _write_json(out / "converge.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "converge",
        "config": params,
        "variants": summary,
        "passed": ok,
    })
    return 0 if ok else 1


_CONTRACT_LAYERS = [
    {"name": "shifted-tanh-1.603", "sigma2": "shifted-tanh{alpha=1.603}"},
    {"name": "powerscaled-tanh-abs", "sigma1": "tanh^0.99", "sigma2": "identity",
     "abs_weights": True},
]


def cmd_contract(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    n_pairs = int(params.get("n_pairs", 1000))
    results = {}
    ok = True
    layer_specs = params.get("layers", _CONTRACT_LAYERS)
    for sub, spec in zip(RngSpec(seed).split(len(layer_specs)), layer_specs):
        run = {**params, **spec}
        run.pop("layers", None)
        cfg, x = _layer_from_params(run, sub.seed)
        layer = build_layer(cfg)
        G = layer.equilibrium_map(x)
        cert = layer.certificate
        report = contraction_probe(
            G,
            n_pairs,
            cfg.width,
            sub,
            cert.mu,
            cert.differentiable and cert.positive_jacobian,
            slice_spec=cfg.normalization,
        )
        results[spec["name"]] = {"certificate_mu": cert.mu, **report.to_dict()}
        ok = ok and report.passed
    _write_json(out / "contract.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "contract",
        "config": params,
        "layers": results,
        "passed": ok,
    })
    return 0 if ok else 1


def cmd_unique(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    cfg, x = _layer_from_params(params, seed)
    layer = build_layer(cfg)
    G = layer.equilibrium_map(x)
    report = uniqueness_probe(
        G,
        int(params.get("n_starts", 10)),
        RngSpec(seed),
        SolverConfig(tol=float(params.get("tol", 1e-10)), max_iter=int(params.get("max_iter", 2000))),
        shape=cfg.width,
        threshold=float(params.get("threshold", 1e-6)),
    )
    _write_json(out / "unique.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "unique",
        "config": params,
        "probe": report.to_dict(),
        "passed": report.passed,
    })
    return 0 if report.passed else 1


def cmd_gradcheck(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    params.setdefault("n", 24)
    params.setdefault("input_dim", 8)
    cfg, x = _layer_from_params(params, seed)
    up_rng, coord_rng = RngSpec(seed).split(2)
    upstream = random_fill((cfg.width,), RngSpec(up_rng.seed, "standard-normal"))
    result = finite_difference_gradcheck(
        cfg,
        x,
        upstream,
        coords_per_block=int(params.get("coords_per_block", 20)),
        step=float(params.get("step", 1e-5)),
        rng=coord_rng,
        solver_tol=float(params.get("equilibrium_tol", 1e-10)),
    )
    threshold = float(params.get("threshold", 1e-4))
    ok = result["max_rel_error"] < threshold
    _write_json(out / "gradcheck.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "gradcheck",
        "config": params,
        "blocks": result["blocks"],
        "max_rel_error": result["max_rel_error"],
        "threshold": threshold,
        "passed": ok,
    })
    return 0 if ok else 1


def cmd_train(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    params.setdefault("n", 16)
    params.setdefault("input_dim", 2)
    data_rng, layer_rng, readout_rng = RngSpec(seed).split(3)
    X, labels = two_gaussian_dataset(int(params.get("n_points", 200)), data_rng)
    cfg, _ = _layer_from_params(params, layer_rng.seed)
    losses = train_toy(
        (X, labels),
        cfg,
        steps=int(params.get("steps", 200)),
        lr=float(params.get("lr", 0.05)),
        rng=readout_rng,
    )
    save_dataset_csv(out / "train_data.csv", X, labels)
    _write_csv(out / "train_loss.csv", ["step", "loss"],
               [(k, float(v)) for k, v in enumerate(losses)])
    ok = losses[-1] <= 0.5 * losses[0]
    _write_json(out / "train.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "config": params,
        "initial_loss": float(losses[0]),
        "final_loss": float(losses[-1]),
        "passed": bool(ok),
    })
    return 0 if ok else 1


def cmd_graph(params: dict, out: Path) -> int:
    seed = int(params["seed"])
    g_rng, f_rng, probe_rng, small_rng, small_f = RngSpec(seed).split(5)
    classes = int(params.get("classes", 4))
    alpha = float(params.get("alpha", 0.1))
    mode = params.get("adjacency_mode", "row-stochastic")

    small = erdos_renyi(int(params.get("small_nodes", 10)), 0.4, small_rng)
    small_inj = random_fill((small.node_count, classes), small_f)
    lin_cfg = GraphPropagationConfig(
        alpha=alpha, injection=small_inj, variant="linear",
        adjacency_mode=mode, tol=1e-12, max_iter=5000,
    )
    z_lin, lin_report = propagate(small, lin_cfg)
    closed = linear_closed_form(small, lin_cfg)
    lin_err = float(np.max(np.abs(z_lin - closed)))
    lin_ok = lin_err <= float(params.get("linear_threshold", 1e-8))

    g = erdos_renyi(int(params.get("nodes", 100)), float(params.get("edge_probability", 0.06)), g_rng)
    inj = random_fill((g.node_count, classes), f_rng)
    nl_cfg = GraphPropagationConfig(
        alpha=alpha, injection=inj, variant=params.get("variant", "tanh-outside"),
        adjacency_mode=mode, tol=float(params.get("tol", 1e-10)),
        max_iter=int(params.get("max_iter", 2000)),
    )
    z_nl, nl_report = propagate(g, nl_cfg)

    probe = uniqueness_probe(
        _nl_map(g, nl_cfg),
        int(params.get("n_starts", 5)),
        probe_rng,
        SolverConfig(tol=nl_cfg.tol, max_iter=nl_cfg.max_iter),
        shape=(g.node_count, classes),
        threshold=float(params.get("threshold", 1e-6)),
    )
    save_matrix_csv(out / "graph_equilibrium.csv", z_nl)
    ok = lin_ok and nl_report.converged and probe.passed
    _write_json(out / "graph.json", {
        "schema_version": SCHEMA_VERSION,
        "command": "graph",
        "config": params,
        "linear": {
            "max_abs_error_vs_closed_form": lin_err,
            "iterations": lin_report.iterations,
            "passed": lin_ok,
        },
        "nonlinear": {
            "iterations": nl_report.iterations,
            "converged": nl_report.converged,
            "estimated_rate": nl_report.estimated_rate,
            "uniqueness": probe.to_dict(),
        },
        "passed": ok,
    })
    return 0 if ok else 1


def _nl_map(g, cfg):
    tree = propagation_tree(g, cfg)
    spec = NormalizationSpec(p=math.inf, scope="columnwise")

    def G(Z):
        return normalize_columns(tree.apply(Z), spec)

    return G


_COMMANDS = {
    "certify": (cmd_certify, "verify activation and operator certificates"),
    "converge": (cmd_converge, "residual traces of the equilibrium iteration"),
    "contract": (cmd_contract, "empirical Thompson contraction ratios"),
    "unique": (cmd_unique, "multi-start fixed-point agreement probe"),
    "gradcheck": (cmd_gradcheck, "implicit gradients vs finite differences"),
    "train": (cmd_train, "toy training run on equilibrium features"),
    "graph": (cmd_graph, "graph propagation variants and oracles"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subdeq", description="Certified subhomogeneous equilibrium experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="global seed (wins over config)")
        p.add_argument("--out", type=str, default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[args.command][0]
    try:
        params = _resolve({}, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return handler(params, out)
    except UncertifiedLayerError as err:
        # a rejected layer is a failed mathematical check, not a usage error
        print(f"subdeq {args.command}: {err}", file=sys.stderr)
        return 1
    except (SubdeqError, ValueError, KeyError, OSError) as err:
        print(f"subdeq {args.command}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
