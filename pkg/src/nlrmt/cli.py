"""Command-line entry point: ``nlrmt <command> [options]`` or ``python3 -m nlrmt``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 acceptance failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import acceptance, cactus, io, laws
from . import activation as act
from . import montecarlo as mc
from . import stieltjes as st

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4

RUN_SCHEMA = copy.deepcopy(mc.CONFIG_SCHEMA)
RUN_SCHEMA["properties"]["output"] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dir": {"type": "string"},
        "svg": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
        "compare": {"type": "boolean"},
    },
}

THETA2_ZERO = 1e-12  # relative to theta1: below this the limit is Marchenko-Pastur


def number(text: str) -> Fraction:
    """Parse '0.5', '1/2' or '2' exactly."""
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _param(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    key, val = text.split("=", 1)
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


# --------------------------------------------------------------------------
# Argument groups
# --------------------------------------------------------------------------


def _add_activation(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("activation")
    g.add_argument("--f", default="tanh", help="kind: linear, tanh, cos, softplus, monomial, polynomial, hermite3, tabulated, relu")
    g.add_argument("--param", action="append", type=_param, default=[], metavar="NAME=VALUE", help="kind parameter (JSON values), repeatable")
    g.add_argument("--activation", type=json.loads, help="full activation spec as a JSON object (overrides --f/--param)")
    g.add_argument("--unit-theta1", action="store_true", help="rescale so theta1 = 1")
    g.add_argument("--no-center", action="store_true", help="skip Gaussian centering")
    g.add_argument("--experimental", action="store_true", help="allow non-analytic kinds (relu)")


def _add_sigmas(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma-w", type=float, default=1.0)
    p.add_argument("--sigma-x", type=float, default=1.0)


def _add_law(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("limit law", "give theta1/theta2 directly, or derive them from the activation")
    g.add_argument("--theta1", type=number)
    g.add_argument("--theta2", type=number)
    g.add_argument("--phi", type=number, default=Fraction(1))
    g.add_argument("--psi", type=number, default=Fraction(1))


def _activation(args) -> act.ActivationSpec:
    sigma = args.sigma_w * args.sigma_x
    if args.activation is not None:
        return act.from_json(args.activation, sigma)
    obj: dict[str, Any] = {"kind": args.f, "params": dict(args.param), "auto_center": not args.no_center}
    if args.unit_theta1:
        obj["scale"] = "unit-theta1"
    if args.experimental:
        obj["experimental"] = True
    return act.from_json(obj, sigma)


def _law_params(args, exact: bool = False) -> st.LawParams:
    if (args.theta1 is None) != (args.theta2 is None):
        raise ValueError("give both --theta1 and --theta2, or neither")
    if args.theta1 is None:
        th = act.compute_thetas(_activation(args), args.sigma_w, args.sigma_x)
        return st.LawParams(th.theta1, th.theta2, float(args.phi), float(args.psi))
    vals = (args.theta1, args.theta2, args.phi, args.psi)
    if not exact:
        vals = tuple(float(v) for v in vals)
    return st.LawParams(*vals)


def _is_mp(theta1: float, theta2: float) -> bool:
    return float(theta2) <= THETA2_ZERO * float(theta1)


def _echo(args) -> dict:
    return {k: (str(v) if isinstance(v, Fraction) else v) for k, v in vars(args).items() if k not in ("handler",)}


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_thetas(args) -> int:
    f = _activation(args)
    th = act.compute_thetas(f, args.sigma_w, args.sigma_x)
    hp = act.hermite_projection(f, th.sigma_product)
    out = {
        "activation": act.to_json(f),
        "sigma_w": args.sigma_w,
        "sigma_x": args.sigma_x,
        "theta1": th.theta1,
        "theta2": th.theta2,
        "theta3": th.theta3,
        "center": f.center,
        "hermite_theta2": float(hp.coefficients[1] ** 2),
        "hermite_delta": abs(float(hp.coefficients[1] ** 2) - th.theta2),
        "hermite_tail": hp.tail,
    }
    for k in ("theta1", "theta2", "theta3", "center", "hermite_delta"):
        print(f"{k:14s} {out[k]:.15g}")
    if args.json:
        io.write_json(args.json, {**out, "config": _echo(args)})
    return EXIT_OK


def cmd_counts(args) -> int:
    qs = range(1, args.q + 1) if args.all else [args.q]
    out_dir = Path(args.out) if args.out else None
    for q in qs:
        table = cactus.count_table(q)
        print(f"q={q}: {len(table.counts)} classes, {table.total} admissible graphs of {cactus.bell(q) ** 2}")
        if args.show:
            for row in table.rows():
                print(" ", ",".join(str(v) for v in row))
        if out_dir:
            io.write_counts(out_dir / f"counts_q{q}.csv", table, {"q": q, "config": _echo(args)})
    return EXIT_OK


def cmd_moments(args) -> int:
    p = _law_params(args, exact=not args.float)
    if args.q_max > cactus.Q_MAX:
        raise cactus.CapacityError(f"q_max={args.q_max} exceeds {cactus.Q_MAX}")
    series = st.moments_from_equation(p, args.q_max)
    mp = _is_mp(p.theta1, p.theta2)
    header = ["q", "cactus", "series", "delta"] + (["mp"] if mp else [])
    rows = []
    print(",".join(header))
    for q in range(1, args.q_max + 1):
        c = cactus.moment(q, p.theta1, p.theta2, p.phi, p.psi)
        s = series[q]
        row = [q, c, s, c - s]
        if mp:
            shape = Fraction(p.phi) / Fraction(p.psi) if isinstance(p.phi, Fraction) else p.phi / p.psi
            row.append(cactus.mp_moment(q, shape, p.theta1))
        rows.append(row)
        print(",".join(io.fmt(v) for v in row))
    if args.out:
        io.write_csv(args.out, header, rows, {"params": p.as_dict(), "exact": not args.float, "config": _echo(args)})
    return EXIT_OK


def _grid_config(args) -> st.GridConfig:
    return st.GridConfig(n_points=args.n_points, x_min=args.x_min, x_max=args.x_max, eta=args.eta, richardson=not args.no_richardson)


def cmd_density(args) -> int:
    p = _law_params(args)
    law = st.density(p, _grid_config(args))
    a, b = law.support
    print(f"support [{a:.10g}, {b:.10g}]  atom {law.atom_at_zero:.10g}  mass {law.total_mass_check:.6f}  m1 {law.moment(1):.6f}")
    if args.out:
        io.write_density(args.out, law, {"config": _echo(args)})
    return EXIT_OK


def _run_config_from_args(args) -> mc.EnsembleConfig:
    f = _activation(args)
    psi = [float(v) for v in args.psi_list] if getattr(args, "psi_list", None) else [float(args.psi)]
    shape = mc.ModelShape.from_ratios(args.n0, float(args.phi), psi, args.sigma_w, args.sigma_x)
    return mc.EnsembleConfig(
        shape=shape,
        activation=f,
        dist_w=mc.DistributionSpec(args.dist_w, args.sigma_w**2),
        dist_x=mc.DistributionSpec(args.dist_x, args.sigma_x**2),
        trials=args.trials,
        seed=args.seed,
        multilayer=len(psi) > 1 or args.command == "multilayer",
        gamma_list=tuple(args.gamma or ()),
    )


def _load_run_config(args) -> tuple[mc.EnsembleConfig, dict]:
    """Run config from --config (JSON, schema-checked) or from flags; flags for output still apply."""
    if not args.config:
        return _run_config_from_args(args), {}
    import jsonschema

    obj = json.loads(Path(args.config).read_text())
    jsonschema.validate(obj, RUN_SCHEMA)
    output = obj.pop("output", {})
    return mc.config_from_json(obj), output


def _reference_law(config: mc.EnsembleConfig, layer_index: int | None = None):
    """Limit law for the spectrum being compared, or None when there is no closed route."""
    th = config.thetas()
    sh = config.shape
    if config.multilayer:
        if not _is_mp(th.theta1, th.theta2):
            return None
        k = layer_index or sh.layers
        return laws.mp_law(sh.phi / math.prod(sh.psi_list[:k]), 1.0)
    if _is_mp(th.theta1, th.theta2):
        return laws.mp_law(sh.phi / sh.psi, th.theta1)
    return st.density(st.LawParams(th.theta1, th.theta2, sh.phi, sh.psi))


def _write_svg(path: Path, spectra, law, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "nlrmt"
    hist, edges = mc.histogram(spectra)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.stairs(hist, edges, fill=True, alpha=0.4, label="empirical")
    if law is not None:
        ax.plot(law.grid, law.rho, "r-", lw=1.2, label="limit density")
        ax.set_ylim(0, 1.3 * float(np.max(hist)))
    ax.set_xlabel("eigenvalue")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _simulate(args, layered: bool) -> int:
    config, output = _load_run_config(args)
    out = Path(output.get("dir", args.out))
    workers = output.get("workers", args.workers)
    want_svg = output.get("svg", args.svg)
    want_compare = output.get("compare", not args.no_compare)
    out.mkdir(parents=True, exist_ok=True)
    runs = mc.run_trials(config, workers)
    echo = mc.config_to_json(config)
    report: dict[str, Any] = {"config": echo, "layers": []}
    n_layers = config.shape.layers if layered else 1
    for k in range(1, n_layers + 1):
        idx = k if layered else config.shape.layers
        spectra = mc.layer(runs, idx)
        name = f"eigenvalues_layer{idx}.csv" if layered else "eigenvalues.csv"
        io.write_eigenvalues(out / name, spectra, {"config": echo, "layer": idx})
        entry: dict[str, Any] = {"layer": idx, "file": name}
        means, se = mc.moment_statistics(spectra, 4)
        entry["moments"] = [{"q": q + 1, "mean": means[q], "se": se[q]} for q in range(4)]
        if want_compare:
            law = _reference_law(config, idx)
            if law is not None:
                theory = None
                if not config.multilayer:
                    th = config.thetas()
                    sh = config.shape
                    theory = [float(cactus.moment(q, th.theta1, th.theta2, sh.phi, sh.psi)) for q in range(1, 5)]
                rep = mc.compare(spectra, law, 4, theory)
                entry["comparison"] = rep.as_dict()
                print(f"layer {idx}: KS {rep.ks_distance:.4f}  L1 {rep.l1_cdf_distance:.5f}  "
                      + " ".join(f"z{q}={z:+.2f}" for q, _, _, z in rep.moment_gaps))
                if want_svg:
                    svg = out / (f"histogram_layer{idx}.svg" if layered else "histogram.svg")
                    _write_svg(svg, spectra, law, f"{config.activation.kind}, layer {idx}, {len(spectra)} trials")
                    entry["svg"] = svg.name
            else:
                entry["comparison"] = None
                print(f"layer {idx}: no closed-form limit law (theta2 > 0 beyond one layer); moments only")
        report["layers"].append(entry)
    if config.gamma_list and not config.multilayer:
        th = config.thetas()
        params = st.LawParams(th.theta1, th.theta2, config.shape.phi, config.shape.psi)
        final = mc.final_layer(runs)
        report["ridge"] = [
            {
                "gamma": g,
                "empirical": float(np.mean([mc.ridge_trace_from_eigenvalues(s.eigenvalues, s.shape.m, g) for s in final])),
                "theory": st.ridge_trace(params, g).trace_per_m,
            }
            for g in config.gamma_list
        ]
    io.write_json(out / "report.json", report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(args, layered=False)


def cmd_multilayer(args) -> int:
    return _simulate(args, layered=True)


def cmd_ridge(args) -> int:
    p = _law_params(args)
    rows = []
    for g in args.gamma:
        r = st.ridge_trace(p, g)
        row = [g, r.trace_per_m, r.expected_loss_scaled]
        if args.n0:
            f = act.make("linear") if args.theta1 is not None else _activation(args)
            if args.theta1 is not None and not (p.theta1 == 1 and p.theta2 == 1):
                raise ValueError("--n0 with explicit thetas only supports the linear case theta1 = theta2 = 1; pass --f instead")
            cfg = mc.EnsembleConfig(
                mc.ModelShape.from_ratios(args.n0, p.phi, p.psi, args.sigma_w, args.sigma_x),
                f,
                dist_w=mc.DistributionSpec("gaussian", args.sigma_w**2),
                dist_x=mc.DistributionSpec("gaussian", args.sigma_x**2),
                trials=args.trials,
                seed=args.seed,
            )
            spectra = mc.final_layer(mc.run_trials(cfg, args.workers))
            row.append(float(np.mean([mc.ridge_trace_from_eigenvalues(s.eigenvalues, s.shape.m, g) for s in spectra])))
        rows.append(row)
        print(",".join(io.fmt(v) for v in row))
    if args.out:
        header = ["gamma", "trace_per_m", "expected_loss_scaled"] + (["empirical"] if args.n0 else [])
        io.write_csv(args.out, header, rows, {"params": p.as_dict(), "config": _echo(args)})
    return EXIT_OK


def cmd_verify(args) -> int:
    results = acceptance.run_all(selected=set(args.criteria) if args.criteria else None, workers=args.workers)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    if args.out:
        io.write_json(args.out, {"results": [r.as_dict() for r in results], "failed": failed})
    return EXIT_ACCEPTANCE if failed else EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlrmt", description="Spectra of nonlinear random matrices f(WX) f(WX)*/m.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="JSON file with option values (unknown keys are rejected)")
        p.set_defaults(handler=handler)
        return p

    p = add("thetas", cmd_thetas, "Gaussian functionals theta1, theta2, theta3 of an activation")
    _add_activation(p)
    _add_sigmas(p)
    p.add_argument("--json", help="write the result to this JSON file")

    p = add("counts", cmd_counts, "exact admissible-graph counts A(q, I_i, I_j, b)")
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--all", action="store_true", help="every q from 1 to --q")
    p.add_argument("--show", action="store_true", help="print the rows")
    p.add_argument("--out", help="directory for counts_q<q>.csv")

    p = add("moments", cmd_moments, "limiting moments from the graph counts and from the fixed-point equation")
    _add_law(p)
    _add_activation(p)
    _add_sigmas(p)
    p.add_argument("--q-max", type=int, default=6)
    p.add_argument("--float", action="store_true", help="floating point instead of exact rationals")
    p.add_argument("--out", help="CSV path")

    p = add("density", cmd_density, "limiting spectral density by Stieltjes inversion")
    _add_law(p)
    _add_activation(p)
    _add_sigmas(p)
    p.add_argument("--n-points", type=int, default=4000)
    p.add_argument("--x-min", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--no-richardson", action="store_true")
    p.add_argument("--out", help="CSV path (x, rho) plus a .meta.json sidecar")

    for name, handler, help_ in (
        ("simulate", cmd_simulate, "Monte Carlo spectra of one layer, compared with the limit law"),
        ("multilayer", cmd_multilayer, "Monte Carlo spectra of every layer of a deep network"),
    ):
        p = add(name, handler, help_)
        _add_activation(p)
        _add_sigmas(p)
        p.add_argument("--n0", type=int, default=2000 if name == "simulate" else 1000)
        p.add_argument("--phi", type=number, default=Fraction(1))
        if name == "simulate":
            p.add_argument("--psi", type=number, default=Fraction(1))
        else:
            p.add_argument("--psi-list", type=number, nargs="+", default=[Fraction(1)] * 3)
        p.add_argument("--dist-w", default="gaussian", choices=mc.DISTRIBUTIONS)
        p.add_argument("--dist-x", default="gaussian", choices=mc.DISTRIBUTIONS)
        p.add_argument("--trials", type=int, default=10)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--gamma", type=float, nargs="*", help="ridge parameters to evaluate")
        p.add_argument("--workers", type=int, default=1, help="worker processes (output does not depend on it)")
        p.add_argument("--out", default="nlrmt-out", help="output directory")
        p.add_argument("--svg", action="store_true", help="write a histogram with the limit density")
        p.add_argument("--no-compare", action="store_true", help="skip the comparison with the limit law")

    p = add("ridge", cmd_ridge, "ridge trace (1/m) Tr (Y*Y/m + gamma)^-1 and the scaled training loss")
    _add_law(p)
    _add_activation(p)
    _add_sigmas(p)
    p.add_argument("--gamma", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--n0", type=int, help="also simulate at this size")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path")

    p = add("verify", cmd_verify, "run the acceptance suite")
    p.add_argument("--criteria", type=int, nargs="*", help="subset of criteria numbers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="JSON report path")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str], args) -> argparse.Namespace:
    """Use a --config JSON as defaults for the chosen subcommand; explicit flags still win."""
    if args.command in ("simulate", "multilayer") or not args.config:
        return args
    obj = json.loads(Path(args.config).read_text())
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in subparser._actions} - {"help", "config", "handler"}
    keys = {k.replace("-", "_"): v for k, v in obj.items()}
    unknown = set(keys) - dests
    if unknown:
        raise ValueError(f"unknown config fields for {args.command}: {sorted(unknown)}")
    for action in subparser._actions:
        if action.dest in keys and action.type is number:
            v = keys[action.dest]
            keys[action.dest] = [number(str(x)) for x in v] if isinstance(v, list) else number(str(v))
    subparser.set_defaults(**keys)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    import jsonschema

    try:
        args = _apply_config(parser, argv, args)
        return args.handler(args)
    except (ValueError, jsonschema.ValidationError, MemoryError, FileNotFoundError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (st.SolverError, act.QuadratureError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
