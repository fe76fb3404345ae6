"""Command-line front end.

Every subcommand writes a JSON report (optionally a CSV of support cells)
and exits 0 on success, 2 when a verification assertion in the report is
false, and 1 on usage errors.  Reports embed the tool version, the fully
resolved parameters, the seed, and the wall-clock time; two runs with the
same parameters and seed differ only in the timing field.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__, diff, experiments, extremal, io, structure
from .core import (
    Coulomb1D,
    ProductSpace,
    TransportError,
    make_cost,
)
from .solver import solve_exact


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the report contract reserves 2 for
    # verification failures, so remap usage problems to exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(parser, marginals=False, cost=False, coupling=False, sampled=False):
    parser.add_argument("--out", help="path for the JSON report (default: stdout)")
    parser.add_argument(
        "--format", choices=("json", "csv"), default="json", dest="fmt",
        help="report format; csv writes support cells where applicable",
    )
    if marginals:
        parser.add_argument(
            "--marginal", action="append", required=True, metavar="FILE",
            help="marginal JSON file; repeat once per axis",
        )
    if cost:
        parser.add_argument(
            "--cost", required=True, choices=("coulomb1d", "expcos", "xyz", "twowell"),
        )
    if coupling:
        parser.add_argument("--coupling", required=True, metavar="FILE")
    if sampled:
        parser.add_argument("--samples", type=int, default=20)
        parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol-support", type=float, default=1e-10)
    parser.add_argument("--tol-dual", type=float, default=1e-9)
    parser.add_argument("--tol-grad", type=float, default=1e-6)


def _load_space(paths) -> ProductSpace:
    return ProductSpace([io.load_marginal(p) for p in paths])


def _sample_points(cost_kind, rng):
    if cost_kind == "expcos":
        coords = rng.uniform(-1.0, 1.0, size=6)
        return (coords[0:2], coords[2:4], coords[4:6])
    while True:
        coords = rng.uniform(0.0, 1.0, size=3)
        if len(set(np.round(coords, 12))) == 3 and np.min(np.diff(np.sort(coords))) > 1e-3:
            return tuple(coords.reshape(3, 1))


def _emit(args, command, spec, assertions, payload, seed=None, started=None):
    report = {
        "tool": "mmotlab",
        "version": __version__,
        "command": command,
        "spec": spec,
        "seed": seed,
        "timing_seconds": time.monotonic() - started if started else 0.0,
        "assertions": assertions,
        "payload": payload,
    }
    if args.fmt == "csv" and "coupling" in payload:
        rows = [
            entry["idx"] + [entry["mass"]]
            for entry in payload["coupling"]["entries"]
        ]
        target = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = csv.writer(target)
            writer.writerow(
                [f"idx{a + 1}" for a in range(len(rows[0]) - 1)] + ["mass"]
            )
            writer.writerows(rows)
        finally:
            if args.out:
                target.close()
    else:
        text = json.dumps(report, indent=1, sort_keys=True)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    return 2 if any(not a["passed"] for a in assertions) else 0


def _duals_to_list(duals):
    return [[float(v) for v in u] for u in duals.values]


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_solve(args, started):
    space = _load_space(args.marginal)
    model = make_cost(args.cost)
    result = solve_exact(model, space, tol_dual=args.tol_dual)
    payload = {
        "primal_value": result.primal_value,
        "dual_value": result.dual_value,
        "iterations": result.iterations,
        "coupling": io.coupling_to_dict(result.plan),
        "duals": _duals_to_list(result.duals),
    }
    gap = result.primal_value - result.dual_value
    assertions = [
        {
            "name": "duality_gap",
            "passed": gap <= args.tol_dual * (1.0 + abs(result.primal_value)),
            "detail": f"gap={gap:.3e}",
        }
    ]
    spec = {"marginals": args.marginal, "cost": args.cost, "tol_dual": args.tol_dual}
    return _emit(args, "solve", spec, assertions, payload, started=started)


def _cmd_decompose(args, started):
    space = _load_space(args.marginal)
    plan = io.load_coupling(args.coupling, space)
    decomp = structure.decompose_graphs(plan, tol_mass=args.tol_support)
    branches = {
        str(i1): [
            {"target": list(br.target), "alpha": br.alpha, "graph": br.graph_label}
            for br in row
        ]
        for i1, row in decomp.branches.items()
    }
    payload = {"k": decomp.k, "branches": branches}
    spec = {"marginals": args.marginal, "coupling": args.coupling,
            "tol_support": args.tol_support}
    return _emit(args, "decompose", spec, [], payload, started=started)


def _cmd_check_monotone(args, started):
    space = _load_space(args.marginal)
    model = make_cost(args.cost)
    plan = io.load_coupling(args.coupling, space)
    violations = structure.check_c_monotone(
        model, plan.support(args.tol_support), space
    )
    payload = {
        "violations": [
            {
                "cell_a": list(v.cell_a),
                "cell_b": list(v.cell_b),
                "positive_part": list(v.positive_part),
                "defect": v.defect,
            }
            for v in violations
        ]
    }
    assertions = [
        {
            "name": "no_monotonicity_violations",
            "passed": not violations,
            "detail": f"{len(violations)} violations",
        }
    ]
    spec = {"marginals": args.marginal, "cost": args.cost, "coupling": args.coupling}
    return _emit(args, "check-monotone", spec, assertions, payload, started=started)


def _cmd_check_splitting(args, started):
    space = _load_space(args.marginal)
    model = make_cost(args.cost)
    result = solve_exact(model, space, tol_dual=args.tol_dual)
    report = structure.splitting_support(model, space, result.duals,
                                         tol_split=args.tol_dual)
    support = set(result.plan.support(args.tol_support))
    payload = {
        "splitting_cells": sorted(list(c) for c in report.cells),
        "max_violation": report.max_violation,
        "support_size": len(support),
    }
    assertions = [
        {
            "name": "plan_support_inside_splitting_set",
            "passed": support <= report.cells,
            "detail": "",
        }
    ]
    spec = {"marginals": args.marginal, "cost": args.cost,
            "tol_dual": args.tol_dual}
    return _emit(args, "check-splitting", spec, assertions, payload, started=started)


def _cmd_twist_count(args, started):
    space = _load_space(args.marginal)
    model = make_cost(args.cost)
    result = solve_exact(model, space, tol_dual=args.tol_dual)
    split = structure.splitting_support(model, space, result.duals,
                                        tol_split=args.tol_dual)
    twist = structure.twist_multiplicity(model, split, space, tol_grad=args.tol_grad)
    payload = {
        "max_multiplicity": twist.max_multiplicity,
        "n_clusters": len(twist.clusters),
        "flagged_cells": sorted(list(c) for c in twist.flagged_cells),
    }
    spec = {"marginals": args.marginal, "cost": args.cost, "tol_grad": args.tol_grad}
    return _emit(args, "twist-count", spec, [], payload, started=started)


def _cmd_signature(args, started):
    model = make_cost(args.cost)
    rng = np.random.default_rng(args.seed)
    triples = []
    for _ in range(args.samples):
        point = _sample_points(args.cost, rng)
        sig = diff.signature(diff.hessian_offdiag(model, point).assembled)
        triples.append(sig.triple)
        print(f"({sig.n_plus},{sig.n_minus},{sig.n_zero})")
    payload = {"signatures": [list(t) for t in triples]}
    spec = {"cost": args.cost, "samples": args.samples}
    return _emit(args, "signature", spec, [], payload,
                 seed=args.seed, started=started)


def _cmd_criterion3(args, started):
    model = make_cost(args.cost)
    rng = np.random.default_rng(args.seed)
    results = []
    all_negative = True
    for _ in range(args.samples):
        point = _sample_points(args.cost, rng)
        report = diff.three_marginal_criterion(model, point)
        all_negative = all_negative and report.negative_definite
        results.append(
            {
                "product": [[float(v) for v in row] for row in report.product],
                "negative_definite": report.negative_definite,
            }
        )
    payload = {"samples": results, "all_negative_definite": all_negative}
    spec = {"cost": args.cost, "samples": args.samples}
    return _emit(args, "criterion3", spec, [], payload,
                 seed=args.seed, started=started)


def _cmd_extremal(args, started):
    space = _load_space(args.marginal)
    plan = io.load_coupling(args.coupling, space)
    cert = extremal.is_vertex(plan)
    payload = {
        "is_extremal": cert.is_extremal,
        "kernel_direction": (
            None
            if cert.kernel_direction is None
            else [{"idx": list(k), "coeff": v} for k, v in sorted(cert.kernel_direction.items())]
        ),
    }
    spec = {"marginals": args.marginal, "coupling": args.coupling}
    return _emit(args, "extremal", spec, [], payload, started=started)


def _cmd_thm41(args, started):
    space = _load_space(args.marginal)
    with open(args.maps) as fh:
        data = json.load(fh)
    maps = [
        ({int(k): v for k, v in m["H"].items()}, {int(k): v for k, v in m["K"].items()})
        for m in data["maps"]
    ]
    theta = {int(k): v for k, v in data["theta"].items()} if "theta" in data else None
    report = extremal.check_thm41(space, maps, theta=theta)
    payload = {
        "hypothesis_i": report.hypothesis_i,
        "hypothesis_ii": report.hypothesis_ii,
        "hypothesis_iii": report.hypothesis_iii,
        "theta": {str(k): v for k, v in report.theta.items()} if report.theta else None,
        "cycle": list(report.cycle) if report.cycle else None,
        "failures": [list(map(str, f)) for f in report.failures],
    }
    assertions = [
        {"name": "hypothesis_i", "passed": report.hypothesis_i, "detail": ""},
        {"name": "hypothesis_ii", "passed": report.hypothesis_ii, "detail": ""},
        {"name": "hypothesis_iii", "passed": report.hypothesis_iii, "detail": ""},
    ]
    spec = {"marginals": args.marginal, "maps": args.maps}
    return _emit(args, "thm41", spec, assertions, payload, started=started)


def _cmd_witness(args, started):
    space = _load_space(args.marginal)
    plan = io.load_coupling(args.coupling, space)
    model = make_cost(args.cost) if args.cost else None
    sets = [
        [int(v) for v in s.split(",") if v != ""]
        for s in (args.s1, args.s2, args.s3)
    ]
    witness = extremal.symmetry_witness(plan, *sets, model=model)
    payload = {
        "coupling": io.coupling_to_dict(witness),
        "tv_distance": plan.tv_distance(witness),
    }
    assertions = [
        {
            "name": "witness_differs_from_plan",
            "passed": plan.tv_distance(witness) > 1e-12,
            "detail": "",
        }
    ]
    spec = {"marginals": args.marginal, "coupling": args.coupling,
            "s1": args.s1, "s2": args.s2, "s3": args.s3, "cost": args.cost}
    return _emit(args, "witness", spec, assertions, payload, started=started)


def _cmd_repro(args, started):
    overrides = {}
    if args.grid_size is not None:
        overrides["grid_size"] = args.grid_size
    if args.seed is not None:
        overrides["seed"] = args.seed
    spec, _ = experiments._REGISTRY.get(args.name, (None, None))
    if spec is None:
        names = ", ".join(sorted(experiments._REGISTRY))
        print(f"unknown experiment {args.name!r}; registered: {names}", file=sys.stderr)
        return 1
    overrides = {k: v for k, v in overrides.items() if k in spec.params}
    report = experiments.run_experiment(args.name, **overrides)
    return _emit(
        args,
        f"repro {args.name}",
        report["spec"],
        report["assertions"],
        report["payload"],
        seed=report["spec"]["params"].get("seed"),
        started=started,
    )


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmotlab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the transport LP exactly")
    _add_common(p, marginals=True, cost=True)
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("decompose", help="decompose a coupling into graphs")
    _add_common(p, marginals=True, coupling=True)
    p.set_defaults(handler=_cmd_decompose)

    p = sub.add_parser("check-monotone", help="pairwise exchange inequality")
    _add_common(p, marginals=True, cost=True, coupling=True)
    p.set_defaults(handler=_cmd_check_monotone)

    p = sub.add_parser("check-splitting", help="tight cells of the LP duals")
    _add_common(p, marginals=True, cost=True)
    p.set_defaults(handler=_cmd_check_splitting)

    p = sub.add_parser("twist-count", help="gradient-cluster multiplicity")
    _add_common(p, marginals=True, cost=True)
    p.set_defaults(handler=_cmd_twist_count)

    p = sub.add_parser("signature", help="off-diagonal Hessian signatures")
    _add_common(p, cost=True, sampled=True)
    p.set_defaults(handler=_cmd_signature)

    p = sub.add_parser("criterion3", help="three-marginal product test")
    _add_common(p, cost=True, sampled=True)
    p.set_defaults(handler=_cmd_criterion3)

    p = sub.add_parser("extremal", help="vertex test for a coupling")
    _add_common(p, marginals=True, coupling=True)
    p.set_defaults(handler=_cmd_extremal)

    p = sub.add_parser("thm41", help="map hypotheses for extremality")
    _add_common(p, marginals=True)
    p.add_argument("--maps", required=True, metavar="FILE",
                   help='JSON {"maps": [{"H": {...}, "K": {...}}], "theta": {...}?}')
    p.set_defaults(handler=_cmd_thm41)

    p = sub.add_parser("witness", help="symmetric non-uniqueness witness")
    _add_common(p, marginals=True, coupling=True)
    p.add_argument("--cost", choices=("coulomb1d", "expcos", "xyz", "twowell"))
    p.add_argument("--s1", required=True, help="comma-separated axis-point indices")
    p.add_argument("--s2", required=True)
    p.add_argument("--s3", required=True)
    p.set_defaults(handler=_cmd_witness)

    p = sub.add_parser("repro", help="run a registered experiment")
    p.add_argument("name")
    p.add_argument("--grid-size", type=int, dest="grid_size")
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(handler=_cmd_repro)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.monotonic()
    try:
        return args.handler(args, started)
    except (TransportError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"mmotlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
