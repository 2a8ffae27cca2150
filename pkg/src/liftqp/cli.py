"""Command-line frontend: liftqp <subcommand>.

Exit codes: 0 success, 1 usage or input error, 2 verification failure
(rejected certification, failed kernel transfer).  `--json` prints
machine-readable reports; those are byte-identical across runs for the
same inputs and seed (wall-clock timings only appear with --timings).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import approxep, geometry, kernels, svm
from .lift import build_quotient, certify, unlift
from .qpcore import Partition, QpFormatError, load_qp, save_qp
from .refine import refine_qp
from .solver import SolverConfig, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


class CliError(Exception):
    pass


class VerificationFailure(Exception):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


def _dump(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_points_csv(path):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as exc:
        raise CliError(f"{path}: cannot read file: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"{path}: malformed CSV: {exc}") from exc
    return data


def _load_labels_csv(path, positive):
    labels = []
    try:
        with open(path) as fh:
            for line in fh:
                token = line.strip()
                if token in ("", "?"):
                    labels.append(0)
                elif token == positive:
                    labels.append(1)
                else:
                    labels.append(-1)
    except OSError as exc:
        raise CliError(f"{path}: cannot read file: {exc}") from exc
    return np.asarray(labels, dtype=np.int64)


def _load_links_csv(path):
    links = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                token = line.strip()
                if not token:
                    continue
                parts = token.split(",")
                if len(parts) != 2:
                    raise CliError(f"{path}: line {lineno}: expected 'i,j'")
                try:
                    links.append((int(parts[0]), int(parts[1])))
                except ValueError as exc:
                    raise CliError(
                        f"{path}: line {lineno}: non-integer index"
                    ) from exc
    except OSError as exc:
        raise CliError(f"{path}: cannot read file: {exc}") from exc
    return links


def _load_partition_file(path, n_vars, n_cons):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(f"{path}: cannot read file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}"
        ) from exc
    if "vars" not in data:
        raise CliError(f"{path}: field 'vars': missing class lists")
    try:
        var_p = Partition.from_classes(n_vars, data["vars"])
        if "cons" in data:
            con_p = Partition.from_classes(n_cons, data["cons"])
        else:
            con_p = Partition.discrete(n_cons)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return var_p, con_p


def _partition_payload(result):
    return {
        "vars": result.var_partition.to_lists(),
        "cons": result.con_partition.to_lists(),
    }


def _solver_config(args):
    kwargs = {}
    if getattr(args, "max_iters", None) is not None:
        kwargs["max_iters"] = args.max_iters
    if getattr(args, "eps", None) is not None:
        kwargs["eps_abs"] = args.eps
        kwargs["eps_rel"] = args.eps
    return SolverConfig(**kwargs)


def _report_entry(qp, report):
    return {
        "n": qp.n,
        "m": qp.m,
        "status": report.status,
        "objective": report.objective,
        "iters": report.iters,
        "primal_residual": report.primal_residual,
        "dual_residual": report.dual_residual,
    }


def _print_human_report(payload):
    ground = payload["ground"]
    print(f"ground: n={ground['n']} m={ground['m']} status={ground['status']} "
          f"objective={ground['objective']:.10g}")
    if "lifted" in payload:
        lifted = payload["lifted"]
        ratios = payload["ratios"]
        print(f"lifted: n={lifted['n']} m={lifted['m']} status={lifted['status']} "
              f"objective={lifted['objective']:.10g}")
        print(f"compression: vars {ratios['vars']:.4f}  cons {ratios['cons']:.4f}")
        residuals = payload["certification"]["residuals"]
        worst = max(residuals.values())
        print(f"certification: ok (max residual {worst:.2e})")
    if "predictions" in payload:
        pred = payload["predictions"]
        print(f"prediction agreement (ground vs lifted): {pred['agreement']:.4f}")
        if pred.get("accuracy_unlabeled") is not None:
            print(f"accuracy on unlabeled instances: {pred['accuracy_unlabeled']:.4f}")
    if "timings" in payload:
        for key, value in payload["timings"].items():
            print(f"time {key}: {value:.3f}s")


def _lift_pipeline(qp, mode, tol):
    result = refine_qp(qp, mode=mode)
    pair = certify(qp, result.var_partition, result.con_partition, tol=tol)
    if not pair.certified:
        raise VerificationFailure(
            "refinement partition failed certification",
            payload={"residuals": pair.residuals},
        )
    return pair, build_quotient(qp, pair)


# -- subcommands -------------------------------------------------------


def cmd_refine(args):
    qp = load_qp(args.qp)
    result = refine_qp(qp, mode=args.mode, color_tol=args.tol)
    _dump(_partition_payload(result))
    return EXIT_OK


def cmd_lift(args):
    qp = load_qp(args.qp)
    pair, quotient = _lift_pipeline(qp, args.mode, args.tol)
    if args.out:
        save_qp(quotient.qp, args.out)
    if args.map:
        with open(args.map, "w") as fh:
            json.dump(
                {
                    "class_of": quotient.class_of.tolist(),
                    "class_sizes": quotient.class_sizes.tolist(),
                    "con_classes": pair.con_partition.to_lists(),
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    payload = {
        "ground": {"n": qp.n, "m": qp.m},
        "lifted": {"n": quotient.qp.n, "m": quotient.qp.m},
        "ratios": {
            "vars": quotient.qp.n / qp.n if qp.n else 1.0,
            "cons": quotient.qp.m / qp.m if qp.m else 1.0,
        },
        "certification": {"certified": True, "residuals": pair.residuals},
    }
    if args.json:
        _dump(payload)
    else:
        print(f"ground: n={qp.n} m={qp.m}")
        print(f"lifted: n={quotient.qp.n} m={quotient.qp.m}")
        print(f"compression: vars {payload['ratios']['vars']:.4f}  "
              f"cons {payload['ratios']['cons']:.4f}")
        print(f"certification residuals: {pair.residuals}")
    return EXIT_OK


def cmd_solve(args):
    qp = load_qp(args.qp)
    cfg = _solver_config(args)
    timings = {}
    start = time.perf_counter()
    ground_report = solve(qp, cfg)
    timings["solve_ground"] = time.perf_counter() - start
    payload = {"ground": _report_entry(qp, ground_report)}
    if args.lift:
        start = time.perf_counter()
        pair, quotient = _lift_pipeline(qp, args.mode, args.tol)
        timings["lift"] = time.perf_counter() - start
        start = time.perf_counter()
        lifted_report = solve(quotient.qp, cfg)
        timings["solve_lifted"] = time.perf_counter() - start
        payload["lifted"] = _report_entry(quotient.qp, lifted_report)
        if lifted_report.optimal:
            expanded = unlift(lifted_report.x, quotient)
            payload["lifted"]["expanded_objective"] = qp.objective(expanded)
        payload["ratios"] = {
            "vars": quotient.qp.n / qp.n if qp.n else 1.0,
            "cons": quotient.qp.m / qp.m if qp.m else 1.0,
        }
        payload["certification"] = {"certified": True, "residuals": pair.residuals}
    if args.timings:
        payload["timings"] = timings
    if args.json:
        _dump(payload)
    else:
        if not args.timings:
            payload["timings"] = timings
        _print_human_report(payload)
    return EXIT_OK


def cmd_verify(args):
    qp = load_qp(args.qp)
    var_p, con_p = _load_partition_file(args.partition, qp.n, qp.m)
    pair = certify(qp, var_p, con_p, tol=args.tol)
    payload = {"certified": pair.certified, "residuals": pair.residuals}
    _dump(payload)
    return EXIT_OK if pair.certified else EXIT_VERIFICATION


def cmd_geometry(args):
    qp = load_qp(args.qp)
    var_p, _ = _load_partition_file(args.partition, qp.n, qp.m)
    factor = geometry.gram_factor(qp.q)
    report = geometry.verify_bchar(qp.q, factor, var_p, tol=args.tol)
    _dump(
        {
            "k": factor.k,
            "commutes": report.commutes,
            "r_symmetric": report.r_symmetric,
            "xb_equals_br": report.xb_equals_br,
            "consistent": report.consistent,
            "residuals": report.residuals,
        }
    )
    return EXIT_OK


def cmd_kernel(args):
    data = _load_points_csv(args.data)
    if args.kind == "poly":
        spec = kernels.KernelSpec("poly", degree=args.g)
    else:
        spec = kernels.KernelSpec("rbf", gamma=args.gamma)
    if args.check_partition:
        var_p, _ = _load_partition_file(args.check_partition, data.shape[0], 0)
        report = kernels.check_counting_transfer(data, spec, var_p, tol=args.tol)
        _dump({"q_counting": report.q_counting, "k_counting": report.k_counting})
        return EXIT_OK
    matrix = kernels.kernel_matrix(data, spec)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(
                {
                    "n": matrix.n_rows,
                    "triplets": [[int(i), int(j), float(v)] for i, j, v in matrix.triplets()],
                },
                fh,
            )
            fh.write("\n")
        print(f"wrote {matrix.n_rows}x{matrix.n_cols} kernel matrix to {args.out}")
    else:
        _dump({"n": matrix.n_rows, "kind": spec.kind, "nnz": matrix.nnz})
    return EXIT_OK


def cmd_approx_ep(args):
    points = _load_points_csv(args.points)
    cfg = approxep.ApproxConfig(
        n_orbits=args.orbits,
        n_anchors=args.anchors,
        whiten=args.whiten,
        seed=args.seed,
    )
    partition = approxep.approx_orbits(points, cfg)
    payload = {"vars": partition.to_lists()}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _dump(payload)
    return EXIT_OK


def _svm_dataset_from_args(args):
    if args.features and args.labels:
        features = _load_points_csv(args.features)
        labels = _load_labels_csv(args.labels, args.positive)
        if labels.size != features.shape[0]:
            raise CliError(
                f"{args.labels}: {labels.size} labels for {features.shape[0]} feature rows"
            )
        links = _load_links_csv(args.links) if args.links else []
        return svm.SvmDataset(features, labels, links), None
    if args.features or args.labels:
        raise CliError("provide both <features.csv> and <labels.csv>, or neither")
    full = svm.make_two_moons(args.moons, args.noise_dim, args.knn, args.seed)
    masked = svm.mask_labels(full, args.unlabeled_frac, args.seed + 1)
    return masked, full.labels


def cmd_svm_build(args):
    ds, _ = _svm_dataset_from_args(args)
    spec = svm.SvmBuildSpec(c1=args.c1, c2=args.c2, transductive=args.transductive)
    qp, legend = svm.build_svm_qp(ds, spec)
    save_qp(qp, args.out)
    if args.legend:
        with open(args.legend, "w") as fh:
            json.dump(
                {
                    "dim": legend.dim,
                    "bias_index": legend.bias_index,
                    "labeled_instances": list(legend.labeled_instances),
                    "label_slack_of": {str(k): v for k, v in legend.label_slack_of.items()},
                    "active_links": [list(l) for l in legend.active_links],
                    "link_slack_of": {f"{i},{j}": v for (i, j), v in legend.link_slack_of.items()},
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    print(f"wrote QP with n={qp.n}, m={qp.m} to {args.out}")
    return EXIT_OK


def cmd_svm_run(args):
    ds, true_labels = _svm_dataset_from_args(args)
    if args.eval_labels:
        true_labels = _load_labels_csv(args.eval_labels, args.positive)
        if true_labels.size != ds.n:
            raise CliError(
                f"{args.eval_labels}: {true_labels.size} labels for {ds.n} instances"
            )
    spec = svm.SvmBuildSpec(c1=args.c1, c2=args.c2, transductive=args.transductive)
    qp, legend = svm.build_svm_qp(ds, spec)
    cfg = _solver_config(args)
    timings = {}
    start = time.perf_counter()
    ground_report = solve(qp, cfg)
    timings["solve_ground"] = time.perf_counter() - start
    start = time.perf_counter()
    pair, quotient = _lift_pipeline(qp, args.mode, args.tol)
    timings["lift"] = time.perf_counter() - start
    start = time.perf_counter()
    lifted_report = solve(quotient.qp, cfg)
    timings["solve_lifted"] = time.perf_counter() - start

    w_ground, b_ground = legend.split(ground_report.x)
    w_lifted, b_lifted = legend.split(unlift(lifted_report.x, quotient))
    pred_ground = svm.predict(w_ground, b_ground, ds.features)
    pred_lifted = svm.predict(w_lifted, b_lifted, ds.features)
    agreement = float(np.mean(pred_ground == pred_lifted))

    accuracy = None
    if true_labels is not None and ds.unlabeled.size:
        mask = ds.unlabeled
        accuracy = float(np.mean(pred_lifted[mask] == true_labels[mask]))

    payload = {
        "seed": args.seed,
        "ground": _report_entry(qp, ground_report),
        "lifted": _report_entry(quotient.qp, lifted_report),
        "ratios": {
            "vars": quotient.qp.n / qp.n,
            "cons": quotient.qp.m / qp.m if qp.m else 1.0,
        },
        "certification": {"certified": True, "residuals": pair.residuals},
        "predictions": {"agreement": agreement, "accuracy_unlabeled": accuracy},
    }
    if args.timings:
        payload["timings"] = timings
    if args.json:
        _dump(payload)
    else:
        if not args.timings:
            payload["timings"] = timings
        _print_human_report(payload)
    return EXIT_OK


# -- parser ------------------------------------------------------------


def _add_solver_flags(sub):
    sub.add_argument("--max-iters", type=int, default=None, help="iteration cap")
    sub.add_argument("--eps", type=float, default=None,
                     help="absolute and relative solver tolerance")


def _add_lift_flags(sub):
    sub.add_argument("--mode", choices=("sum", "counting"), default="sum",
                     help="refinement signature mode")
    sub.add_argument("--tol", type=float, default=1e-8,
                     help="certification tolerance")


def build_parser():
    parser = _Parser(prog="liftqp",
                     description="Detect and exploit fractional symmetries of convex QPs.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("refine", help="print the coarsest stable partition pair")
    p.add_argument("qp", help="QP JSON file")
    p.add_argument("--mode", choices=("sum", "counting"), default="sum")
    p.add_argument("--tol", type=float, default=1e-9, help="color bucket tolerance")
    p.set_defaults(func=cmd_refine)

    p = subs.add_parser("lift", help="refine, certify, and build the quotient QP")
    p.add_argument("qp")
    _add_lift_flags(p)
    p.add_argument("--out", help="write the quotient QP JSON here")
    p.add_argument("--map", help="write the expansion map JSON here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_lift)

    p = subs.add_parser("solve", help="solve the QP, optionally through the quotient")
    p.add_argument("qp")
    p.add_argument("--lift", action="store_true", help="also solve the lifted problem")
    _add_lift_flags(p)
    _add_solver_flags(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--timings", action="store_true",
                   help="include wall times in JSON output")
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("verify", help="certify a partition pair from a file")
    p.add_argument("qp")
    p.add_argument("--partition", required=True, help="JSON with 'vars' (and 'cons') classes")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("geometry", help="Gram-factor symmetry report for a partition")
    p.add_argument("qp")
    p.add_argument("--partition", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_geometry)

    p = subs.add_parser("kernel", help="kernel matrices and counting transfer checks")
    p.add_argument("data", help="CSV of data rows")
    p.add_argument("--kind", choices=("poly", "rbf"), required=True)
    p.add_argument("--g", type=int, default=2, help="polynomial degree")
    p.add_argument("--gamma", type=float, default=1.0, help="RBF width parameter")
    p.add_argument("--check-partition", help="partition JSON to test for transfer")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", help="write the kernel matrix JSON here")
    p.set_defaults(func=cmd_kernel)

    p = subs.add_parser("approx-ep", help="approximate rotational orbits of a point set")
    p.add_argument("points", help="CSV of points, one per row")
    p.add_argument("--orbits", type=int, required=True, help="orbit budget")
    p.add_argument("--anchors", type=int, default=0, help="anchor count (0 = all)")
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the partition JSON here")
    p.set_defaults(func=cmd_approx_ep)

    for name, func in (("svm-build", cmd_svm_build), ("svm-run", cmd_svm_run)):
        p = subs.add_parser(
            name,
            help="build a (transductive) SVM QP"
            + ("" if name == "svm-build" else " and run the full pipeline"),
        )
        p.add_argument("features", nargs="?", help="CSV of feature rows")
        p.add_argument("labels", nargs="?", help="labels, one per line ('' or '?' = unlabeled)")
        p.add_argument("--links", help="CSV of 'i,j' link pairs (0-based)")
        p.add_argument("--positive", default="1",
                       help="label token mapped to +1 (default '1')")
        p.add_argument("--c1", type=float, default=1.0, help="label slack penalty")
        p.add_argument("--c2", type=float, default=1.0, help="link slack penalty")
        p.add_argument("--transductive", action="store_true")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--moons", type=int, default=80,
                       help="synthetic two-moons size when no files are given")
        p.add_argument("--noise-dim", type=int, default=10)
        p.add_argument("--knn", type=int, default=4)
        p.add_argument("--unlabeled-frac", type=float, default=0.5)
        if name == "svm-build":
            p.add_argument("--out", required=True, help="QP JSON output path")
            p.add_argument("--legend", help="variable legend JSON output path")
            p.set_defaults(func=func)
        else:
            _add_lift_flags(p)
            _add_solver_flags(p)
            p.add_argument("--eval-labels", help="full label file for scoring predictions")
            p.add_argument("--json", action="store_true")
            p.add_argument("--timings", action="store_true")
            p.set_defaults(func=func)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"liftqp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QpFormatError as exc:
        print(f"liftqp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationFailure as exc:
        print(f"liftqp: verification failed: {exc}", file=sys.stderr)
        if exc.payload:
            print(json.dumps(exc.payload, indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_VERIFICATION
    except kernels.CountingTransferError as exc:
        print(f"liftqp: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except ValueError as exc:
        print(f"liftqp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
