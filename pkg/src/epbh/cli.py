"""Command-line interface.

Subcommands: reject (run a procedure on a p-value file), ttest (run the
replicate pipeline on a K x n matrix), simulate (run a study grid), region
(emit a two-hypothesis rejection-region grid), audit (empirically check the
compound e-value property).  Outputs are CSV; region and simulate can also
render a figure next to the delimited output.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
Randomness is controlled exclusively by --seed (default 0, never the
clock).
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import __version__
from .core import ep_bh, q_transform
from .errors import QuadratureError, ValidationError
from .registry import ProcedureContext, ProcedureSpec, build_evalues, registered_ids, resolve
from .shapes import nonneg_shape_from_id
from .sim import (
    RESULT_COLUMNS,
    ScenarioConfig,
    audit_compound,
    default_study,
    parse_study_config,
    region_grid,
    run_grid,
)
from .ttest import beta_scaled_sample, normalized_weights, summarize
from .weighted import load_weights_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _parse_params(pairs) -> dict:
    params = {}
    for raw in pairs or []:
        if "=" not in raw:
            raise UsageError(f"--param expects key=value, got {raw!r}")
        key, value = raw.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _read_pvalue_csv(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise UsageError(f"{path}: empty input file")
        if "pvalue" not in reader.fieldnames:
            raise UsageError(f"{path}: expected a 'pvalue' column")
        has_weight = "weight" in reader.fieldnames
        pvals, weights = [], []
        for lineno, row in enumerate(reader, start=2):
            raw = (row.get("pvalue") or "").strip()
            try:
                value = float(raw)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: invalid p-value {raw!r}") from None
            if not (0.0 <= value <= 1.0):
                raise ValidationError(
                    f"{path}:{lineno}: p-value {value!r} outside [0, 1]"
                )
            pvals.append(value)
            if has_weight:
                try:
                    weights.append(float((row.get("weight") or "").strip()))
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: invalid weight {row.get('weight')!r}"
                    ) from None
    if not pvals:
        raise UsageError(f"{path}: no data rows")
    return np.array(pvals), (np.array(weights) if has_weight else None)


def _read_matrix_csv(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        rows = []
        width = None
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: non-numeric entry in {row!r}"
                ) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValidationError(
                    f"{path}:{lineno}: ragged row ({len(values)} columns, "
                    f"expected {width})"
                )
            rows.append(values)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows)


def _write_csv(path, header, rows):
    def dump(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    if path is None or path == "-":
        dump(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            dump(fh)


def _summary_stream(output):
    return sys.stderr if output in (None, "-") else sys.stdout


def _resolve_weights(params, pvals, column_weights, renormalize):
    from .core import validate_weights

    if "weights_path" in params:
        path = str(params.pop("weights_path"))
        return load_weights_csv(path, len(pvals), renormalize=renormalize)
    if column_weights is not None:
        return validate_weights(column_weights, len(pvals), renormalize=renormalize)
    return None


# ---------------------------------------------------------------------------
# subcommands


def cmd_reject(args) -> int:
    pvals, column_weights = _read_pvalue_csv(args.input)
    params = _parse_params(args.param)
    weights = _resolve_weights(params, pvals, column_weights, args.renormalize_weights)
    spec = ProcedureSpec(args.procedure, params)
    if resolve(spec.id).needs_summary:
        raise ValidationError(
            f"{spec.id} requires replicate data; use the ttest subcommand"
        )
    ctx = ProcedureContext(pvalues=pvals[None, :], alpha=args.alpha, weights=weights)
    evals = build_evalues(spec, ctx)[0]
    qvals = q_transform(pvals, evals)
    result = ep_bh(pvals, evals, args.alpha)
    mask = result.mask(len(pvals))
    _write_csv(
        args.output,
        ["index", "pvalue", "e_value", "q_value", "rejected"],
        (
            (i, pvals[i], evals[i], qvals[i], int(mask[i]))
            for i in range(len(pvals))
        ),
    )
    print(
        f"k_star={result.k_star} rejected={len(result.rejected)}",
        file=_summary_stream(args.output),
    )
    return EXIT_OK


def cmd_ttest(args) -> int:
    matrix = _read_matrix_csv(args.input)
    if matrix.shape[1] < 2:
        raise ValidationError(
            f"{args.input}: need at least 2 replicate columns, got {matrix.shape[1]}"
        )
    summ = summarize(matrix[None, ...])
    params = _parse_params(args.param)
    psi_id = str(params.get("psi", "u4"))
    weights = normalized_weights(summ.s2, nonneg_shape_from_id(psi_id))
    beta = None
    if str(params.get("mode", "")).lower() == "randomized":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
        beta = beta_scaled_sample(summ.n, rng, size=summ.s2.shape)
    ctx = ProcedureContext(
        pvalues=summ.pvalues,
        alpha=args.alpha,
        weights=weights,
        summary=summ,
        beta_draws=beta,
    )
    evals = build_evalues(ProcedureSpec(args.procedure, params), ctx)[0]
    result = ep_bh(summ.pvalues[0], evals, args.alpha)
    mask = result.mask(len(evals))
    _write_csv(
        args.output,
        ["index", "mu_hat", "sigma2_hat", "t", "pvalue", "s2", "e_value", "rejected"],
        (
            (
                i,
                summ.mu_hat[0, i],
                summ.sigma2_hat[0, i],
                summ.t_stat[0, i],
                summ.pvalues[0, i],
                summ.s2[0, i],
                evals[i],
                int(mask[i]),
            )
            for i in range(len(evals))
        ),
    )
    print(
        f"k_star={result.k_star} rejected={len(result.rejected)}",
        file=_summary_stream(args.output),
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        try:
            with open(args.config) as fh:
                study = parse_study_config(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot open {args.config}: {exc.strerror}") from None
    else:
        study = default_study()
    overrides = {}
    if args.full_scale:
        full = default_study(full_scale=True)
        overrides.update(K=full.K, K1_values=full.K1_values, reps=full.reps)
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mu_mapping is not None:
        overrides["mu_mapping"] = args.mu_mapping
    if overrides:
        from dataclasses import replace

        study = replace(study, **overrides)
    rows = run_grid(study, workers=args.workers)
    _write_csv(
        args.output,
        list(RESULT_COLUMNS),
        ([row[col] for col in RESULT_COLUMNS] for row in rows),
    )
    if args.figure:
        from .figures import render_study_figure

        render_study_figure(rows, args.figure, alpha=study.alpha)
    return EXIT_OK


def cmd_region(args) -> int:
    params = _parse_params(args.param)
    grid = region_grid(
        ProcedureSpec(args.procedure, params), args.alpha, args.resolution
    )
    _write_csv(args.output, ["p1", "p2", "count"], grid.rows())
    if args.figure:
        from .figures import render_region_figure

        render_region_figure(grid, args.figure)
    return EXIT_OK


def cmd_audit(args) -> int:
    params = _parse_params(args.param)
    config = ScenarioConfig(
        K=args.K,
        n=args.n,
        K1=args.K1,
        xi=args.xi,
        alpha=args.alpha,
        tau=args.tau,
        psi_id=args.psi,
        reps=args.reps,
        seed=args.seed or 0,
    )
    report = audit_compound(ProcedureSpec(args.procedure, params), config)
    print(report.summary())
    if args.output:
        _write_csv(
            args.output,
            ["constructor", "K", "n_nulls", "reps", "mean_null_sum", "se", "bound", "passed"],
            [
                (
                    report.constructor,
                    report.K,
                    report.n_nulls,
                    report.reps,
                    report.mean_null_sum,
                    report.se,
                    report.bound,
                    int(report.passed),
                )
            ],
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epbh",
        description="FDR control with compound e-values: procedures, "
        "simulations, audits.",
    )
    parser.add_argument("--version", action="version", version=f"epbh {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_procedure=True):
        if with_procedure:
            p.add_argument(
                "--procedure",
                required=True,
                help=f"procedure id; one of: {', '.join(registered_ids())}",
            )
            p.add_argument(
                "--param",
                action="append",
                metavar="KEY=VALUE",
                help="procedure parameter; repeatable",
            )
        p.add_argument("--alpha", type=float, default=0.1, help="target FDR level")
        p.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
        p.add_argument("--output", help="output CSV path (default: stdout)")

    p_reject = sub.add_parser("reject", help="run a procedure on a p-value CSV")
    p_reject.add_argument("input", help="CSV with a 'pvalue' column (optional 'weight')")
    add_common(p_reject)
    p_reject.add_argument(
        "--renormalize-weights",
        action="store_true",
        help="rescale input weights to sum to K",
    )
    p_reject.set_defaults(func=cmd_reject)

    p_ttest = sub.add_parser("ttest", help="replicate pipeline on a K x n CSV")
    p_ttest.add_argument("input", help="numeric CSV, K rows of n replicates, no header")
    add_common(p_ttest)
    p_ttest.set_defaults(func=cmd_ttest)

    p_sim = sub.add_parser("simulate", help="run a simulation study grid")
    p_sim.add_argument("--config", help="flat key = value study config file")
    p_sim.add_argument("--output", help="results CSV path (default: stdout)")
    p_sim.add_argument("--seed", type=int, default=None, help="override study seed")
    p_sim.add_argument("--reps", type=int, default=None, help="override replication count")
    p_sim.add_argument(
        "--full-scale",
        action="store_true",
        help="original design scale: K=200, K1 in {2,5,100}, 10000 replications",
    )
    p_sim.add_argument(
        "--mu-mapping",
        choices=("paper", "tstat"),
        default=None,
        help="alternative-mean mapping: xi*sqrt(n) (paper) or xi/sqrt(n) (tstat)",
    )
    p_sim.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_sim.add_argument("--figure", help="also render power/FDR curves to this file")
    p_sim.set_defaults(func=cmd_simulate)

    p_region = sub.add_parser("region", help="two-hypothesis rejection-region grid")
    add_common(p_region)
    p_region.add_argument(
        "--resolution", type=float, default=0.005, help="grid step (must divide 1)"
    )
    p_region.add_argument("--figure", help="also render the grid to this file")
    p_region.set_defaults(func=cmd_region)

    p_audit = sub.add_parser("audit", help="empirical compound e-value audit")
    add_common(p_audit)
    p_audit.add_argument("--K", type=int, default=20, help="number of hypotheses")
    p_audit.add_argument("--n", type=int, default=5, help="replicates per hypothesis")
    p_audit.add_argument("--K1", type=int, default=0, help="number of alternatives")
    p_audit.add_argument("--xi", type=float, default=0.0, help="effect size")
    p_audit.add_argument("--tau", type=float, default=0.5)
    p_audit.add_argument("--psi", default="u4", help="weighting shape identifier")
    p_audit.add_argument("--reps", type=int, default=100_000)
    p_audit.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QuadratureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
