"""Command-line interface: ``mfpkit <command> ...``.

Every command writes its tables as delimited text (a file, or standard
output) and a JSON manifest recording the command, its flags, the digests
of its inputs, the seed and the tool version. Exit status is 0 on success,
1 for user errors (bad flags, bad data) and 2 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from . import __version__
from .data import (
    Dataset,
    VariableMeta,
    load_dataset,
    load_schema,
    prepare,
    read_table,
    write_dataset,
    write_table,
)
from .errors import MFPError
from .fp import FPSpec
from .fsp import run_fsp
from .influence import (
    group_pairs,
    ipx_multivariable,
    ipx_univariable,
    records_table,
    scan_variable,
)
from .mfp import MFPModel, compare_models, design_matrix, fit_mfp, load_model, save_model
from .plasmode import ART_SCHEMA, TRUE_MODEL, generate_art, load_profile, slice_rows
from .report import build_manifest, function_curve, smooth_residuals, write_manifest

logger = logging.getLogger("mfpkit")


class UserError(Exception):
    """Bad invocation: reported on standard error with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str | None) -> list[str]:
    return [t.strip() for t in (text or "").split(",") if t.strip()]


def infer_schema(path, outcome: str) -> list[VariableMeta]:
    """Outcome by name; two-valued columns binary, everything else continuous."""
    header, rows, _ = read_table(path)
    if outcome not in header:
        raise UserError(f"outcome column {outcome!r} not found in {path}")
    schema = []
    for j, name in enumerate(header):
        if name == outcome:
            schema.append(VariableMeta(name, "continuous", "outcome"))
            continue
        values = {r[j].strip() for r in rows if j < len(r)}
        schema.append(VariableMeta(name, "binary" if len(values) == 2 else "continuous"))
    return schema


def load_data(args) -> Dataset:
    if args.schema == "art":
        schema = list(ART_SCHEMA)
    elif args.schema:
        schema = load_schema(args.schema)
    else:
        schema = infer_schema(args.data, args.outcome)
    return load_dataset(args.data, schema)


def _inputs(args) -> list[str]:
    paths = []
    for key in ("data", "model", "model_a", "model_b", "profile"):
        p = getattr(args, key, None)
        if p:
            paths.append(p)
    if getattr(args, "schema", None) not in (None, "art"):
        paths.append(args.schema)
    return paths


_OUTPUT_FLAGS = {"output", "table", "manifest", "outdir", "plot", "ips_output", "reduced_output", "func", "verbose"}


def _flags(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _OUTPUT_FLAGS and k not in ("data", "model", "model_a", "model_b")}


def _emit(path, header, rows, comments=()) -> None:
    text = write_table(path, header, rows, comments)
    if path is None:
        sys.stdout.write(text)


def _manifest_path(args, command: str) -> str:
    if getattr(args, "manifest", None):
        return args.manifest
    if getattr(args, "outdir", None):
        return os.path.join(args.outdir, "manifest.json")
    for key in ("output", "table"):
        out = getattr(args, key, None)
        if out:
            return f"{out}.manifest.json"
    return f"mfpkit-{command}.manifest.json"


def _finish(args, command: str, provenance: str = "", seed=None, outputs=()) -> None:
    manifest = build_manifest(command, _flags(args), _inputs(args), seed, provenance,
                              [o for o in outputs if o])
    write_manifest(_manifest_path(args, command), manifest)


def _continuous(ds: Dataset) -> list[str]:
    return [m.name for m in prepare(ds).predictors if m.is_continuous]


def model_table(model: MFPModel) -> tuple[list[str], list[list]]:
    header = ["variable", "kind", "label", "status", "coefficients", "shift", "scale"]
    rows = []
    for name, spec in model.specs.items():
        rows.append([name, model.kinds.get(name, "continuous"), model.label(name), spec.status,
                     ";".join(f"{c:.9g}" for c in spec.coefficients), spec.shift, spec.scale])
    return header, rows


def fsp_rows(ds: Dataset, names, adjust_names, alpha, alpha_select, max_degree, forced_in):
    prep = prepare(ds)
    adjust = design_matrix(prep, {a: _linear(prep, a) for a in adjust_names}) if adjust_names else None
    header = ["variable", "selection", "best_fp1", "best_fp2", "dd_fp2_null", "p_fp2_null",
              "dd_fp2_linear", "p_fp2_linear", "dd_fp2_fp1", "p_fp2_fp1", "steps_run"]
    rows, results = [], {}
    for name in names:
        m = prep.get_meta(name)
        if not m.is_continuous:
            raise UserError(f"{name} is not a continuous predictor")
        res = run_fsp(prep[name], prep.y, adjust, alpha=alpha, forced_in=forced_in or m.forced_in,
                      max_degree=min(max_degree, m.max_degree), alpha_select=alpha_select,
                      shift=m.shift or 0.0)
        results[name] = res
        rows.append([name, res.selection.label(), res.best_fp1.label(),
                     res.best_fp2.label() if res.best_fp2 else None,
                     res.dd_fp2_null, res.p_fp2_null, res.dd_fp2_linear, res.p_fp2_linear,
                     res.dd_fp2_fp1, res.p_fp2_fp1, res.steps_run])
    return header, rows, results


def _linear(prep: Dataset, name: str) -> FPSpec:
    prep.get_meta(name)  # raises MissingColumn for unknown names
    return FPSpec("linear")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> None:
    profile = load_profile(args.profile) if args.profile else None
    ds = generate_art(args.n, args.seed, profile)
    if args.preset:
        ds = slice_rows(ds, args.preset)
    comments = [f"provenance: {ds.provenance}"]
    text = write_dataset(args.output, ds, comments)
    if args.output is None:
        sys.stdout.write(text)
    _finish(args, "simulate", ds.provenance, args.seed, [args.output])


def cmd_slice(args) -> None:
    ds = load_data(args)
    part = slice_rows(ds, args.rows)
    text = write_dataset(args.output, part, [f"provenance: {part.provenance}"])
    if args.output is None:
        sys.stdout.write(text)
    _finish(args, "slice", part.provenance, outputs=[args.output])


def cmd_fsp(args) -> None:
    ds = load_data(args)
    names = _name_list(args.variable) or _continuous(ds)
    header, rows, _ = fsp_rows(ds, names, _name_list(args.adjust), args.alpha,
                               args.alpha if args.alpha_select is None else args.alpha_select,
                               args.max_degree, args.forced_in)
    _emit(args.output, header, rows, [f"FSP alpha={args.alpha:g}; chi-square deviance tests"])
    _finish(args, "fsp", ds.provenance, outputs=[args.output])


def cmd_mfp(args) -> None:
    ds = load_data(args)
    model = fit_mfp(ds, args.alpha_select, args.alpha_fp, max_cycles=args.max_cycles)
    if args.output:
        save_model(model, args.output)
    header, rows = model_table(model)
    comments = [f"MFP({model.alpha_select:g}, {model.alpha_fp:g}); cycles={model.cycles_used}; "
                f"converged={model.converged}; n={ds.n}"]
    _emit(args.table, header, rows, comments)
    _finish(args, "mfp", ds.provenance, outputs=[args.output, args.table])


def _influence(args, ds: Dataset):
    """Run the scans; returns (reports, ip_set, model_or_None)."""
    alphas = sorted(set(args.alphas), reverse=True)
    alpha = args.alpha if args.alpha is not None else alphas[0]
    if alpha not in alphas:
        alphas = sorted(set(alphas) | {alpha}, reverse=True)
    names = _name_list(args.variable)
    prep = prepare(ds)
    if args.workflow == "u":
        if names:
            reports = {}
            for name in names:
                m = prep.get_meta(name)
                if not m.is_continuous:
                    raise UserError(f"{name} is not a continuous predictor")
                reports[name] = scan_variable(prep[name], prep.y, None, alpha, args.mode, m.max_degree,
                                              prep.row_ids, name, alphas=alphas)
            ips = sorted(set().union(*(r.flagged_ids() for r in reports.values())))
            return reports, ips, None, alphas
        res = ipx_univariable(ds, args.alpha_select, alpha, args.mode, alphas)
        return res.reports, res.ip_set, res.model, alphas
    model = load_model(args.model) if args.model else fit_mfp(ds, args.alpha_select, alpha)
    res = ipx_multivariable(ds, model, alpha, args.mode, args.adjustment, alphas)
    reports = res.reports
    if names:
        missing = [n for n in names if n not in reports]
        if missing:
            raise UserError(f"not selected continuous predictors of the model: {missing}")
        reports = {n: reports[n] for n in names}
        ips = sorted(set().union(*(r.flagged_ids() for r in reports.values())))
    else:
        ips = res.ip_set
    return reports, ips, res.model, alphas


def influence_tables(reports, alphas):
    rows, header = [], None
    for name, rep in reports.items():
        h, rs = records_table(rep.records, alphas)
        header = ["variable"] + h
        rows += [[name] + r for r in rs]
    if header is None:
        header = ["variable"] + records_table([], alphas)[0]
    ip_rows = []
    for name, rep in reports.items():
        for i in sorted(rep.flagged_ids()):
            ip_rows.append([name, i, rep.scan, rep.mode])
    return header, rows, ["variable", "observation", "scan", "analysis"], ip_rows


def cmd_influence(args) -> None:
    ds = load_data(args)
    reports, ips, model, alphas = _influence(args, ds)
    header, rows, ip_header, ip_rows = influence_tables(reports, alphas)
    flag_alpha = next(iter(reports.values())).alpha if reports else args.alpha
    comments = [f"workflow={args.workflow}; mode={args.mode}; flags judged at alpha={flag_alpha}"]
    _emit(args.output, header, rows, comments)
    if args.ips_output:
        write_table(args.ips_output, ip_header, ip_rows, [f"union of removed observations: {ips}"])
    if args.reduced_output:
        reduced = ds.drop_ids(ips)
        write_dataset(args.reduced_output, reduced, [f"provenance: {reduced.provenance}"])
    _finish(args, "influence", ds.provenance, outputs=[args.output, args.ips_output, args.reduced_output])


def cmd_curve(args) -> None:
    ds = load_data(args)
    prep = prepare(ds)
    if args.model:
        source = load_model(args.model)
    else:
        m = prep.get_meta(args.variable)
        source = run_fsp(prep[args.variable], prep.y, alpha=args.alpha, max_degree=m.max_degree,
                         shift=m.shift or 0.0)
    raw = ds[args.variable]
    curve = function_curve(source, args.variable, data=raw, points=args.points)
    header, rows = curve.table()
    comments = [f"{args.variable}: {curve.label}; 95% pointwise bounds conditional on the selected powers"]
    _emit(args.output, header, rows, comments)
    if args.plot:
        from .plotting import plot_curves

        plot_curves([curve], args.plot, data_x=raw)
    _finish(args, "curve", ds.provenance, outputs=[args.output, args.plot])


def cmd_compare(args) -> None:
    a, b = load_model(args.model_a), load_model(args.model_b)
    truth = TRUE_MODEL.specs(predictors=list(a.specs)) if args.truth == "art" else None
    report = compare_models(a, b, truth)
    header, rows = report.table()
    comments = [f"inclusion agreements={report.inclusion_agreements}; power agreements={report.power_agreements}"]
    _emit(args.output, header, rows, comments)
    _finish(args, "compare", outputs=[args.output])


def cmd_report(args) -> None:
    from .plotting import plot_curves, plot_pair_groups, plot_scan, plot_smoothed

    ds = load_data(args)
    prep = prepare(ds)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def path(name):
        p = str(out / name)
        written.append(p)
        return p

    names = _name_list(args.variable) or _continuous(ds)
    header, rows, fsp_results = fsp_rows(ds, names, [], args.alpha_fp, args.alpha_select, 2, False)
    write_table(path("fsp.csv"), header, rows)

    model = fit_mfp(ds, args.alpha_select, args.alpha_fp)
    save_model(model, path("mfp_model.json"))
    write_table(path("mfp_model.csv"), *model_table(model))

    x_raw = {n: ds[n] for n in names}
    for name in names:
        res = fsp_results[name]
        if res.selection.selected:
            c = function_curve(res, name, data=x_raw[name])
            write_table(path(f"curve_fsp_{name}.csv"), *c.table())
            plot_curves([c], path(f"curve_fsp_{name}.png"), data_x=x_raw[name])
        if name in model.selected:
            c = function_curve(model, name, data=x_raw[name])
            write_table(path(f"curve_mfp_{name}.csv"), *c.table())
            plot_curves([c], path(f"curve_mfp_{name}.png"), data_x=x_raw[name])
        sm = smooth_residuals(model.final_fit, prep[name] - (prep.get_meta(name).shift or 0.0), args.window)
        h, r, cm = sm.table()
        write_table(path(f"residuals_{name}.csv"), h, r, cm)
        plot_smoothed(sm, path(f"residuals_{name}.png"), model.final_fit.residuals, x_raw[name], name)

    all_ips = {}
    for workflow in ("u", "m") if args.workflow == "both" else (args.workflow,):
        inner = argparse.Namespace(**vars(args))
        inner.workflow, inner.model, inner.alpha = workflow, None, args.alpha_fp
        if workflow == "m":
            # scan the selected continuous predictors of the model fitted above
            inner.model = str(out / "mfp_model.json")
            inner.variable = ",".join(n for n in names if n in model.selected)
        reports, ips, _, used = _influence(inner, ds)
        all_ips[workflow] = ips
        h, r, ih, ir = influence_tables(reports, used)
        write_table(path(f"influence_{workflow}_{args.mode}.csv"), h, r)
        write_table(path(f"ips_{workflow}_{args.mode}.csv"), ih, ir)
        for name, rep in reports.items():
            xid = {int(i): float(v) for i, v in zip(prep.row_ids, ds[name])}
            if rep.scan == "loo":
                plot_scan(rep.records, xid, path(f"scan_{workflow}_{name}.png"), used, name,
                          sorted(rep.flagged_ids()))
            else:
                plot_pair_groups(rep.records, rep.flagged_ids(), path(f"pairs_{workflow}_{name}.png"), used, name)
                groups = group_pairs(rep.records, rep.flagged_ids())
                g_rows = [[g, c, s.count, s.minimum, s.q1, s.median, s.q3, s.maximum]
                          for g, by in groups.items() for c, s in by.items()]
                write_table(path(f"pairs_{workflow}_{name}.csv"),
                            ["group", "comparison", "count", "min", "q1", "median", "q3", "max"], g_rows)
    write_table(path("ips.csv"), ["workflow", "observations"],
                [[w, " ".join(map(str, v))] for w, v in all_ips.items()])
    _finish(args, "report", ds.provenance, outputs=written)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _data_args(p) -> None:
    p.add_argument("data", help="delimited data file (comma or tab)")
    p.add_argument("--schema", help="schema JSON file, or 'art' for the built-in ART layout")
    p.add_argument("--outcome", default="y", help="outcome column when no schema is given (default y)")


def _out_args(p, output_help="output table (default: standard output)") -> None:
    p.add_argument("-o", "--output", help=output_help)
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfpkit", description="Fractional polynomial model building and influential point diagnostics.")
    parser.add_argument("--version", action="version", version=f"mfpkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate an ART-style dataset")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", help="keep only a named slice (A125, A250, ..., C500) or a range 'start-end'")
    p.add_argument("--profile", help="predictor profile JSON (default: bundled ART profile)")
    _out_args(p, "output data file (default: standard output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("slice", help="extract a 1-based inclusive row range or named preset")
    _data_args(p)
    p.add_argument("--rows", required=True, help="preset name or 'start-end'")
    _out_args(p, "output data file (default: standard output)")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("fsp", help="function selection for one or more continuous predictors")
    _data_args(p)
    p.add_argument("--variable", help="comma-separated predictors (default: all continuous)")
    p.add_argument("--adjust", help="comma-separated predictors entered linearly in every model")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--alpha-select", type=float, help="level for the inclusion test (default: --alpha)")
    p.add_argument("--max-degree", type=int, choices=(1, 2), default=2)
    p.add_argument("--forced-in", action="store_true", help="skip the inclusion test")
    _out_args(p)
    p.set_defaults(func=cmd_fsp)

    p = sub.add_parser("mfp", help="multivariable fractional polynomial model")
    _data_args(p)
    p.add_argument("--alpha-select", type=float, default=0.05)
    p.add_argument("--alpha-fp", type=float, help="level for function selection (default: --alpha-select)")
    p.add_argument("--max-cycles", type=int, default=10)
    p.add_argument("-o", "--output", help="model JSON file")
    p.add_argument("--table", help="model table (default: standard output)")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_mfp)

    p = sub.add_parser("influence", help="leave-one-out / leave-two-out influential point scans")
    _data_args(p)
    p.add_argument("--variable", help="comma-separated predictors (default: all eligible)")
    p.add_argument("--mode", choices=("loo", "pairs"), default="loo",
                   help="delete single observations or pairs (leave-three-out scans are not implemented)")
    p.add_argument("--workflow", choices=("u", "m"), default="u",
                   help="u: univariable scans; m: scans adjusted for an MFP model")
    p.add_argument("--alphas", type=_float_list, default=[0.05, 0.01], help="levels recorded in the table")
    p.add_argument("--alpha", type=float, help="level at which points are flagged (default: first of --alphas)")
    p.add_argument("--alpha-select", type=float, default=0.05, help="MFP inclusion level when a model is fitted")
    p.add_argument("--model", help="MFP model JSON for --workflow m (fitted when omitted)")
    p.add_argument("--adjustment", choices=("frozen", "refit"), default="frozen")
    p.add_argument("--ips-output", help="table of flagged observations")
    p.add_argument("--reduced-output", help="data file with the flagged observations removed")
    _out_args(p)
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("curve", help="fitted function of one predictor with 95%% pointwise bounds")
    _data_args(p)
    p.add_argument("--variable", required=True)
    p.add_argument("--model", help="MFP model JSON (default: univariable FSP fit)")
    p.add_argument("--alpha", type=float, default=0.05, help="FSP level when no model is given")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--plot", help="also render the curve to this PNG file")
    _out_args(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("compare", help="side-by-side comparison of two MFP models")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--truth", choices=("art",), help="add the true ART forms as a reference column")
    _out_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="tables and figures for a full analysis bundle")
    _data_args(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--variable", help="comma-separated continuous predictors (default: all)")
    p.add_argument("--alpha-select", type=float, default=0.05)
    p.add_argument("--alpha-fp", type=float, default=0.05)
    p.add_argument("--mode", choices=("loo", "pairs"), default="loo")
    p.add_argument("--workflow", choices=("u", "m", "both"), default="both")
    p.add_argument("--alphas", type=_float_list, default=[0.05, 0.01])
    p.add_argument("--adjustment", choices=("frozen", "refit"), default="frozen")
    p.add_argument("--window", type=float, default=0.2, help="smoother window as a fraction of n")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UserError, MFPError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"mfpkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - last-resort reporting for the exit status contract
        traceback.print_exc()
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
