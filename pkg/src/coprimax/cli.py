"""Command-line front end: evaluate, select, plan-efp, simulate-lfc.

Input CSVs carry a header row; the ``label`` column holds 1 = diseased and
every other column holds one model's binary predictions. A flat key=value
config file can supply any option; explicit flags win over the file, the
file wins over defaults. Every report records the seed it was produced
with, and rerunning with that seed reproduces the outputs byte for byte.

Exit codes: 0 success, 2 statistically failed study (no rejection),
1 tool or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, mbeta, plots, selection, simulate
from .errors import CoprimaxError, ParseError
from .inference import final_model, max_t_test
from .types import StudyConfig, Threshold, build_similarity

_CONFIG_KEYS = {
    "alpha", "se0", "sp0", "delta0", "seed", "n_eval", "s_max", "max_iter",
    "num_tol", "workers", "rule", "k", "weight", "s", "epsilon", "prevalence",
    "n", "n_sim", "corr", "corr_structure", "acc_cap",
}


def parse_config_file(path: str) -> dict:
    """Flat key = value file; '#' starts a comment, commas make lists."""
    values: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ParseError(f"{path}:{lineno}: unknown option {key!r}")
        items = [v.strip() for v in val.split(",") if v.strip()]
        if not items:
            raise ParseError(f"{path}:{lineno}: empty value for {key!r}")
        values[key] = items if len(items) > 1 else items[0]
    return values


def _coerce(value, kind):
    if isinstance(value, list):
        return [_coerce(v, kind) for v in value]
    return kind(value)


def read_combined_csv(path: str):
    """Combined file: 'label' column plus one prediction column per model."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise ParseError(f"{path}: no 'label' column in header")
        label_idx = header.index("label")
        names = [h for i, h in enumerate(header) if i != label_idx]
        if not names:
            raise ParseError(f"{path}: no model prediction columns")
        preds, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                cells = [int(c) for c in row]
            except ValueError as ex:
                raise ParseError(f"{path}:{lineno}: {ex}") from None
            labels.append(cells[label_idx])
            preds.append([c for i, c in enumerate(cells) if i != label_idx])
    return np.array(preds, dtype=int).reshape(len(preds), len(names)), np.array(
        labels, dtype=int
    ), names


def read_split_csv(pred_path: str, label_path: str):
    """Separate predictions and labels files, both with headers."""
    with open(pred_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{pred_path}: empty file") from None
        preds = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"{pred_path}:{lineno}: expected {len(names)} fields"
                )
            try:
                preds.append([int(c) for c in row])
            except ValueError as ex:
                raise ParseError(f"{pred_path}:{lineno}: {ex}") from None
    with open(label_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                labels.append(int(row[0]))
            except ValueError as ex:
                raise ParseError(f"{label_path}:{lineno}: {ex}") from None
    return np.array(preds, dtype=int).reshape(len(preds), len(names)), np.array(
        labels, dtype=int
    ), names


def _threshold_from(args, filecfg) -> Threshold:
    def pick(flag, key, kind, default=None):
        if flag is not None:
            return flag
        if key in filecfg:
            return _coerce(filecfg[key], kind)
        return default

    se0 = pick(args.se0, "se0", float)
    sp0 = pick(args.sp0, "sp0", float)
    delta0 = pick(getattr(args, "delta0", None), "delta0", float)
    if se0 is None:
        raise ParseError("se0 is required (flag --se0 or config file)")
    if sp0 is None and delta0 is not None:
        sp0 = se0 - delta0
    if sp0 is None:
        raise ParseError("give --sp0 or --delta0 to fix the specificity threshold")
    if delta0 is not None and abs((se0 - sp0) - delta0) > 1e-12:
        raise ParseError("inconsistent se0/sp0/delta0")
    return Threshold(se0=se0, sp0=sp0)


def _study_config(args, filecfg, thr) -> StudyConfig:
    def pick(name, kind, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in filecfg:
            return _coerce(filecfg[name], kind)
        return default

    return StudyConfig(
        threshold=thr,
        alpha=pick("alpha", float, 0.025),
        n_eval=pick("n_eval", int, 0),
        seed=pick("seed", int, 0),
    )


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _write_csv_rows(rows: list[dict], path: Path) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    filecfg = parse_config_file(args.config) if args.config else {}
    if args.data:
        preds, labels, names = read_combined_csv(args.data)
    elif args.predictions and args.labels:
        preds, labels, names = read_split_csv(args.predictions, args.labels)
    else:
        raise ParseError("give --data or both --predictions and --labels")
    thr = _threshold_from(args, filecfg)
    cfg = _study_config(args, filecfg, thr)

    q_se, q_sp = build_similarity(preds, labels)
    est = mbeta.regularized_estimate(q_se, q_sp)
    outcome = max_t_test(est, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17]))
    star = final_model(outcome, est, rule="max_t", rng=rng)

    model_rows = []
    for i, name in enumerate(names):
        model_rows.append(
            {
                "name": name,
                "se_hat": float(est.se_mean[i]),
                "sp_hat": float(est.sp_mean[i]),
                "t_se": float(outcome.statistics.t_se[i]),
                "t_sp": float(outcome.statistics.t_sp[i]),
                "t_min": float(outcome.statistics.t_min[i]),
                "rejected": int(outcome.rejected[i]),
                "ci_lower_se": float(outcome.ci_lower_se[i]),
                "ci_lower_sp": float(outcome.ci_lower_sp[i]),
                "corrected_se": float(outcome.corrected_se[i]),
                "corrected_sp": float(outcome.corrected_sp[i]),
            }
        )
    report = {
        "tool": "coprimax",
        "version": __version__,
        "alpha": cfg.alpha,
        "se0": thr.se0,
        "sp0": thr.sp0,
        "delta0": thr.delta0,
        "n1": est.n1,
        "n0": est.n0,
        "c_alpha": outcome.critical_value,
        "final_model": names[star] if star is not None else None,
        "any_rejected": bool(outcome.any_rejected),
        "seed": cfg.seed,
        "models": model_rows,
    }

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(report, out / "evaluation.json")
    _write_csv_rows(model_rows, out / "evaluation.csv")
    plots.evaluation_figure(report, str(out / "evaluation.png"))
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(f"c_alpha = {outcome.critical_value:.4f}")
        for row in model_rows:
            flag = "REJECT" if row["rejected"] else "      "
            print(
                f"{flag}  {row['name']}: se={row['se_hat']:.4f} "
                f"sp={row['sp_hat']:.4f} t_min={row['t_min']:.3f}"
            )
        print(f"final model: {report['final_model'] or 'none'}")
    return 0 if outcome.any_rejected else 2


# ---------------------------------------------------------------------------
# select / plan-efp
# ---------------------------------------------------------------------------

def cmd_select(args) -> int:
    filecfg = parse_config_file(args.config) if args.config else {}
    preds, labels, names = read_combined_csv(args.data)
    thr = _threshold_from(args, filecfg)
    cfg = _study_config(args, filecfg, thr)
    rule = args.rule or filecfg.get("rule", "default")

    q_se, q_sp = build_similarity(preds, labels)
    val = selection.ValidationData(q_se=q_se, q_sp=q_sp)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "tool": "coprimax",
        "version": __version__,
        "rule": rule,
        "se0": thr.se0,
        "sp0": thr.sp0,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
    }
    if rule == "default":
        chosen = selection.select_default(val)
    elif rule == "within_k_se":
        k = args.k if args.k is not None else _coerce(filecfg.get("k", 1.0), float)
        chosen = selection.select_within_k_se(val, k)
        report["k"] = k
    elif rule == "optimal_efp":
        if cfg.n_eval < 2:
            raise ParseError("--n-eval is required for the optimal_efp rule")
        curve = selection.optimal_efp(
            val,
            cfg,
            s_max=args.s_max,
            max_iter=args.max_iter if args.max_iter is not None else 250,
            num_tol=args.num_tol if args.num_tol is not None else 0.001,
            rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 23])),
        )
        chosen = curve.selected()
        report["n_eval"] = cfg.n_eval
        report["s_star"] = curve.s_star
        report["iterations_used"] = curve.iterations_used
        curve_rows = [
            {
                "n_evaluated": i + 1,
                "efp": float(curve.efp[i]),
                "mc_se": float(curve.se[i]),
                "model": names[curve.order[i] - 1],
            }
            for i in range(curve.efp.shape[0])
        ]
        _write_csv_rows(curve_rows, out / "efp_curve.csv")
        plots.efp_curve_figure(curve, cfg.n_eval, str(out / "efp_curve.png"))
    else:
        raise ParseError(f"unknown selection rule {rule!r}")

    report["selected_indices"] = [int(i) for i in chosen]
    report["selected_models"] = [names[i - 1] for i in chosen]
    _write_json(report, out / "selection.json")
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(f"rule: {rule}")
        print("selected:", ", ".join(report["selected_models"]))
    return 0


# ---------------------------------------------------------------------------
# simulate-lfc
# ---------------------------------------------------------------------------

def _as_list(value):
    return value if isinstance(value, list) else [value]


def cmd_simulate_lfc(args) -> int:
    filecfg = parse_config_file(args.config) if args.config else {}
    if not filecfg and not args.config:
        raise ParseError("simulate-lfc needs a --config grid file")
    s_list = _coerce(_as_list(filecfg.get("s", "10")), int)
    se0_list = _coerce(_as_list(filecfg.get("se0", "0.8")), float)
    sp0_list = _coerce(_as_list(filecfg.get("sp0", "0.8")), float)
    eps_list = _coerce(_as_list(filecfg.get("epsilon", "0")), float)
    prev_list = _coerce(_as_list(filecfg.get("prevalence", "0.2")), float)
    n_list = _coerce(_as_list(filecfg.get("n", "200")), int)
    corr = _coerce(filecfg.get("corr", "0.5"), float)
    structure = filecfg.get("corr_structure", "equicorrelation")
    acc_cap = (
        _coerce(filecfg["acc_cap"], float) if "acc_cap" in filecfg else None
    )
    n_sim = args.n_sim if args.n_sim is not None else _coerce(
        filecfg.get("n_sim", "10000"), int
    )
    alpha = args.alpha if args.alpha is not None else _coerce(
        filecfg.get("alpha", "0.025"), float
    )
    seed = args.seed if args.seed is not None else _coerce(
        filecfg.get("seed", "0"), int
    )

    # build every scenario first so config errors surface before simulating
    grid = []
    for s in s_list:
        for se0 in se0_list:
            for sp0 in sp0_list:
                for eps in eps_list:
                    for prev in prev_list:
                        for n in n_list:
                            thr = Threshold(se0=se0, sp0=sp0)
                            grid.append(
                                (
                                    simulate.LfcScenario(
                                        n_models=s,
                                        theta0=thr,
                                        epsilon=eps,
                                        prevalence=prev,
                                        n_total=n,
                                        corr_strength=corr,
                                        corr_structure=structure,
                                        acc_cap=acc_cap,
                                        n_sim=n_sim,
                                    ),
                                    StudyConfig(
                                        threshold=thr, alpha=alpha, seed=seed
                                    ),
                                )
                            )

    curve_rows = []
    long_rows = []
    for scenario, cfg in grid:
        res = simulate.simulate_fwer(scenario, cfg, workers=args.workers)
        base = {
            "n_models": scenario.n_models,
            "se0": scenario.theta0.se0,
            "sp0": scenario.theta0.sp0,
            "epsilon": scenario.epsilon,
            "prevalence": scenario.prevalence,
            "n_total": scenario.n_total,
            "corr_structure": scenario.corr_structure,
            "corr_strength": scenario.corr_strength,
            "acc_cap": "" if scenario.acc_cap is None else scenario.acc_cap,
            "n_sim": res.n_sim,
            "alpha": cfg.alpha,
            "seed": cfg.seed,
        }
        curve_rows.append({**base, "fwer": res.fwer, "mc_se": res.mc_se})
        for metric, value in (
            ("fwer", res.fwer),
            ("mc_se", res.mc_se),
            ("rejections_any", res.rejections_any),
        ):
            long_rows.append({**base, "metric": metric, "value": value})
        print(
            f"S={scenario.n_models} theta0=({scenario.theta0.se0:g},"
            f"{scenario.theta0.sp0:g}) eps={scenario.epsilon:g} "
            f"rho={scenario.prevalence:g} n={scenario.n_total}: "
            f"FWER={res.fwer:.4f} (mc se {res.mc_se:.4f})"
        )

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv_rows(long_rows, out / "lfc_results.csv")
    plots.fwer_curves_figure(curve_rows, alpha, str(out / "lfc_fwer.png"))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--se0", type=float, default=None)
    p.add_argument("--sp0", type=float, default=None)
    p.add_argument("--delta0", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--out-dir",
        default=os.environ.get("COPRIMAX_OUT_DIR", "."),
        help="output directory (env COPRIMAX_OUT_DIR sets the default)",
    )
    p.add_argument("--format", choices=("json", "csv"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coprimax",
        description=(
            "Simultaneous evaluation of binary classifiers against "
            "sensitivity/specificity thresholds"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="run the evaluation-study analysis")
    p_eval.add_argument("--data", help="combined CSV with a 'label' column")
    p_eval.add_argument("--predictions", help="predictions CSV (separate mode)")
    p_eval.add_argument("--labels", help="labels CSV (separate mode)")
    _add_common(p_eval)

    for name, help_txt in (
        ("select", "choose models for evaluation from validation data"),
        ("plan-efp", "optimal-EFP planning (select --rule optimal_efp)"),
    ):
        p_sel = sub.add_parser(name, help=help_txt)
        p_sel.add_argument("--data", required=True,
                           help="validation CSV with a 'label' column")
        p_sel.add_argument("--rule", choices=("default", "within_k_se", "optimal_efp"),
                           default=None)
        p_sel.add_argument("--k", type=float, default=None,
                           help="multiplier for within_k_se")
        p_sel.add_argument("--n-eval", type=int, default=None,
                           help="planned evaluation sample size")
        p_sel.add_argument("--s-max", type=int, default=None)
        p_sel.add_argument("--max-iter", type=int, default=None)
        p_sel.add_argument("--num-tol", type=float, default=None)
        _add_common(p_sel)

    p_sim = sub.add_parser("simulate-lfc", help="worst-case FWER simulation grid")
    p_sim.add_argument("--n-sim", type=int, default=None,
                       help="override replicate count")
    p_sim.add_argument("--workers", type=int, default=1)
    _add_common(p_sim)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command in ("select", "plan-efp"):
            if args.command == "plan-efp":
                args.rule = "optimal_efp"
            return cmd_select(args)
        if args.command == "simulate-lfc":
            return cmd_simulate_lfc(args)
        raise ParseError(f"unknown command {args.command!r}")
    except CoprimaxError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
