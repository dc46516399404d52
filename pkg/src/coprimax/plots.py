"""Figure rendering for CLI reports. All figures are written to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def efp_curve_figure(curve, n_eval: int, path: str) -> None:
    """Expected final performance against the number of evaluated models.

    Shows the Monte-Carlo band (+-1 SE), the maximizer (+) and the chosen
    smallest comparable size (x).
    """
    s_axis = np.arange(1, curve.efp.shape[0] + 1)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(s_axis, 100 * curve.efp, color="tab:blue", lw=1.5)
        ax.fill_between(
            s_axis,
            100 * (curve.efp - curve.se),
            100 * (curve.efp + curve.se),
            color="tab:blue",
            alpha=0.2,
            lw=0,
        )
        best = int(np.argmax(curve.efp))
        ax.plot(best + 1, 100 * curve.efp[best], "+", color="tab:red",
                markersize=12, mew=2, label="maximum")
        ax.plot(curve.s_star, 100 * curve.efp[curve.s_star - 1], "x",
                color="black", markersize=10, mew=2,
                label=f"selected S* = {curve.s_star}")
        ax.set_xlabel("number of models evaluated S")
        ax.set_ylabel("estimated expected final performance [%]")
        ax.set_title(f"planned evaluation size n = {n_eval}")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)


def fwer_curves_figure(rows: list[dict], alpha: float, path: str) -> None:
    """FWER against total sample size (log scale), one line per scenario group."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (
            row["n_models"],
            row["se0"],
            row["sp0"],
            row["epsilon"],
            row["prevalence"],
        )
        groups.setdefault(key, []).append(row)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for key, grp in sorted(groups.items()):
            grp = sorted(grp, key=lambda r: r["n_total"])
            ns = [r["n_total"] for r in grp]
            fwer = [r["fwer"] for r in grp]
            errs = [r["mc_se"] for r in grp]
            s, se0, sp0, eps, prev = key
            label = f"S={s}, θ0=({se0:g},{sp0:g}), ε={eps:g}, ρ={prev:g}"
            ax.errorbar(ns, fwer, yerr=errs, marker="o", ms=3.5,
                        capsize=2, lw=1.2, label=label)
        ax.axhline(alpha, ls="--", color="black", lw=1,
                   label=f"α = {alpha:g}")
        ax.set_xscale("log")
        ax.set_xlabel("total sample size n")
        ax.set_ylabel("family-wise error rate")
        ax.legend(fontsize=7)
        fig.savefig(path)
        plt.close(fig)


def evaluation_figure(report: dict, path: str) -> None:
    """Per-model point estimates with one-sided lower confidence bounds."""
    models = report["models"]
    names = [m["name"] for m in models]
    y = np.arange(len(models))
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(
            1, 2, sharey=True, figsize=(8.0, 0.6 + 0.45 * max(len(models), 4))
        )
        for ax, ep, thr_key in ((ax1, "se", "se0"), (ax2, "sp", "sp0")):
            est = np.array([m[f"{ep}_hat"] for m in models])
            low = np.array([m[f"ci_lower_{ep}"] for m in models])
            corr = np.array([m[f"corrected_{ep}"] for m in models])
            rej = np.array([bool(m["rejected"]) for m in models])
            colors = np.where(rej, "tab:green", "tab:gray")
            for i in range(len(models)):
                ax.plot([low[i], est[i]], [y[i], y[i]], color=colors[i], lw=2)
            ax.scatter(est, y, color=colors, zorder=3, label="estimate")
            ax.scatter(corr, y, color="black", marker="|", s=90, zorder=4,
                       label="corrected")
            ax.axvline(report[thr_key], ls="--", color="tab:red", lw=1)
            ax.set_xlabel(
                "sensitivity" if ep == "se" else "specificity"
            )
        ax1.set_yticks(y)
        ax1.set_yticklabels(names)
        ax1.invert_yaxis()
        ax2.legend(loc="lower right", fontsize=7)
        fig.suptitle(
            f"c_α = {report['c_alpha']:.3f}, α = {report['alpha']:g}, "
            f"final model: {report['final_model'] or 'none'}"
        )
        fig.savefig(path)
        plt.close(fig)
