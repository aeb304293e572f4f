"""Figure rendering for plan artifacts.

Each plan kind gets one PNG next to its CSV output, drawn from the written
files rather than in-memory state so a rerun on existing CSVs is possible.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_plan_figures"]


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle)
                if row and not row[0].startswith("#")]
    if not rows:
        return [], []
    return rows[0], rows[1:]


def _column(header: list[str], rows: list[list[str]], name: str,
            numeric: bool = True) -> list:
    idx = header.index(name)
    if not numeric:
        return [row[idx] for row in rows]
    out = []
    for row in rows:
        try:
            out.append(float(row[idx]))
        except ValueError:
            out.append(float("nan"))
    return out


def _finite_pairs(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if y == y and x == x]
    return ([p[0] for p in pairs], [p[1] for p in pairs])


def _plot_convergence(paths: list[str], ax) -> None:
    mean_path = next(p for p in paths if p.endswith("_mean.csv"))
    header, rows = _read_table(mean_path)
    its = _column(header, rows, "iteration")
    for name in ("fit_error", "pred_error"):
        xs, ys = _finite_pairs(its, _column(header, rows, name))
        ax.semilogy(xs, ys, marker=".", label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative error")
    ax.legend()


def _plot_phase_diagram(paths: list[str], ax) -> None:
    header, rows = _read_table(next(p for p in paths
                                    if p.endswith("_rates.csv")))
    groups: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for row in rows:
        key = (row[header.index("n")], row[header.index("r")])
        groups.setdefault(key, []).append(
            (float(row[header.index("epsilon")]),
             float(row[header.index("reconstruction_rate")])))
    for (n, r), points in groups.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=f"n={n}, r={r}")
    ax.set_xlabel("epsilon = |E| / sqrt(m n)")
    ax.set_ylabel("reconstruction rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()


def _plot_summary_lines(paths: list[str], ax, x_name: str,
                        group_names: tuple[str, ...]) -> None:
    header, rows = _read_table(next(p for p in paths
                                    if p.endswith("_summary.csv")))
    groups: dict[tuple, list[tuple[float, float]]] = {}
    for row in rows:
        key = tuple(row[header.index(g)] for g in group_names)
        groups.setdefault(key, []).append(
            (float(row[header.index(x_name)]),
             float(row[header.index("median_rel_error")])))
    for key, points in groups.items():
        points.sort()
        xs, ys = _finite_pairs([p[0] for p in points], [p[1] for p in points])
        label = ", ".join(f"{n}={v}" for n, v in zip(group_names, key))
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_yscale("log")
    ax.set_xlabel(x_name)
    ax.set_ylabel("median relative error")
    if groups:
        ax.legend()


def _plot_noise(paths: list[str], ax) -> None:
    _plot_summary_lines(paths, ax, "noise_ratio_target", ("noise_model",))
    ax.set_xscale("log")
    ax.set_xlabel("target noise ratio N")


def _plot_condition(paths: list[str], ax) -> None:
    _plot_summary_lines(paths, ax, "kappa", ("solver",))
    ax.set_xlabel("condition number kappa")


def _plot_hard_easy(paths: list[str], ax) -> None:
    _plot_summary_lines(paths, ax, "epsilon", ("n", "r"))
    ax.set_xlabel("epsilon = |E| / sqrt(m n)")


def _plot_ratings(paths: list[str], ax) -> None:
    header, rows = _read_table(paths[0])
    if not rows:
        return
    row = rows[0]
    values = [float(row[header.index("nmae")]),
              float(row[header.index("baseline_nmae")])]
    ax.bar(["solver", "random baseline"], values)
    ax.set_ylabel("NMAE")


def _plot_incoherence(paths: list[str], fig) -> None:
    header, rows = _read_table(paths[0])
    sides = _column(header, rows, "side", numeric=False)
    ks = _column(header, rows, "k")
    cums = _column(header, rows, "cumulative")
    axes = fig.subplots(1, 2)
    for ax, side in zip(axes, ("left", "right")):
        xs = [k for k, s in zip(ks, sides) if s == side]
        ys = [c for c, s in zip(cums, sides) if s == side]
        ax.plot(xs, ys, label="sorted cumulative row norms")
        if xs:
            ax.plot([xs[0], xs[-1]], [xs[0], xs[-1]], linestyle="--",
                    label="uniform reference")
        ax.set_title(f"{side} factor")
        ax.set_xlabel("k")
        ax.legend(fontsize="small")


def render_plan_figures(kind: str, csv_paths: list[str]) -> list[Path]:
    """Render the kind's standard figure next to its main CSV."""
    out = Path(csv_paths[0]).with_suffix(".png")
    fig = plt.figure(figsize=(7.0, 4.5))
    try:
        if kind == "incoherence_report":
            _plot_incoherence(csv_paths, fig)
        else:
            ax = fig.subplots()
            if kind == "convergence":
                _plot_convergence(csv_paths, ax)
            elif kind == "phase_diagram":
                _plot_phase_diagram(csv_paths, ax)
            elif kind == "hard_easy_table":
                _plot_hard_easy(csv_paths, ax)
            elif kind in ("noise_table", "noise_model_sweep"):
                _plot_noise(csv_paths, ax)
            elif kind == "condition_sweep":
                _plot_condition(csv_paths, ax)
            elif kind == "ratings_eval":
                _plot_ratings(csv_paths, ax)
            else:
                return []
        fig.tight_layout()
        fig.savefig(out, dpi=120)
    finally:
        plt.close(fig)
    return [out]
