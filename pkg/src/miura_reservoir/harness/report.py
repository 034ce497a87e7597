"""Plot-ready outputs for task results: CSV tables, summary JSON and PNG figures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..tasks import TaskResult

FIGURE_DPI = 110


def _stems(results: Sequence[TaskResult]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for r in results:
        n = seen.get(r.task, 0) + 1
        seen[r.task] = n
        out.append(r.task if n == 1 else f"{r.task}_{n}")
    return out


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    return repr(float(v))


def _write_matrix_csv(path: Path, corner: str, rows, cols, values) -> Path:
    lines = [",".join([corner, *(_num(c) for c in cols)])]
    for r, vals in zip(rows, values):
        lines.append(",".join([_num(r), *(_num(v) for v in vals)]))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_sweep_csv(path: Path, curve: list[dict]) -> Path:
    cols = ["count", "fraction", "mean_rmse", "std_rmse", "min_rmse", "max_rmse", "trials"]
    lines = [",".join(cols)]
    for c in curve:
        lines.append(",".join(_num(c[k]) if k not in ("count", "trials") else str(c[k]) for k in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_trials_csv(path: Path, predictions: list[dict]) -> Path:
    lines = ["count,trial,rmse,channels"]
    for q in predictions:
        lines.append(f"{q['count']},{q['trial']},{_num(q['rmse'])},{' '.join(map(str, q['channels']))}")
    path.write_text("\n".join(lines) + "\n")
    return path


ERROR_KEYS = ("rmse", "relative_error", "weight_relative_error", "correct", "mean_output", "prediction",
              "weight_prediction", "position_prediction", "frequency_class")


def per_condition_errors(result: TaskResult) -> dict:
    """Error fields of every prediction that came from a trajectory, keyed by trajectory id."""
    out: dict[str, dict] = {}
    for q in result.predictions:
        tid = q.get("trajectory")
        if not tid or "t" in q:
            continue
        out[tid] = {k: q[k] for k in ERROR_KEYS if k in q}
        for k in ("mass", "position", "frequency"):
            if k in q:
                out[tid][k] = q[k]
    return out


def report(results: Sequence[TaskResult], out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write every table, series and figure for ``results``; returns the paths written."""
    results = list(results)
    if not results:
        raise ValueError("report needs at least one task result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summary = {"tasks": {}}
    for stem, r in zip(_stems(results), results):
        written.append(r.write(out, stem))
        written += sorted(out.glob(f"{stem}__*.csv"))
        for name, table in sorted(r.tables.items()):
            if name == "success_matrix":
                corner = f"{table['row_label']}\\{table['col_label']}"
                written.append(_write_matrix_csv(out / f"{stem}_success_matrix.csv", corner,
                                                 table["rows"], table["cols"], table["success"]))
                written.append(_write_matrix_csv(out / f"{stem}_predicted_matrix.csv", corner,
                                                 table["rows"], table["cols"], table["prediction"]))
            elif name.startswith("colormap"):
                corner = f"{table['row_label']}\\{table['col_label']}"
                written.append(_write_matrix_csv(out / f"{stem}_{name}.csv", corner,
                                                 table["rows"], table["cols"], table["mean_output"]))
            elif name == "rmse_vs_count":
                written.append(_write_sweep_csv(out / f"{stem}_rmse_vs_count.csv", table["curve"]))
                written.append(_write_trials_csv(out / f"{stem}_rmse_trials.csv", r.predictions))
        summary["tasks"][stem] = {"task": r.task, "metrics": r.metrics, "per_condition": per_condition_errors(r)}
        if figures:
            written += _figures(r, out, stem)
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
    written.append(path)
    return written


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


# -- figures -----------------------------------------------------------------


def _figures(r: TaskResult, out: Path, stem: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []

    def save(fig, name):
        p = out / f"{stem}_{name}.png"
        fig.savefig(p, dpi=FIGURE_DPI, bbox_inches="tight", metadata={"Software": None})
        plt.close(fig)
        paths.append(p)

    for name, table in sorted(r.tables.items()):
        if name == "success_matrix":
            fig, ax = plt.subplots(figsize=(7, 5))
            ax.imshow(np.asarray(table["success"], dtype=float), cmap="RdYlGn", vmin=0, vmax=1, origin="upper")
            ax.set_xticks(range(len(table["cols"])), [f"{c:g}" for c in table["cols"]])
            ax.set_yticks(range(len(table["rows"])), [f"{c:g}" for c in table["rows"]])
            ax.set_xlabel("test mass (g)")
            ax.set_ylabel("second training mass (g)")
            save(fig, "success_matrix")
        elif name.startswith("colormap"):
            fig, ax = plt.subplots(figsize=(6, 4))
            im = ax.imshow(np.asarray(table["mean_output"]), cmap="coolwarm", vmin=-1.5, vmax=1.5, aspect="auto")
            ax.set_xticks(range(len(table["cols"])), table["cols"])
            ax.set_yticks(range(len(table["rows"])), [f"{c:g}" for c in table["rows"]])
            ax.set_xlabel("payload position")
            ax.set_ylabel("payload mass (g)")
            fig.colorbar(im, ax=ax, label="mean output")
            save(fig, name)
        elif name == "rmse_vs_count":
            curve = table["curve"]
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.errorbar([c["count"] for c in curve], [c["mean_rmse"] for c in curve],
                        yerr=[c["std_rmse"] for c in curve], marker="o", capsize=3)
            ax.set_xlabel("channels used")
            ax.set_ylabel("RMSE")
            save(fig, "rmse_vs_count")
    for name, s in sorted(r.series.items()):
        y = np.asarray(s["y"]).reshape(len(s["t"]), -1)
        target = np.asarray(s["target"]).reshape(len(s["t"]), -1)
        fig, axes = plt.subplots(y.shape[1], 1, figsize=(7, 2.4 * y.shape[1]), squeeze=False)
        for j, ax in enumerate(axes[:, 0]):
            ax.plot(s["t"], y[:, j], lw=0.8, label="output")
            ax.plot(s["t"], target[:, j], "--", lw=1.2, label="target")
            ax.set_ylabel(s["labels"][j] if j < len(s["labels"]) else f"task {j + 1}")
        axes[-1, 0].set_xlabel("time (s)")
        axes[0, 0].legend(loc="upper right", fontsize=8)
        save(fig, name)
    return paths
