"""Figures from declarative plot specs.

A spec is a small JSON object naming a CSV file and the columns to draw::

    {"data": "sweep.csv", "output": "sweep.png", "x": "r",
     "series": [{"y": "cost_dr", "label": "DR-LQR"},
                {"y": "mean", "err": "se", "label": "white"}],
     "xlabel": "r", "ylabel": "cost", "xscale": "log", "yscale": "linear",
     "title": "..."}

The spec is written next to the CSV so any renderer can redraw the figure;
:func:`render` is the matplotlib one.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import InputError  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
    "savefig.dpi": 120,
}


def read_columns(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"plot data not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_spec(spec: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    return path


def render(spec: dict, base_dir=".") -> Path:
    """Draw ``spec`` and save the PNG named by ``spec["output"]`` under ``base_dir``."""
    base = Path(base_dir)
    cols = read_columns(base / spec["data"])
    x = cols[spec["x"]]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for s in spec["series"]:
            y = cols[s["y"]]
            (line,) = ax.plot(x, y, s.get("style", "-"), label=s.get("label", s["y"]), lw=1.4)
            if s.get("err"):
                e = cols[s["err"]]
                ax.fill_between(x, y - e, y + e, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xscale(spec.get("xscale", "linear"))
        ax.set_yscale(spec.get("yscale", "linear"))
        ax.set_xlabel(spec.get("xlabel", spec["x"]))
        ax.set_ylabel(spec.get("ylabel", ""))
        if spec.get("title"):
            ax.set_title(spec["title"])
        if len(spec["series"]) > 1:
            ax.legend()
        fig.tight_layout()
        out = base / spec["output"]
        fig.savefig(out, metadata={"Software": None})
        plt.close(fig)
    return out


def figure(spec: dict, base_dir, name: str) -> list[Path]:
    """Write ``<name>.plot.json`` and render it; returns both paths."""
    base = Path(base_dir)
    spec_path = write_spec(spec, base / f"{name}.plot.json")
    return [spec_path, render(spec, base)]


def render_file(spec_path) -> Path:
    spec_path = Path(spec_path)
    try:
        spec = json.loads(spec_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read plot spec {spec_path}: {exc}") from None
    return render(spec, spec_path.parent)
