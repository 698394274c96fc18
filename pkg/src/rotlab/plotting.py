"""Figures for persisted reports, rendered off-screen with the Agg backend."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _sweep(ax, report):
    q = report.scalars.get("quantity", "error")
    ds = np.asarray(report.scalars.get("fit_deltas", []), float)
    vals = np.asarray(report.scalars.get("fit_values", []), float)
    if ds.size:
        ax.loglog(ds, vals, "o-", label=q)
        slope = report.scalars.get("slope", float("nan"))
        if ds.size >= 2 and np.isfinite(slope):
            ref = vals[0] * (ds / ds[0]) ** 1.0
            ax.loglog(ds, ref, "k--", lw=0.8, label="slope 1")
            ax.set_title(f"fitted slope {slope:.3f}")
    ax.set_xlabel("delta")
    ax.set_ylabel(q)
    ax.legend()


def _lifespan(ax, report):
    rot = report.column("rotation") > 0
    d = report.column("delta")[rot]
    tb = report.column("t_break")[rot]
    t_max = report.scalars.get("t_max", np.nan)
    x = np.log(1.0 / d)
    finite = np.isfinite(tb)
    ax.plot(x[finite], tb[finite], "o", label="breakdown")
    ax.plot(x[~finite], np.full((~finite).sum(), t_max), "^", label="no breakdown by t_max")
    ctrl = report.scalars.get("control_t_break", np.nan)
    if np.isfinite(ctrl):
        ax.axhline(ctrl, color="k", ls="--", lw=0.8, label="no rotation")
    ax.set_xlabel("ln(1/delta)")
    ax.set_ylabel("T*")
    ax.legend()


def _nio(ax, report):
    t = report.column("t")
    ax.plot(t, report.column("error"), label="|U - U2|")
    env = report.column("envelope")
    ax.plot(t, np.where(np.isfinite(env), env, np.nan), "k--", label="envelope")
    ax.set_xlabel("t")
    ax.legend()


def _series(ax, report):
    x = report.column(report.columns[0])
    for c in report.columns[1:]:
        y = report.column(c)
        if np.all(~np.isfinite(y)):
            continue
        ax.plot(x, y, label=c)
    ax.set_xlabel(report.columns[0])
    ax.legend(fontsize="small")


def _periodicity(ax, report):
    t = report.column("t")
    for c in report.columns[1:]:
        y = report.column(c)
        if np.any(np.isfinite(y)):
            ax.semilogy(t, np.maximum(y, 1e-17), ".-", label=c)
    ax.set_xlabel("t")
    ax.set_ylabel("sup-norm deviation from t = 0")
    ax.legend(fontsize="small")


_RENDER = {"sweep": _sweep, "lifespan": _lifespan, "nio": _nio, "periodicity": _periodicity}


def render_report(report, path) -> Path:
    """Draw the figure for ``report.kind`` and write it atomically to ``path``."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    try:
        _RENDER.get(report.kind, _series)(ax, report)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
        os.close(fd)
        try:
            fig.savefig(tmp, dpi=100)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    finally:
        plt.close(fig)
    return path
