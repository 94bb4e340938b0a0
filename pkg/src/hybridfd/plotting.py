"""PNG figures rendered from the CSV tables of a run directory."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path) -> dict:
    """Columns of a headed CSV; numeric columns become float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return cols


def _save(fig, outdir: Path, name: str, out: list):
    fig.tight_layout()
    fig.savefig(outdir / name, dpi=110)
    plt.close(fig)
    out.append(name)


def _by(cols, key):
    for v in dict.fromkeys(cols[key]):
        yield v, cols[key] == v


def _loglog_groups(outdir, src, group, x, y, name, xlabel, ylabel, out):
    c = read_csv(outdir / src)
    fig, ax = plt.subplots(figsize=(5, 4))
    if group is None:
        ax.loglog(c[x], c[y], "o-")
    else:
        for g, m in _by(c, group):
            ax.loglog(c[x][m], c[y][m], "o-", label=str(g))
        ax.legend(fontsize=8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, outdir, name, out)


def _scatter_field(ax, c, val, title):
    sc = ax.tripcolor(c["x"], c["z"], val, shading="gouraud", cmap="seismic")
    lim = np.nanmax(np.abs(val)) or 1.0
    sc.set_clim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title(title, fontsize=9)
    return sc


def _eigs(ax, c, label):
    ax.plot(c["re"], c["im"], ".", ms=3, label=label)


def _plot_test1(outdir, out):
    _loglog_groups(outdir, "test1_errors.csv", "setting", "h", "error", "test1_errors.png", "h", "max error of d/dx", out)


def _plot_test2(outdir, out):
    c = read_csv(outdir / "solution.csv")
    fig, axs = plt.subplots(1, 2, figsize=(9, 4))
    fig.colorbar(_scatter_field(axs[0], c, c["u"], "computed u"), ax=axs[0])
    tc = axs[1].tripcolor(c["x"], c["z"], np.log10(c["abs_error"] + 1e-300), shading="gouraud")
    axs[1].set_aspect("equal")
    axs[1].set_title("log10 |error|", fontsize=9)
    fig.colorbar(tc, ax=axs[1])
    _save(fig, outdir, "solution.png", out)
    if (outdir / "eigenvalues.csv").exists():
        fig, ax = plt.subplots(figsize=(5, 4))
        _eigs(ax, read_csv(outdir / "eigenvalues.csv"), "assembled operator")
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        _save(fig, outdir, "eigenvalues.png", out)
    s = read_csv(outdir / "sparsity.csv")
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(s["col"], s["row"], ",k")
    ax.invert_yaxis()
    ax.set_title("sparsity", fontsize=9)
    _save(fig, outdir, "sparsity.png", out)


def _plot_eigen(outdir, out):
    c = read_csv(outdir / "eigen_summary.csv")
    ns = sorted({int(v) for v in c["n"]})
    fig, axs = plt.subplots(1, len(ns), figsize=(4 * len(ns), 3.8), squeeze=False)
    for ax, n in zip(axs[0], ns):
        for label in ("baseline", "kernel"):
            p = outdir / f"eig_{label}_n{n}.csv"
            if p.exists():
                _eigs(ax, read_csv(p), label)
        ax.axvline(0, color="k", lw=0.5)
        ax.set_title(f"n = {n}", fontsize=9)
        ax.set_xlabel("Re")
        ax.legend(fontsize=8)
    axs[0][0].set_ylabel("Im")
    _save(fig, outdir, "eigen_spectra.png", out)


def _plot_eg(outdir, out):
    c = read_csv(outdir / "eg_map.csv")
    eps = np.unique(c["epsilon"])
    gam = np.unique(c["gamma"])
    fig, axs = plt.subplots(1, 2, figsize=(10, 4))
    for ax, key, title in ((axs[0], "error", "log10 error"), (axs[1], "cond_local_max", "log10 max local condition")):
        Z = np.full((len(gam), len(eps)), np.nan)
        for e, g, v in zip(c["epsilon"], c["gamma"], c[key]):
            Z[np.searchsorted(gam, g), np.searchsorted(eps, e)] = np.log10(v) if v > 0 else np.nan
        im = ax.pcolormesh(np.arange(len(eps)), np.arange(len(gam)), Z, shading="nearest")
        ax.set_xticks(range(len(eps)), [f"{v:g}" for v in eps], fontsize=7, rotation=45)
        ax.set_yticks(range(len(gam)), [f"{v:g}" for v in gam], fontsize=7)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("gamma")
        ax.set_title(title, fontsize=9)
        fig.colorbar(im, ax=ax)
    _save(fig, outdir, "eg_map.png", out)


def _plot_converge(outdir, out):
    _loglog_groups(outdir, "converge.csv", None, "h", "linf", "converge.png", "h", "max error", out)


def _plot_timing(outdir, out):
    _loglog_groups(outdir, "timing.csv", "method", "N", "total", "timing.png", "N", "wall time [s]", out)


def _plot_fields(outdir, out, names, png):
    files = [n for n in names if (outdir / n).exists()]
    fig, axs = plt.subplots(1, len(files), figsize=(4.2 * len(files), 3.8), squeeze=False)
    for ax, n in zip(axs[0], files):
        c = read_csv(outdir / n)
        fig.colorbar(_scatter_field(ax, c, c["re"], Path(n).stem), ax=ax)
    _save(fig, outdir, png, out)


def _plot_dirac(outdir, out):
    _plot_fields(outdir, out, ["field_absorbing.csv", "field_neumann.csv"], "dirac_fields.png")
    p = outdir / "field_absorbing.csv"
    if p.exists():
        c = read_csv(p)
        fig, ax = plt.subplots(figsize=(4.5, 4))
        fig.colorbar(_scatter_field(ax, c, c["analytic_re"], "analytic"), ax=ax)
        _save(fig, outdir, "dirac_analytic.png", out)


def _plot_freqs(outdir, out):
    names = sorted((p.name for p in outdir.glob("field_*Hz.csv")), key=lambda s: float(s[6:-6]))
    _plot_fields(outdir, out, names, "freq_fields.png")


def _plot_halton(outdir, out):
    _plot_fields(outdir, out, ["field_cartesian.csv", "field_halton.csv"], "halton_fields.png")


def _plot_time(outdir, out):
    c = read_csv(outdir / "seismogram.csv")
    t = c.pop("t")
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, (name, tr) in enumerate(c.items()):
        s = np.max(np.abs(tr)) or 1.0
        ax.plot(j + 0.45 * tr / s, t, "k", lw=0.8)
    ax.invert_yaxis()
    ax.set_xlabel("receiver")
    ax.set_ylabel("t [s]")
    _save(fig, outdir, "seismogram.png", out)


PLOTTERS = {
    "derive-test1": _plot_test1,
    "helmholtz-test2": _plot_test2,
    "eigen-spectra": _plot_eigen,
    "epsilon-gamma-map": _plot_eg,
    "converge": _plot_converge,
    "timing": _plot_timing,
    "acoustic-dirac": _plot_dirac,
    "acoustic-freqs": _plot_freqs,
    "acoustic-halton": _plot_halton,
    "acoustic-time": _plot_time,
}


def render(outdir, experiment=None) -> list:
    """Write PNGs for a run directory; returns their file names."""
    outdir = Path(outdir)
    if experiment is None:
        experiment = json.loads((outdir / "report.json").read_text())["experiment"]
    out = []
    PLOTTERS[experiment](outdir, out)
    return out
