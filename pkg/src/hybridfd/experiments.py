"""Experiment runners behind ``hybridfd run``.

Each runner takes an :class:`~hybridfd.config.ExperimentConfig`, writes CSV
tables into the output directory and returns a :class:`RunReport`.  Every
CSV starts with a header row naming its columns; files are written to a
temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import tempfile
import time
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import acoustic as ac
from . import helmholtz as hz
from .config import ExperimentConfig
from .kernels import KernelSpec
from .linalg import full_spectrum, sparse_direct_solve
from .nodes import NodeSet, Rectangle, generate_cartesian, generate_halton, generate_random, nearest_neighbors

SQUARE = Rectangle(-1.0, 1.0, -1.0, 1.0)
UNIT = Rectangle(0.0, 1.0, 0.0, 1.0)
PHASES = ("node-gen", "assembly", "factorization", "solve", "post")


@dataclass
class RunReport:
    experiment: str
    config: dict
    phases: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    metrics: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return atomic_write_text(path, buf.getvalue())


class _Recorder:
    def __init__(self, report: RunReport, outdir: Path):
        self.report = report
        self.outdir = outdir

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, time.perf_counter() - t0)

    def add(self, name, seconds):
        self.report.phases[name] = self.report.phases.get(name, 0.0) + max(0.0, float(seconds))

    def csv(self, name, header, rows):
        write_csv(self.outdir / name, header, rows)
        self.report.manifest.append(name)


def _domain(cfg: ExperimentConfig, default: Rectangle) -> Rectangle:
    d = cfg.nodes.get("domain")
    return default if d is None else Rectangle.from_sequence(d)


def build_nodes(cfg: ExperimentConfig, default_domain: Rectangle, default_m: int) -> NodeSet:
    spec = cfg.nodes
    dom = _domain(cfg, default_domain)
    layout = spec.get("layout", "cartesian")
    if layout == "cartesian":
        if "N" in spec and "nx" not in spec:
            m = hz.grid_side(spec["N"])
            return generate_cartesian(m, m, dom)
        return generate_cartesian(spec.get("nx", default_m), spec.get("nz", spec.get("nx", default_m)), dom)
    if layout == "halton":
        return generate_halton(spec.get("N", default_m**2), dom, spec.get("boundary_ring", 0), spec.get("start", 1))
    if layout == "random":
        return generate_random(spec.get("N", default_m**2), dom, spec.get("seed", cfg.seed), spec.get("boundary_ring", 0))
    return NodeSet.from_csv(spec["file"])


def _node_rows(nodes: NodeSet):
    return [(x, z) for x, z in nodes.coords]


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _test1(cfg, rec):
    k = cfg.kernel
    eps = k.epsilon if k.variant in ("gaussian", "hybrid") else 1.0
    gam = k.gamma if k.variant == "hybrid" else 1e-6
    names = cfg.get("settings", list(hz.TEST1_NAMES))
    settings = [s for s in hz.default_test1_settings(eps, gam, cfg.n) if s.name in names]
    with rec.phase("assembly"):
        rows, slopes = hz.test1_derivative_study(settings, cfg.get("Ns"), _domain(cfg, SQUARE))
    rec.csv("test1_errors.csv", ["setting", "N", "h", "error"], [(r["setting"], r["N"], r["h"], r["error"]) for r in rows])
    rec.csv("test1_slopes.csv", ["setting", "slope"], list(slopes.items()))
    return {"slopes": slopes}


def _test2_problem(cfg):
    return hz.test2_problem(cfg.get("k", 9.0), cfg.kernel, cfg.n, strict=cfg.get("strict", True))


def _helmholtz_test2(cfg, rec):
    prob = _test2_problem(cfg)
    if cfg.poly_degree is not None:
        prob = replace(prob, poly_degree=cfg.poly_degree)
    with rec.phase("node-gen"):
        nodes = build_nodes(cfg, SQUARE, 20)
    sol = hz.solve_bvp(prob, nodes)
    rec.add("assembly", sol.meta["assembly_time"])
    rec.add("factorization", sol.meta["factorization_time"])
    rec.add("solve", sol.meta["solve_time"])
    with rec.phase("post"):
        exact = prob.exact(nodes.x, nodes.z)
        u = np.real(sol.values)
        rec.csv("solution.csv", ["x", "z", "u", "exact", "abs_error"], [(x, z, a, b, abs(a - b)) for (x, z), a, b in zip(nodes.coords, u, exact)])
        metrics = {**sol.errors(prob.exact), "residual": sol.meta["residual"], "N": nodes.N}
        if nodes.N <= 3000:
            lam = full_spectrum(sol.operator)
            rec.csv("eigenvalues.csv", ["re", "im"], [(v.real, v.imag) for v in lam])
            metrics["max_re_eig"] = float(lam.real.max())
        A = sol.operator.matrix.tocoo()
        rec.csv("sparsity.csv", ["row", "col"], zip(A.row, A.col))
    return metrics


def _eigen_spectra(cfg, rec):
    with rec.phase("node-gen"):
        if cfg.nodes.get("layout", "halton") == "halton" and "N" not in cfg.nodes:
            nodes = generate_halton(324, _domain(cfg, SQUARE), 20, cfg.nodes.get("start", 1))
        else:
            nodes = build_nodes(cfg, SQUARE, 20)
    base = hz.kernel_for(cfg.kernel.epsilon, cfg.get("baseline_gamma", 0.0))
    kernels = [("baseline", base), ("kernel", cfg.kernel)]
    summary = []
    with rec.phase("solve"):
        for n in cfg.get("ns"):
            for label, ker in kernels:
                lam = hz.dirichlet_laplacian_spectrum(nodes, ker, int(n), cfg.poly_degree)
                rec.csv(f"eig_{label}_n{int(n)}.csv", ["re", "im"], [(v.real, v.imag) for v in lam])
                summary.append((label, ker.variant, ker.epsilon, ker.gamma, int(n), float(lam.real.max()), float(np.abs(lam).max())))
    rec.csv("eigen_summary.csv", ["label", "variant", "epsilon", "gamma", "n", "max_re", "max_abs"], summary)
    return {"max_re": {f"{s[0]}_n{s[4]}": s[5] for s in summary}}


def _eg_map(cfg, rec):
    with rec.phase("node-gen"):
        nodes = build_nodes(cfg, SQUARE, 20)
    with rec.phase("solve"):
        cells = hz.epsilon_gamma_map(_test2_problem(cfg), nodes, cfg.get("epsilons"), cfg.get("gammas"))
    cols = ["epsilon", "gamma", "error", "cond_local_max", "cond_global"]
    rec.csv("eg_map.csv", cols, [[c[k] for k in cols] for c in cells])
    return {"cells": len(cells), "failed": int(sum(np.isnan(c["error"]) for c in cells))}


def _converge(cfg, rec):
    prob = _test2_problem(cfg)
    with rec.phase("solve"):
        rows = hz.convergence_study(prob, cfg.get("Ns"))
    slope = hz.loglog_slope([r["h"] for r in rows], [r["linf"] for r in rows])
    rec.csv("converge.csv", ["N", "h", "linf", "rms", "residual"], [(r["N"], r["h"], r["linf"], r["rms"], r["residual"]) for r in rows])
    rec.csv("converge_slope.csv", ["norm", "slope"], [("linf", slope)])
    return {"slope": slope, "linf": [r["linf"] for r in rows]}


def timing_study(problem_factory, Ns, kernels, repeats: int = 3, include_fd: bool = True):
    """Median-of-``repeats`` phase timings per (method, N) after one discarded warm-up.

    ``kernels`` is a list of ``(label, KernelSpec)``.  Rows hold
    ``method, N, node_gen, assembly, factorization, solve, total``.
    """
    rows = []
    methods = list(kernels) + ([("fd5", None)] if include_fd else [])
    for N in Ns:
        m = hz.grid_side(N)
        for label, ker in methods:
            samples = []
            for rep in range(repeats + 1):
                t0 = time.perf_counter()
                nodes = generate_cartesian(m, m, SQUARE)
                t1 = time.perf_counter()
                if ker is None:
                    prob = problem_factory(KernelSpec.phs(3))
                    A, rhs = hz.classical_fd_system(prob, nodes, m, m)
                else:
                    prob = problem_factory(ker)
                    A, rhs = hz.assemble_bvp(prob, nodes)
                t2 = time.perf_counter()
                res = sparse_direct_solve(A, rhs)
                ph = (t1 - t0, t2 - t1, res.factor_time, res.solve_time)
                if rep > 0:
                    samples.append(ph)
            med = [statistics.median(s[i] for s in samples) for i in range(4)]
            rows.append((label, N, *med, sum(med)))
    return rows


def _timing(cfg, rec):
    kernels = [(f"{k['variant']}", KernelSpec.from_dict(k)) for k in cfg.get("kernels")]
    labels = [l for l, _ in kernels]
    if len(set(labels)) != len(labels):
        kernels = [(f"{l}{i}", k) for i, (l, k) in enumerate(kernels)]
    k = cfg.get("k", 9.0)
    factory = lambda ker: hz.test2_problem(k, ker, cfg.n, strict=False)
    with rec.phase("solve"):
        rows = timing_study(factory, cfg.get("Ns"), kernels, cfg.get("repeats", 3))
    rec.csv("timing.csv", ["method", "N", "node_gen", "assembly", "factorization", "solve", "total"], rows)
    return {"total": {f"{r[0]}_N{r[1]}": r[-1] for r in rows}}


def _acoustic_common(cfg, default_domain, default_m, default_c):
    # shape parameters refer to coordinates scaled by the domain width unless set
    nodes = build_nodes(cfg, default_domain, default_m)
    L = cfg.get("length_scale", nodes.domain.width)
    return nodes, ac.VelocityModel(cfg.get("c", default_c)), L


def _source(cfg, default_kind, default_loc):
    kind = cfg.get("source_kind", default_kind)
    return ac.SourceSpec(kind, tuple(cfg.get("source", default_loc)), fc=cfg.get("fc", 25.0), f0=cfg.get("f0", 20.0))


def _field_rows(nodes, values, analytic=None):
    if analytic is None:
        return [(x, z, v.real, v.imag) for (x, z), v in zip(nodes.coords, values)]
    return [(x, z, v.real, v.imag, a.real, a.imag) for (x, z), v, a in zip(nodes.coords, values, analytic)]


def _record_wave(rec, wf):
    m = wf.meta
    rec.add("assembly", m.get("assembly_time", 0.0))
    rec.add("factorization", m.get("factor_time", 0.0))
    rec.add("solve", m.get("solve_time", 0.0))


def _acoustic_dirac(cfg, rec):
    with rec.phase("node-gen"):
        nodes, model, L = _acoustic_common(cfg, UNIT, 60, 1.0)
    c = float(np.asarray(model.c))
    loc = cfg.get("source", [0.2, 0.8])
    rows, metrics, C = [], {}, None
    for b in cfg.get("boundaries", ["absorbing", "neumann"]):
        r = ac.dirac_experiment(nodes, cfg.get("frequency"), cfg.kernel, cfg.n, c, loc, b, C, check=cfg.get("strict", True), length_scale=L)
        _record_wave(rec, r.field)
        C = r.calibration if C is None else C
        with rec.phase("post"):
            rec.csv(f"field_{b}.csv", ["x", "z", "re", "im", "analytic_re", "analytic_im"], _field_rows(nodes, C * r.field.values, r.analytic))
        rows.append((b, r.rms, r.calibration.real, r.calibration.imag, r.reference_index, r.meta["calibration_frozen"], r.field.meta["residual"]))
        metrics[f"rms_{b}"] = r.rms
    rec.csv("dirac_summary.csv", ["boundary", "rms", "calibration_re", "calibration_im", "calibration_node", "calibration_frozen", "residual"], rows)
    return metrics


def _acoustic_freqs(cfg, rec):
    with rec.phase("node-gen"):
        nodes, model, L = _acoustic_common(cfg, Rectangle(0.0, 400.0, 0.0, 400.0), 50, 2000.0)
    src = _source(cfg, "ricker-peak", [200.0, 200.0])
    fields = ac.frequency_sweep(nodes, model, cfg.get("frequencies"), src, cfg.kernel, cfg.n, L, check=cfg.get("strict", True))
    rows = []
    for wf in fields:
        _record_wave(rec, wf)
        f = wf.frequency
        with rec.phase("post"):
            rec.csv(f"field_{f:g}Hz.csv", ["x", "z", "re", "im"], _field_rows(nodes, wf.values))
        rows.append((f, wf.meta.get("residual", 0.0), float(np.abs(wf.values).max()), bool(np.all(np.isfinite(wf.values)))))
    rec.csv("freqs_summary.csv", ["frequency", "residual", "max_abs", "finite"], rows)
    return {"max_residual": max(r[1] for r in rows), "all_finite": all(r[3] for r in rows), "spectrum": "ricker-peak: 2 f^2/(sqrt(pi) fc^3) exp(-f^2/fc^2)" if src.kind == "ricker-peak" else src.kind}


def _acoustic_halton(cfg, rec):
    from scipy.interpolate import griddata

    f = cfg.get("frequency")
    loc = np.asarray(cfg.get("source", [0.2, 0.8]), dtype=float)
    with rec.phase("node-gen"):
        grid, model, L = _acoustic_common(cfg, UNIT, 60, 1.0)
        dom = grid.domain
        Nh = cfg.get("halton_N", grid.N)
        per_side = max(2, int(round(np.sqrt(Nh))) - 1)
        ring = 4 * per_side
        hal = generate_halton(max(1, Nh - ring - 1), dom, per_side, cfg.nodes.get("start", 1))
        # put a node exactly on the source so both layouts share the point source
        hal = NodeSet.from_points(np.vstack([hal.coords, loc]), dom)
    c = float(np.asarray(model.c))
    res = {}
    for name, nodes in (("cartesian", grid), ("halton", hal)):
        r = ac.dirac_experiment(nodes, f, cfg.kernel, cfg.n, c, loc, "absorbing", check=cfg.get("strict", True), length_scale=L)
        _record_wave(rec, r.field)
        res[name] = (nodes, r)
        with rec.phase("post"):
            rec.csv(f"field_{name}.csv", ["x", "z", "re", "im", "analytic_re", "analytic_im"], _field_rows(nodes, r.calibration * r.field.values, r.analytic))
    with rec.phase("post"):
        (gn, gr), (hn, hr) = res["cartesian"], res["halton"]
        hv = hr.calibration * hr.field.values
        on_grid = griddata(hn.coords, hv.real, gn.coords, method="linear") + 1j * griddata(hn.coords, hv.imag, gn.coords, method="linear")
        ok = np.isfinite(on_grid)
        diff = float(np.sqrt(np.mean(np.abs(on_grid[ok] - gr.calibration * gr.field.values[ok]) ** 2)))
    rec.csv("halton_summary.csv", ["layout", "N", "rms_vs_analytic"], [("cartesian", gn.N, gr.rms), ("halton", hn.N, hr.rms)])
    return {"rms_cartesian": gr.rms, "rms_halton": hr.rms, "rms_layout_difference": diff}


def _acoustic_time(cfg, rec):
    with rec.phase("node-gen"):
        nodes, model, L = _acoustic_common(cfg, Rectangle(0.0, 300.0, 0.0, 300.0), 31, 2000.0)
    src = _source(cfg, "ricker-delayed", [150.0, 10.0])
    df = cfg.get("df", 1.0)
    freqs = np.arange(0.0, cfg.get("f_max") + 0.5 * df, df)
    fields = ac.frequency_sweep(nodes, model, freqs, src, cfg.kernel, cfg.n, L, check=cfg.get("strict", True))
    for wf in fields:
        _record_wave(rec, wf)
    with rec.phase("post"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            seis = ac.synthesize_time(fields, cfg.get("receivers"), cfg.get("dt"), cfg.get("T"))
        t = seis.times
        nr = seis.traces.shape[1]
        rec.csv("seismogram.csv", ["t"] + [f"r{j}" for j in range(nr)], [(ti, *row) for ti, row in zip(t, seis.traces)])
        rec.csv("envelope.csv", ["t"] + [f"r{j}" for j in range(nr)], [(ti, *row) for ti, row in zip(t, seis.envelope)])
        c = float(np.mean(model.at(nodes)))
        s = np.asarray(src.location)
        picks = []
        for j, r in enumerate(seis.receivers):
            tt = ac.first_break(seis, src, freqs, j)
            picks.append((r[0], r[1], tt, float(np.hypot(*(r - s)) / c)))
        rec.csv("first_breaks.csv", ["x", "z", "pick", "straight_ray"], picks)
    return {"first_breaks": [p[2] for p in picks], "nyquist_warning": seis.meta["nyquist_warning"]}


RUNNERS = {
    "derive-test1": _test1,
    "helmholtz-test2": _helmholtz_test2,
    "eigen-spectra": _eigen_spectra,
    "epsilon-gamma-map": _eg_map,
    "converge": _converge,
    "timing": _timing,
    "acoustic-dirac": _acoustic_dirac,
    "acoustic-freqs": _acoustic_freqs,
    "acoustic-halton": _acoustic_halton,
    "acoustic-time": _acoustic_time,
}


def run(cfg: ExperimentConfig, plots: bool = True) -> RunReport:
    """Execute ``cfg``, write its CSVs (and PNGs) and ``report.json``."""
    report = RunReport(cfg.experiment, cfg.echo())
    cfg.output.mkdir(parents=True, exist_ok=True)
    rec = _Recorder(report, cfg.output)
    report.metrics = RUNNERS[cfg.experiment](cfg, rec)
    if plots:
        from .plotting import render

        with rec.phase("post"):
            report.manifest.extend(render(cfg.output, cfg.experiment))
    report.manifest.append("report.json")
    atomic_write_text(cfg.output / "report.json", report.to_json())
    return report
