"""Frequency-domain acoustic modelling: ``(lap + w^2/c^2) p = src`` with absorbing sides.

Time-harmonic fields carry ``exp(+i w t)`` (forward transform with
``exp(-i w t)``), so outgoing waves behave like ``H0^(2)(k r)`` and the
absorbing row is ``dp/dn + i w / c p = 0``.
"""

from __future__ import annotations

import csv
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .kernels import DiffOperatorSpec, KernelSpec, PolyBasisSpec
from .linalg import sparse_direct_solve
from .nodes import NodeSet, fill_distance, nearest_neighbors
from .stencil import GlobalOperator, assemble_rows

SOURCE_KINDS = ("dirac", "ricker-peak", "ricker-delayed")


@dataclass(frozen=True)
class VelocityModel:
    """Constant velocity ``c`` or one value per node."""

    c: object = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.c, dtype=float) <= 0):
            raise ValueError("velocity must be positive")

    def at(self, nodes: NodeSet) -> np.ndarray:
        c = np.asarray(self.c, dtype=float)
        if c.ndim == 0:
            return np.full(nodes.N, float(c))
        if c.shape != (nodes.N,):
            raise ValueError("per-node velocity does not match the node set")
        return c

    @property
    def is_constant(self) -> bool:
        return np.ndim(self.c) == 0


@dataclass(frozen=True)
class SourceSpec:
    kind: str
    location: tuple
    fc: Optional[float] = None
    f0: Optional[float] = None
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "ricker-peak" and not (self.fc and self.fc > 0):
            raise ValueError("ricker-peak source needs fc > 0")
        if self.kind == "ricker-delayed" and not (self.f0 and self.f0 > 0):
            raise ValueError("ricker-delayed source needs f0 > 0")

    def spectrum(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.kind == "dirac":
            return self.amplitude * np.ones_like(f, dtype=complex)
        if self.kind == "ricker-peak":
            return self.amplitude * ricker_spectrum_peak(f, self.fc).astype(complex)
        return self.amplitude * ricker_spectrum_delayed(f, self.f0)


@dataclass
class WaveField:
    nodes: NodeSet
    values: np.ndarray
    omega: float
    meta: dict = field(default_factory=dict)

    @property
    def frequency(self) -> float:
        return self.omega / (2 * np.pi)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "z", "re", "im"])
            for (x, z), v in zip(self.nodes.coords, self.values):
                w.writerow([repr(float(x)), repr(float(z)), repr(float(v.real)), repr(float(v.imag))])


@dataclass
class Seismogram:
    receivers: np.ndarray
    dt: float
    T: float
    traces: np.ndarray  # (n_t, n_receivers)
    envelope: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.traces.shape[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"r{j}" for j in range(self.traces.shape[1])])
            for t, row in zip(self.times, self.traces):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# source spectra
# ---------------------------------------------------------------------------

def ricker_spectrum_peak(f, fc: float) -> np.ndarray:
    """Amplitude spectrum ``2 f^2 / (sqrt(pi) fc^3) exp(-f^2 / fc^2)``, peaked at ``fc``."""
    f = np.asarray(f, dtype=float)
    return 2 * f**2 / (np.sqrt(np.pi) * fc**3) * np.exp(-(f**2) / fc**2)


def fc_from_mean(fbar: float) -> float:
    """``fc = fbar / (3 sqrt(pi))``, the quotient reading of the mean-frequency relation."""
    return fbar / (3 * np.sqrt(np.pi))


def ricker_spectrum_delayed(f, f0: float) -> np.ndarray:
    """``sqrt(4/(pi f0^2)) (f/f0)^2 exp(-(f/f0)^2) exp(-2 i pi f / f0)``.

    The phase factor delays the wavelet by ``1/f0`` seconds.
    """
    f = np.asarray(f, dtype=float)
    u = f / f0
    return np.sqrt(4 / (np.pi * f0**2)) * u**2 * np.exp(-(u**2)) * np.exp(-2j * np.pi * u)


# ---------------------------------------------------------------------------
# reference solution
# ---------------------------------------------------------------------------

def greens_reference(omega: float, c: float, source, points) -> np.ndarray:
    """Outgoing 2D free-space Green's function ``-(i/4) H0^(2)(w r / c)``.

    This is the complex conjugate of ``(i/4) H0^(1)``, matching the
    ``exp(+i w t)`` time dependence.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0] - source[0], pts[:, 1] - source[1])
    if np.any(r == 0):
        raise ValueError("Green's function is singular at the source")
    return -0.25j * special.hankel2(0, omega * r / c)


def reference_node(nodes: NodeSet, source_index: int) -> int:
    """Node farthest from both the source and the boundary (max of the smaller distance)."""
    d = nodes.domain
    x, z = nodes.x, nodes.z
    s = nodes.coords[source_index]
    r = np.hypot(x - s[0], z - s[1])
    db = np.minimum.reduce([x - d.x0, d.x1 - x, z - d.z0, d.z1 - z])
    return int(np.argmax(np.minimum(r, db)))


def calibrate(computed: np.ndarray, analytic: np.ndarray, ref: int) -> complex:
    """Single complex constant ``C`` with ``C * computed[ref] == analytic[ref]``."""
    if computed[ref] == 0:
        raise ValueError("computed field vanishes at the calibration node")
    return complex(analytic[ref] / computed[ref])


def rms_deviation(nodes: NodeSet, computed, analytic, source_index: int, radius: float) -> float:
    """RMS of ``|computed - analytic|`` over nodes farther than ``radius`` from the source."""
    s = nodes.coords[source_index]
    r = np.hypot(nodes.x - s[0], nodes.z - s[1])
    mask = r > radius * (1 + 1e-12)
    e = np.abs(np.asarray(computed) - np.asarray(analytic))[mask]
    return float(np.sqrt(np.mean(e**2)))


# ---------------------------------------------------------------------------
# system and solves
# ---------------------------------------------------------------------------

def physical_kernel(kernel: KernelSpec, length_scale: Optional[float]) -> KernelSpec:
    """Kernel whose shape parameters refer to coordinates divided by ``length_scale``."""
    return kernel if length_scale is None else kernel.rescaled(1.0 / length_scale)


def acoustic_system(
    nodes: NodeSet,
    model: VelocityModel,
    omega: float,
    kernel: KernelSpec,
    n: int,
    length_scale: Optional[float] = None,
    boundary: str = "absorbing",
    stencils=None,
    poly: Optional[PolyBasisSpec] = None,
    check: bool = True,
) -> GlobalOperator:
    """Interior rows ``lap + w^2/c^2``; boundary rows ``d/dn + i w / c`` (or plain ``d/dn``)."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    if boundary not in ("absorbing", "neumann"):
        raise ValueError(f"unknown boundary treatment {boundary!r}")
    if stencils is None:
        stencils = nearest_neighbors(nodes, n)
    c = model.at(nodes)
    is_b = nodes.is_boundary
    ops = []
    for i in range(nodes.N):
        if is_b[i]:
            if boundary == "absorbing":
                ops.append(DiffOperatorSpec.robin(1j * omega / c[i]))
            else:
                ops.append(DiffOperatorSpec.normal_derivative())
        else:
            ops.append(DiffOperatorSpec.helmholtz(omega / c[i], 1))
    return assemble_rows(nodes, stencils, physical_kernel(kernel, length_scale), ops, poly, check)


def grid_spacing(nodes: NodeSet):
    """``(h_x, h_z)`` of a Cartesian node set; fill distance for scattered nodes."""
    xs = np.unique(np.round(nodes.x, 12))
    zs = np.unique(np.round(nodes.z, 12))
    if len(xs) * len(zs) == nodes.N:
        return float(np.diff(xs).min()), float(np.diff(zs).min())
    h = fill_distance(nodes)
    return h, h


def snap_source(nodes: NodeSet, location, tol: Optional[float] = None):
    """Index of the node nearest ``location`` and the snap distance (at most half a cell diagonal)."""
    loc = np.asarray(location, dtype=float)
    if not nodes.domain.contains(loc[None, :], tol=1e-12)[0]:
        raise ValueError(f"source {tuple(loc)} lies outside the domain")
    i = nodes.nearest(loc)
    dist = float(np.hypot(*(nodes.coords[i] - loc)))
    if tol is None:
        tol = 0.5 * float(np.hypot(*grid_spacing(nodes)))
    if dist > tol * (1 + 1e-9):
        raise ValueError(f"source is {dist:.3g} from the nearest node (limit {tol:.3g})")
    if nodes.labels[i]:
        raise ValueError("source snaps to a boundary node")
    return i, dist


def dirac_source_vector(nodes: NodeSet, location, hx: Optional[float] = None, hz: Optional[float] = None):
    """Single entry ``1 / (h_x h_z)^2`` at the node nearest ``location``.

    Returns ``(vector, index, snap_distance)``.
    """
    if hx is None or hz is None:
        gx, gz = grid_spacing(nodes)
        hx = gx if hx is None else hx
        hz = gz if hz is None else hz
    i, dist = snap_source(nodes, location, tol=0.5 * float(np.hypot(hx, hz)))
    b = np.zeros(nodes.N, dtype=complex)
    b[i] = 1.0 / (hx * hz) ** 2
    return b, i, dist


def solve_frequency(
    nodes: NodeSet,
    model: VelocityModel,
    omega: float,
    source: SourceSpec,
    kernel: KernelSpec,
    n: int,
    length_scale: Optional[float] = None,
    boundary: str = "absorbing",
    stencils=None,
    check: bool = True,
) -> WaveField:
    b, isrc, snap = dirac_source_vector(nodes, source.location)
    amp = complex(source.spectrum(omega / (2 * np.pi)))
    t0 = time.perf_counter()
    A = acoustic_system(nodes, model, omega, kernel, n, length_scale, boundary, stencils, check=check)
    t_asm = time.perf_counter() - t0
    res = sparse_direct_solve(A, amp * b)
    meta = {
        "source_index": isrc,
        "snap_distance": snap,
        "residual": res.relative_residual,
        "assembly_time": t_asm,
        "factor_time": res.factor_time,
        "solve_time": res.solve_time,
        "source_amplitude": amp,
    }
    return WaveField(nodes, np.asarray(res.x, dtype=complex), float(omega), meta)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HYBRIDFD_THREADS", "1")))
    except ValueError:
        return 1


def frequency_sweep(
    nodes: NodeSet,
    model: VelocityModel,
    freqs: Sequence[float],
    source: SourceSpec,
    kernel: KernelSpec,
    n: int,
    length_scale: Optional[float] = None,
    boundary: str = "absorbing",
    check: bool = True,
) -> list:
    """One independent solve per frequency; ``f = 0`` yields a zero field."""
    freqs = [float(f) for f in freqs]
    if any(f < 0 for f in freqs) or freqs != sorted(freqs):
        raise ValueError("frequencies must be nonnegative and sorted")
    if not freqs:
        return []
    stencils = nearest_neighbors(nodes, n)

    def one(f):
        if f == 0 and source.kind != "dirac":
            return WaveField(nodes, np.zeros(nodes.N, dtype=complex), 0.0, {"residual": 0.0})
        try:
            wf = solve_frequency(nodes, model, 2 * np.pi * f, source, kernel, n, length_scale, boundary, stencils, check)
        except Exception as exc:
            raise RuntimeError(f"solve failed at {f} Hz: {exc}") from exc
        return wf

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(one, freqs))


# ---------------------------------------------------------------------------
# time domain
# ---------------------------------------------------------------------------

def _inverse_sum(spectra: np.ndarray, freqs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``sum_f X(f) exp(2 i pi f t) df w_f`` with weight 2 for ``f > 0``; shape (n_t, ...)."""
    df = freqs[1] - freqs[0] if len(freqs) > 1 else 1.0
    w = np.where(freqs > 0, 2.0, 1.0) * df
    E = np.exp(2j * np.pi * t[:, None] * freqs[None, :])
    return E @ (w[:, None] * spectra.reshape(len(freqs), -1))


def synthesize_spectra(spectra, freqs, dt: float, T: float):
    """Real traces and envelopes from spectra sampled on a uniform frequency grid.

    ``spectra`` has shape (n_f,) or (n_f, n_receivers).  Returns
    ``(times, traces, envelope, meta)``.
    """
    freqs = np.asarray(freqs, dtype=float)
    X = np.asarray(spectra, dtype=complex)
    if len(freqs) > 1 and not np.allclose(np.diff(freqs), freqs[1] - freqs[0]):
        raise ValueError("frequency grid must be uniform")
    nt = int(round(T / dt)) + 1
    t = dt * np.arange(nt)
    S = _inverse_sum(X, freqs, t)
    meta = {"nyquist": 0.5 / dt, "f_max": float(freqs.max()) if len(freqs) else 0.0}
    meta["nyquist_warning"] = meta["f_max"] > meta["nyquist"]
    if len(freqs) > 1 and T > 1.0 / (freqs[1] - freqs[0]):
        meta["period_warning"] = True
    shape = (nt,) if X.ndim == 1 else (nt, X.shape[1])
    return t, S.real.reshape(shape), np.abs(S).reshape(shape), meta


def synthesize_time(fields: Sequence[WaveField], receivers, dt: float, T: float) -> Seismogram:
    """Seismogram at ``receivers`` (nearest-node sampling)."""
    if not fields:
        raise ValueError("no fields to synthesize")
    nodes = fields[0].nodes
    rec = np.atleast_2d(np.asarray(receivers, dtype=float))
    idx = [nodes.nearest(r) for r in rec]
    freqs = np.array([wf.frequency for wf in fields])
    X = np.array([wf.values[idx] for wf in fields])
    _, traces, env, meta = synthesize_spectra(X, freqs, dt, T)
    if meta["nyquist_warning"]:
        warnings.warn("f_max exceeds the Nyquist frequency of dt", RuntimeWarning, stacklevel=2)
    meta["receiver_nodes"] = idx
    return Seismogram(rec, dt, T, traces, env, meta)


def envelope_peak_time(times, envelope) -> float:
    return float(np.asarray(times)[int(np.argmax(envelope))])


def first_break(seis: Seismogram, source: SourceSpec, freqs, receiver: int = 0) -> float:
    """Arrival time as the envelope peak at the receiver minus the wavelet's own envelope peak."""
    t, _, wenv, _ = synthesize_spectra(source.spectrum(freqs), freqs, seis.dt, seis.T)
    return envelope_peak_time(seis.times, seis.envelope[:, receiver]) - envelope_peak_time(t, wenv)


# ---------------------------------------------------------------------------
# Dirac point-source experiment
# ---------------------------------------------------------------------------

@dataclass
class DiracResult:
    rms: float
    calibration: complex
    reference_index: int
    source_index: int
    field: WaveField
    analytic: np.ndarray
    meta: dict = field(default_factory=dict)


def dirac_experiment(
    nodes: NodeSet,
    frequency: float,
    kernel: KernelSpec,
    n: int = 10,
    c: float = 1.0,
    location=(0.2, 0.8),
    boundary: str = "absorbing",
    calibration: Optional[complex] = None,
    exclusion: float = 2.0,
    check: bool = True,
    length_scale: Optional[float] = None,
) -> DiracResult:
    """Point-source field compared with the calibrated analytic reference.

    When ``calibration`` is given it is used as is (frozen); otherwise it is
    fit at :func:`reference_node`.
    """
    omega = 2 * np.pi * frequency
    src = SourceSpec("dirac", tuple(location))
    wf = solve_frequency(nodes, VelocityModel(c), omega, src, kernel, n, length_scale, boundary, check=check)
    isrc = wf.meta["source_index"]
    s = nodes.coords[isrc]
    G = np.zeros(nodes.N, dtype=complex)
    off = np.arange(nodes.N) != isrc
    G[off] = greens_reference(omega, c, s, nodes.coords[off])
    ref = reference_node(nodes, isrc)
    C = calibrate(wf.values, G, ref) if calibration is None else complex(calibration)
    h = max(grid_spacing(nodes))
    rms = rms_deviation(nodes, C * wf.values, G, isrc, exclusion * h)
    meta = {"calibration_node": ref, "calibration_frozen": calibration is not None, "exclusion_radius": exclusion * h, "boundary": boundary}
    return DiracResult(rms, C, ref, isrc, wf, G, meta)
