import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridfd import acoustic as ac
from hybridfd.acoustic import SourceSpec, VelocityModel
from hybridfd.kernels import DiffOperatorSpec, KernelSpec
from hybridfd.nodes import Rectangle, generate_cartesian, nearest_neighbors
from hybridfd.stencil import assemble_rows

UNIT = Rectangle(0.0, 1.0, 0.0, 1.0)
HY = KernelSpec.hybrid(1.0, 1e-3)


def test_zero_frequency_rows_are_laplacian_and_neumann():
    nodes = generate_cartesian(12, 12, UNIT)
    st_ = nearest_neighbors(nodes, 10)
    A = ac.acoustic_system(nodes, VelocityModel(1.0), 0.0, HY, 10, stencils=st_).matrix
    ops = [DiffOperatorSpec.normal_derivative() if b else DiffOperatorSpec.laplacian() for b in nodes.is_boundary]
    B = assemble_rows(nodes, st_, HY, ops).matrix
    assert abs(A - B).max() < 1e-12


def test_system_argument_checks():
    nodes = generate_cartesian(6, 6, UNIT)
    with pytest.raises(ValueError):
        ac.acoustic_system(nodes, VelocityModel(1.0), -1.0, HY, 10)
    with pytest.raises(ValueError):
        ac.acoustic_system(nodes, VelocityModel(1.0), 1.0, HY, 10, boundary="pml")
    with pytest.raises(ValueError):
        VelocityModel(0.0)


def test_plane_wave_residual_decreases():
    # exp(-ikx) travels towards +x and satisfies the absorbing row on the right side
    omega = 2 * np.pi * 2.0
    res_int, res_right = [], []
    for m in (21, 41, 81):
        nodes = generate_cartesian(m, m, UNIT)
        A = ac.acoustic_system(nodes, VelocityModel(1.0), omega, KernelSpec.hybrid(1.0, 1e-6), 10).matrix
        r = np.abs(A @ np.exp(-1j * omega * nodes.x))
        right = np.array([lab == "right" for lab in nodes.labels])
        res_int.append(r[~nodes.is_boundary].max() / omega**2)
        res_right.append(r[right].max() / omega)
    assert res_int[0] > res_int[1] > res_int[2]
    assert res_right[0] > res_right[1] > res_right[2]


def test_dirac_vector():
    nodes = generate_cartesian(60, 60, UNIT)
    b, i, dist = ac.dirac_source_vector(nodes, (0.5, 0.5))
    assert b[i] == pytest.approx(59.0**4) and b[i] == pytest.approx(1.2117e7, rel=1e-4)
    assert np.count_nonzero(b) == 1 and b.sum() == b[i]
    assert dist <= 0.5 * math.hypot(1 / 59, 1 / 59)
    b2, i2, _ = ac.dirac_source_vector(nodes, (0.5, 0.5))
    assert i2 == i and np.array_equal(b, b2)
    with pytest.raises(ValueError):
        ac.dirac_source_vector(nodes, (1.5, 0.5))
    with pytest.raises(ValueError):
        ac.dirac_source_vector(nodes, (0.0, 0.5))


def test_ricker_spectra():
    assert ac.ricker_spectrum_peak(0.0, 25.0) == 0.0
    assert ac.ricker_spectrum_delayed(0.0, 20.0) == 0.0
    f = np.linspace(0, 100, 200001)
    assert f[np.argmax(ac.ricker_spectrum_peak(f, 25.0))] == pytest.approx(25.0, abs=1e-3)
    a = ac.ricker_spectrum_delayed(f, 20.0)
    assert f[np.argmax(np.abs(a))] == pytest.approx(20.0, abs=1e-3)
    u = f / 20.0
    np.testing.assert_allclose(np.abs(a), np.sqrt(4 / (np.pi * 400)) * u**2 * np.exp(-(u**2)), atol=1e-15)
    assert ac.fc_from_mean(3 * math.sqrt(math.pi) * 25) == pytest.approx(25.0)
    with pytest.raises(ValueError):
        SourceSpec("ricker-peak", (0, 0))
    with pytest.raises(ValueError):
        SourceSpec("gauss", (0, 0))


def _j0_series(x, terms=40):
    return sum((-1) ** k * (x / 2) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))


def test_greens_reference():
    src = (0.0, 0.0)
    r = np.array([[200.0, 0.0], [400.0, 0.0]])
    g = ac.greens_reference(1.0, 1.0, src, r)
    assert abs(g[1]) / abs(g[0]) == pytest.approx(2**-0.5, rel=1e-3)
    x = 1e-3
    g0 = ac.greens_reference(1.0, 1.0, src, [[x, 0.0]])[0]
    assert g0.real == pytest.approx(-(2 / math.pi) * (math.log(x / 2) + 0.5772157) / 4, rel=1e-6)
    assert g0.imag == pytest.approx(-0.25, rel=1e-6)
    for x in (0.3, 0.7, 2.5):
        g = ac.greens_reference(1.0, 1.0, src, [[0.0, x]])[0]
        assert -4 * g.imag == pytest.approx(_j0_series(x), abs=1e-12)
    with pytest.raises(ValueError):
        ac.greens_reference(1.0, 1.0, src, [[0.0, 0.0]])


@pytest.fixture(scope="module")
def grid41():
    return generate_cartesian(41, 41, UNIT)


def test_linearity_in_source(grid41):
    omega = 2 * np.pi * 3.0
    args = (grid41, VelocityModel(1.0), omega)
    p1 = ac.solve_frequency(*args, SourceSpec("dirac", (0.4, 0.6)), HY, 10).values
    p2 = ac.solve_frequency(*args, SourceSpec("dirac", (0.4, 0.6), amplitude=2.0), HY, 10).values
    p0 = ac.solve_frequency(*args, SourceSpec("dirac", (0.4, 0.6), amplitude=0.0), HY, 10).values
    assert np.abs(p0).max() == 0.0
    assert np.abs(p2 - 2 * p1).max() <= 1e-12 * np.abs(p1).max()


def test_reciprocity(grid41):
    # the discrete operator is not symmetric, so reciprocity holds only approximately
    omega = 2 * np.pi * 3.0
    K = KernelSpec.hybrid(1.0, 1e-6)
    a, b = (0.3, 0.4), (0.7, 0.65)
    pa = ac.solve_frequency(grid41, VelocityModel(1.0), omega, SourceSpec("dirac", a), K, 10)
    pb = ac.solve_frequency(grid41, VelocityModel(1.0), omega, SourceSpec("dirac", b), K, 10)
    ab = pa.values[grid41.nearest(b)]
    ba = pb.values[grid41.nearest(a)]
    assert abs(ab - ba) < 0.01 * abs(ab)


def test_sweep(grid41):
    src = SourceSpec("ricker-delayed", (0.5, 0.5), f0=3.0)
    assert ac.frequency_sweep(grid41, VelocityModel(1.0), [], src, HY, 10) == []
    with pytest.raises(ValueError):
        ac.frequency_sweep(grid41, VelocityModel(1.0), [2.0, 1.0], src, HY, 10)
    zero, one = ac.frequency_sweep(grid41, VelocityModel(1.0), [0.0, 2.0], src, HY, 10)
    assert np.abs(zero.values).max() == 0.0
    ref = ac.solve_frequency(grid41, VelocityModel(1.0), 2 * np.pi * 2.0, src, HY, 10)
    np.testing.assert_array_equal(one.values, ref.values)
    assert one.meta["residual"] < 1e-10


def test_sweep_failure_names_frequency():
    nodes = generate_cartesian(10, 10, UNIT)
    src = SourceSpec("dirac", (0.5, 0.5))
    with pytest.raises(RuntimeError, match="2.0 Hz"):
        ac.frequency_sweep(nodes, VelocityModel(1.0), [2.0], src, KernelSpec.gaussian(1e-4), 10)


def test_synthesis_basics():
    freqs = np.array([0.0, 10.0, 20.0])
    t, tr, env, meta = ac.synthesize_spectra(np.zeros(3), freqs, 0.001, 0.5)
    assert len(t) == 501 and np.all(tr == 0)
    t, tr, env, meta = ac.synthesize_spectra(np.array([0.0, 1.0, 0.0]), freqs, 0.001, 0.5)
    np.testing.assert_allclose(tr, 20.0 * np.cos(2 * np.pi * 10 * t), atol=1e-10)
    np.testing.assert_allclose(env, 20.0, atol=1e-10)
    assert not meta["nyquist_warning"]
    assert ac.synthesize_spectra(np.ones(3), freqs, 0.05, 0.5)[3]["nyquist_warning"]
    with pytest.raises(ValueError):
        ac.synthesize_spectra(np.ones(3), [0.0, 1.0, 3.0], 0.01, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(5.0, 40.0))
def test_wavelet_pulse_recovery(f0):
    # the delayed Ricker wavelet peaks 1/f0 after t = 0
    freqs = np.arange(0.0, 6 * f0, f0 / 50)
    dt = 1e-4
    t, tr, env, _ = ac.synthesize_spectra(ac.ricker_spectrum_delayed(freqs, f0), freqs, dt, 3.0 / f0)
    assert abs(t[np.argmax(tr)] - 1 / f0) <= 2 * dt
    assert abs(ac.envelope_peak_time(t, env) - 1 / f0) <= 2 * dt


def test_first_break_straight_ray():
    dom = Rectangle(0.0, 400.0, 0.0, 400.0)
    nodes = generate_cartesian(41, 41, dom)
    src = SourceSpec("ricker-delayed", (200.0, 200.0), f0=20.0)
    freqs = np.arange(0.0, 60.0 + 1e-9, 1.0)
    fields = ac.frequency_sweep(nodes, VelocityModel(2000.0), freqs, src, HY, 10, length_scale=400.0)
    seis = ac.synthesize_time(fields, [[200.0, 400.0 - 10.0]], 0.0025, 0.5)
    assert seis.traces.shape == (201, 1)
    assert ac.first_break(seis, src, freqs) == pytest.approx(190.0 / 2000.0, abs=0.02)
