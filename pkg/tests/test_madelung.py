import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhydro.errors import PhaseNotSingleValued, ValidationError
from qhydro.fields import Constants, Grid
from qhydro.madelung import (
    born_boltzmann_gap,
    continuity_residual,
    curl_defect,
    decompose,
    quantum_potential,
    reconstruct,
    roundtrip_error,
    snapshot_fields,
    unwrap_phase,
)
from qhydro.scenario import _vortex
from qhydro.schrodinger import (
    Potential,
    WaveField,
    evolve,
    evolve_exact,
    gaussian_packet,
    harmonic_eigenstate,
    plane_wave,
)


@pytest.fixture
def wave():
    g = Grid.cube(1, 64, 2 * np.pi * 10)
    return plane_wave(g, 1.0, amplitude=1.0)


def test_plane_wave_fields(wave):
    f = decompose(wave)
    assert np.max(np.abs(f.S)) < 1e-15
    np.testing.assert_allclose(f.v[0], 1.0, atol=1e-12)
    assert np.max(np.abs(f.U)) < 1e-12
    assert np.max(np.abs(f.laplacian_v)) < 1e-12


def test_real_ground_state_has_no_flow(grid1d):
    f = decompose(harmonic_eigenstate(grid1d, 0, 1.0))
    assert np.nanmax(np.abs(f.v)) < 1e-11
    assert np.nanmax(np.abs(f.grad_phase)) < 1e-11


def test_packet_mean_velocity_is_momentum_over_mass():
    g = Grid.cube(1, 512, 40.0)
    for m in (1.0, 2.0):
        f = decompose(gaussian_packet(g, 0.0, 2.0, 1.0, Constants(mass=m)))
        assert np.nanmean(f.v[0][f.mask.active]) == pytest.approx(2.0 / m, abs=1e-8)


def test_ground_state_quantum_potential_closed_form(grid1d):
    wf = harmonic_eigenstate(grid1d, 0, 1.0)
    f = decompose(wf)
    m = f.mask.active
    x = grid1d.axes[0]
    assert np.max(np.abs(f.U[m] - (0.5 - x[m] ** 2 / 2))) < 1e-8
    pot = Potential.harmonic(grid1d, 1.0, Constants())
    assert np.max(np.abs(f.U[m] + pot.values[m] - 0.5)) < 1e-8
    rep = quantum_potential(f)
    assert rep.forms_agree and rep.max_relative_discrepancy < 1e-8


def test_under_resolved_state_warns_about_forms():
    g = Grid.cube(1, 32, 20.0)
    wf = harmonic_eigenstate(g, 6, 1.0)
    with pytest.warns(UserWarning, match="forms disagree"):
        rep = quantum_potential(decompose(wf), tolerance=1e-12)
    assert not rep.forms_agree


def test_plane_wave_quantum_potential_vanishes(wave):
    rep = quantum_potential(decompose(wave))
    assert np.max(np.abs(rep.U)) < 1e-12
    assert rep.forms_agree


def test_roundtrip_packet_and_plane_wave(wave):
    g = Grid.cube(2, 64, 24.0)
    wf = gaussian_packet(g, [0.5, -1.0], [1.0, 0.5], [1.2, 1.0])
    f = decompose(wf)
    rebuilt = reconstruct(f, unwrap_phase(wf))
    assert roundtrip_error(wf, rebuilt, f.mask) < 1e-10
    fw = decompose(wave)
    assert roundtrip_error(wave, reconstruct(fw, unwrap_phase(wave)), fw.mask) < 1e-14


def test_plane_wave_phase_is_linear(wave):
    g = wave.grid
    ph = unwrap_phase(wave, reference=(0,))
    np.testing.assert_allclose(ph.I, g.axes[0] - g.axes[0][0], atol=1e-10)


def test_eigenstate_phase_is_constant(grid1d):
    wf = harmonic_eigenstate(grid1d, 2, 1.0)
    wf = WaveField(wf.psi * np.exp(-2.5j * 0.7), grid1d, wf.constants, 0.7)
    ph = unwrap_phase(wf)
    vals = ph.I[np.isfinite(ph.I)]
    # the sign flips of a real Hermite function are pi jumps across masked nodes
    assert np.max(np.abs(np.angle(np.exp(1j * (vals - vals[0])) ** 2))) < 1e-10


def test_vortex_is_detected_and_rejected():
    g = Grid.cube(2, 64, 16.0)
    wf = _vortex(g, 1.5, 1, Constants())
    ph = unwrap_phase(wf)
    assert ph.nonintegrability == pytest.approx(1.0, abs=0.01)
    with pytest.raises(PhaseNotSingleValued):
        reconstruct(decompose(wf), ph)


def test_reference_must_be_on_mask(grid1d):
    wf = harmonic_eigenstate(grid1d, 1, 1.0)
    with pytest.raises(ValidationError):
        unwrap_phase(wf, reference=(grid1d.index_of([0.0])[0],))


def test_born_boltzmann_and_curl_vanish_for_potential_flow():
    g = Grid.cube(2, 64, 24.0)
    wf = gaussian_packet(g, 0.0, [1.0, -0.5], 1.3)
    f = decompose(wf)
    assert born_boltzmann_gap(f) < 1e-12
    assert curl_defect(f) < 1e-10


def test_continuity_vanishes_for_stationary_and_plane_wave(grid1d, wave):
    pot = Potential.harmonic(grid1d, 1.0, Constants())
    traj = evolve_exact(harmonic_eigenstate(grid1d, 1, 1.0), pot, 1e-3, 40, 4)
    assert continuity_residual(traj) < 1e-8
    traj = evolve(wave, Potential.free(wave.grid), 1e-3, 10, 1)
    assert continuity_residual(traj) < 1e-10
    assert len(snapshot_fields(traj)) == len(traj)


def test_continuity_converges_at_second_order():
    g = Grid.cube(1, 512, 40.0)
    wf = gaussian_packet(g, 0.0, 1.0, 1.0)
    r = [continuity_residual(evolve(wf, Potential.free(g), dt, int(round(0.5 / dt)), 1)) for dt in (2e-3, 1e-3)]
    assert r[0] / r[1] == pytest.approx(4.0, rel=0.1)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.9, 1.8), st.floats(0, 2 * np.pi))
def test_roundtrip_property(x0, p0, sigma, theta):
    g = Grid.cube(1, 256, 40.0)
    wf = gaussian_packet(g, x0, p0, sigma)
    wf = WaveField(wf.psi * np.exp(1j * theta), g, wf.constants)
    f = decompose(wf)
    assert roundtrip_error(wf, reconstruct(f, unwrap_phase(wf)), f.mask) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(0.25, 4.0))
def test_entropy_shift_under_psi0_rescaling(l):
    g = Grid.cube(1, 256, 20.0)
    wf = harmonic_eigenstate(g, 0, 1.0)
    a = decompose(wf).S
    b = decompose(WaveField(wf.psi, g, Constants(l=l))).S
    m = np.isfinite(a)
    np.testing.assert_allclose(b[m] - a[m], 0.5 * np.log(l), atol=1e-12)
