import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhydro.errors import ValidationError
from qhydro.exactsol import ViscousStateSpec, construct_viscous_state, mode_profile
from qhydro.fields import Constants, Grid, Mask, gradient, masked_rms
from qhydro.hydrodiag import (
    boltzmann_time,
    entropy_density,
    entropy_field,
    entropy_rate,
    eta_over_s,
    euler_residual,
    euler_residual_series,
    fit_viscosity,
    ns_residual,
    ns_residual_instant,
    stress_tensor_check,
    viscous_force_gap,
)
from qhydro.madelung import decompose
from qhydro.schrodinger import (
    Potential,
    WaveField,
    evolve,
    evolve_exact,
    gaussian_packet,
    harmonic_eigenstate,
    plane_wave,
    superpose,
)

L2D = 4 * np.pi


@pytest.fixture(scope="module")
def viscous():
    g = Grid.cube(2, 128, L2D)
    S = mode_profile(g, [{"amplitude": 0.1, "k": [1, 0]}])
    return construct_viscous_state(ViscousStateSpec(S, g, 0.05))


@pytest.fixture(scope="module")
def wave_traj():
    g = Grid.cube(1, 64, 2 * np.pi * 10)
    return evolve(plane_wave(g, 1.0, amplitude=1.0), Potential.free(g), 1e-3, 20, 1)


@pytest.fixture(scope="module")
def ground_traj():
    g = Grid.cube(1, 256, 20.0)
    pot = Potential.harmonic(g, 1.0, Constants())
    return evolve_exact(harmonic_eigenstate(g, 0, 1.0), pot, 1e-4, 62832, 314)


# --- Euler and Navier-Stokes residuals --------------------------------------

def test_plane_wave_residuals_vanish(wave_traj):
    assert euler_residual(wave_traj) < 1e-10
    assert ns_residual(wave_traj, 0.0) < 1e-10


def test_stationary_residual_below_threshold(ground_traj):
    assert euler_residual(ground_traj) < 1e-8


def test_euler_residual_is_second_order_in_dt():
    g = Grid.cube(1, 512, 40.0)
    wf = gaussian_packet(g, 0.0, 1.0, 1.0)
    r = [euler_residual(evolve(wf, Potential.free(g), dt, int(round(1 / dt)), 1)) for dt in (1e-3, 5e-4)]
    assert r[0] / r[1] == pytest.approx(4.0, rel=0.1)
    assert r[0] < 1e-5


def test_dropping_the_quantum_force_leaves_a_large_residual():
    g = Grid.cube(1, 512, 40.0)
    traj = evolve(gaussian_packet(g, 0.0, 1.0, 1.0), Potential.free(g), 1e-3, 200, 10)
    full = euler_residual_series(traj)[1]
    classical = euler_residual_series(traj, include_quantum=False)[1]
    assert np.all(classical > 1e3 * full)


def test_fitted_viscosity_does_not_worsen_the_residual():
    # Gaussians keep v linear (lap v = 0); a node-free n=0/n=2 mixture does not
    g = Grid.cube(1, 256, 20.0)
    pot = Potential.harmonic(g, 1.0, Constants())
    wf = superpose([harmonic_eigenstate(g, 0, 1.0), harmonic_eigenstate(g, 2, 1.0)], [0.9, 0.3])
    traj = evolve_exact(wf, pot, 0.05, 20, 1)
    fit = fit_viscosity([decompose(traj.snapshot(i)) for i in range(len(traj))], weight="flat", node_guard=0.0)
    assert not fit.degenerate
    no_u = euler_residual_series(traj, include_quantum=False)[1]
    assert ns_residual(traj, fit.eta, reduce="rms") <= np.sqrt(np.mean(no_u ** 2))


def test_unknown_model_and_reduction_are_rejected(wave_traj):
    with pytest.raises(ValidationError):
        ns_residual(wave_traj, 0.1, model="bogus")
    with pytest.raises(ValidationError):
        euler_residual(wave_traj, reduce="median")


# --- viscosity fit ----------------------------------------------------------

def test_plane_wave_fit_is_degenerate(wave_traj):
    fit = fit_viscosity(decompose(wave_traj.snapshot(0)))
    assert fit.degenerate and fit.eta == 0.0


@pytest.mark.parametrize("n", [0, 1, 2, 6, 10])
def test_eigenstate_fits_are_degenerate(n):
    g = Grid.cube(1, 256, 20.0)
    fit = fit_viscosity(decompose(harmonic_eigenstate(g, n, 1.0)))
    assert fit.degenerate and fit.eta == 0.0


def test_constructed_state_viscosity_is_recovered(viscous):
    f = decompose(viscous.wavefunction)
    for weight in ("density", "flat"):
        fit = fit_viscosity(f, weight=weight)
        assert fit.eta == pytest.approx(0.05, rel=1e-2)
        assert fit.residual_ratio < 1e-6
        assert not fit.degenerate and not fit.negative
    assert fit.C3 == pytest.approx(viscous.spec.eta_in / np.mean(f.rho), rel=1e-2)


def test_uniform_model_recovers_its_own_construction():
    g = Grid.cube(2, 64, L2D)
    S = mode_profile(g, [{"amplitude": 0.1, "k": [1, 1]}])
    st_ = construct_viscous_state(ViscousStateSpec(S, g, 0.03, model="uniform"))
    fit = fit_viscosity(decompose(st_.wavefunction), model="uniform")
    assert fit.eta == pytest.approx(0.03, rel=1e-2)


def test_snapshot_pooling_matches_single_snapshot(viscous):
    f = decompose(viscous.wavefunction)
    assert fit_viscosity([f, f]).eta == pytest.approx(fit_viscosity(f).eta, rel=1e-12)
    with pytest.raises(ValidationError):
        fit_viscosity([])
    with pytest.raises(ValidationError):
        fit_viscosity(f, weight="cubic")


def test_instant_viscous_residual_on_constructed_state(viscous):
    f = decompose(viscous.wavefunction)
    force = masked_rms(f.grad_U / f.constants.mass, f.mask)
    assert ns_residual_instant(f, 0.05) / force < 1e-6
    assert ns_residual_instant(f, 0.1) / force > 0.5


def test_degeneracy_tracks_vanishing_laplacian_of_v(viscous):
    g = Grid.cube(1, 256, 20.0)
    pot = Potential.harmonic(g, 1.0, Constants())
    mixed = superpose([harmonic_eigenstate(g, 0, 1.0), harmonic_eigenstate(g, 2, 1.0)], [0.9, 0.3])
    states = [harmonic_eigenstate(g, 3, 1.0), gaussian_packet(g, 0.0, 1.5, 1.0),
              evolve_exact(mixed, pot, 0.5, 1, 1).snapshot(1), viscous.wavefunction]
    flags = []
    for wf in states:
        f = decompose(wf)
        lap_v_zero = masked_rms(f.laplacian_v, f.mask) < 1e-6
        assert fit_viscosity(f).degenerate == lap_v_zero
        flags.append(lap_v_zero)
    assert flags == [True, True, False, False]


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 0.2), st.floats(0.02, 0.15))
def test_fit_is_exact_on_the_constructed_family(eta_in, amp):
    g = Grid.cube(2, 64, L2D)
    S = mode_profile(g, [{"amplitude": amp, "k": [1, 0]}, {"amplitude": amp / 2, "k": [0, 1]}])
    fit = fit_viscosity(decompose(construct_viscous_state(ViscousStateSpec(S, g, eta_in)).wavefunction))
    assert fit.eta == pytest.approx(eta_in, rel=1e-6)
    assert fit.residual_ratio < 1e-6


# --- stress tensor ----------------------------------------------------------

def test_potential_flow_stress_reduction():
    g = Grid.cube(2, 32, 2 * np.pi)
    X, Y = g.mesh
    v = gradient(np.sin(X + 2 * Y), g)
    assert stress_tensor_check(v, 1.0, 0.0, grid=g) < 1e-10
    assert viscous_force_gap(v, g, 0.7, 0.3, Mask.full(g)) < 1e-10
    assert stress_tensor_check(np.zeros((2,) + g.shape), grid=g) == 0.0


def test_shear_flow_breaks_the_reduction():
    g = Grid.cube(2, 32, 2 * np.pi)
    X, Y = g.mesh
    shear = np.stack([np.sin(Y), np.zeros_like(Y)])
    assert stress_tensor_check(shear, 1.0, 0.0, grid=g) > 0.1
    with pytest.raises(ValidationError):
        stress_tensor_check(shear)


def test_jet_stress_reduction_on_states(viscous):
    assert stress_tensor_check(decompose(viscous.wavefunction)) < 1e-10
    g = Grid.cube(2, 96, 32.0)
    assert stress_tensor_check(decompose(gaussian_packet(g, 0.0, [1.0, 0.5], 1.5)), 0.3, 0.1) < 1e-10


# --- entropy, eta/s, entropy rate, Boltzmann time ---------------------------

def test_uniform_state_has_zero_entropy():
    g = Grid.cube(2, 16, 4.0)
    f = decompose(plane_wave(g, 0.0, amplitude=1.0))
    assert np.all(entropy_field(f) == 0.0)
    with pytest.raises(ValidationError):
        entropy_field(f, "bogus")


def test_ground_state_entropy_closed_form():
    g = Grid.cube(1, 256, 20.0)
    # |psi0|^2 = 1/l equal to the peak density gives S = -x^2/2
    c = Constants(l=np.sqrt(np.pi))
    th = entropy_density(decompose(WaveField(harmonic_eigenstate(g, 0, 1.0, c).psi, g, c)))
    # continuum value -<x^2> = -1/2, minus the tail beyond the node mask
    x = g.axes[0]
    dens = np.pi ** -0.5 * np.exp(-x ** 2)
    on = dens >= 1e-6 * dens.max()
    assert th.s_total == pytest.approx(-np.sum(x[on] ** 2 * dens[on]) * g.spacing[0], abs=1e-10)
    assert th.s_total == pytest.approx(-0.5, abs=1e-5)


def test_psi0_rescaling_shifts_total_entropy():
    g = Grid.cube(1, 256, 20.0)
    wf = harmonic_eigenstate(g, 0, 1.0)
    a = entropy_density(decompose(WaveField(wf.psi, g, Constants(l=1.0)))).s_total
    b = entropy_density(decompose(WaveField(wf.psi, g, Constants(l=0.25)))).s_total
    assert b - a == pytest.approx(-2 * np.log(2), abs=1e-6)


def test_eta_over_s_constructive(viscous):
    f = decompose(viscous.wavefunction)
    fit = fit_viscosity(f)
    th = entropy_density(f)
    r = eta_over_s(fit, th, 1.0, 1.0)
    assert r.defined
    assert r.value == pytest.approx(0.05 / (abs(th.s_total) / f.grid.volume), rel=1e-2)
    assert r.kss_ratio == pytest.approx(r.value * 4 * np.pi)
    assert th.to_dict()["eta_over_s"] == r.value


def test_eta_over_s_undefined_for_degenerate_fit(wave_traj):
    f = decompose(wave_traj.snapshot(0))
    r = eta_over_s(fit_viscosity(f), entropy_density(f), 1.0, 1.0)
    assert not r.defined and np.isnan(r.value)


def test_entropy_rate_stationary_and_plane_wave(ground_traj, wave_traj):
    er = entropy_rate(ground_traj)
    assert er.dsdt_norm < 1e-8
    assert np.max(er.heat_rhs_gap) < 1e-6
    assert entropy_rate(ground_traj, weight="fiducial").dsdt_norm < 1e-8
    pw = entropy_rate(wave_traj)
    assert pw.dsdt_norm < 1e-10 and pw.heat_rhs_norm < 1e-10


def test_entropy_sloshes_with_oscillator_period():
    g = Grid.cube(1, 128, 16.0)
    pot = Potential.harmonic(g, 1.0, Constants())
    wf = superpose([harmonic_eigenstate(g, 0, 1.0), harmonic_eigenstate(g, 1, 1.0)], [0.8, 0.6])
    n = 64
    traj = evolve_exact(wf, pot, 2 * np.pi / n, 2 * n, 1)
    er = entropy_rate(traj)
    assert er.dsdt_norm > 1e-3
    np.testing.assert_allclose(er.dsdt[n:], er.dsdt[: len(er.dsdt) - n], rtol=1e-6, atol=1e-9)


def test_boltzmann_time_uniform_and_hbar_scaling():
    g = Grid.cube(1, 16, 4.0)
    bt = boltzmann_time(plane_wave(g, 0.0, amplitude=1.0))
    assert bt.amplitude == pytest.approx(1.0) and bt.tau_B == pytest.approx(1.0)
    half = boltzmann_time(plane_wave(g, 0.0, Constants(hbar=0.5), amplitude=1.0))
    assert half.tau_B == pytest.approx(0.5)


def test_boltzmann_time_gaussian_rms():
    g = Grid.cube(1, 256, 20.0)
    l = 2.0
    c = Constants(l=l)
    x = g.axes[0]
    dens = np.pi ** -0.5 * np.exp(-x ** 2)
    on = dens >= 1e-6 * dens.max()
    A_rms = np.sqrt(np.mean(dens[on] * l))
    bt = boltzmann_time(harmonic_eigenstate(g, 0, 1.0, c))
    assert bt.amplitude == pytest.approx(A_rms, rel=1e-6)
    assert bt.tau_B == pytest.approx(1.0 / A_rms, rel=1e-6)
