"""Acceptance suite: one test per criterion, each printing a pass/fail line."""
import filecmp
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from qhydro import exactsol, foliation, hydrodiag, madelung
from qhydro import schrodinger as sc
from qhydro.errors import PhaseNotSingleValued
from qhydro.fields import Constants, Grid

SINGLE_MODE = [{"amplitude": 0.1, "k": [1, 0]}]
THREE_MODES = [{"amplitude": 0.1, "k": [1, 0]}, {"amplitude": 0.08, "k": [0, 1], "phase": 0.3}, {"amplitude": 0.05, "k": [1, 1]}]
BOX = 4 * np.pi


def viscous(n, modes, c=None, eta_in=None, factor=None, seed=None):
    g = Grid.cube(2, n, BOX)
    c = c or Constants()
    if seed is not None:
        S, _ = exactsol.random_profile(g, 4, 0.3, 2, seed)
    else:
        S = exactsol.mode_profile(g, modes)
    if factor is not None:
        spec = exactsol.spec_from_factor(S, g, factor, c)
    else:
        spec = exactsol.ViscousStateSpec(S, g, eta_in, c)
    return exactsol.construct_viscous_state(spec)


def free_packet_euler(dt):
    g = Grid.cube(1, 512, 40.0)
    wf = sc.gaussian_packet(g, 0.0, 1.0, 1.0)
    traj = sc.evolve(wf, sc.Potential.free(g), dt, int(round(1.0 / dt)), stride=1)
    return hydrodiag.euler_residual(traj)


def test_criterion_01_euler_identity(verdict):
    t0 = time.perf_counter()
    r1 = free_packet_euler(1e-3)
    runtime = time.perf_counter() - t0
    r2 = free_packet_euler(5e-4)
    ratio = r1 / r2
    ok = r1 <= 1e-5 and abs(ratio - 4.0) <= 0.4 and runtime < 30.0
    verdict(1, ok, f"euler={r1:.3e} ratio(dt/2)={ratio:.3f} runtime={runtime:.1f}s")
    assert ok


def test_criterion_02_quantum_potential(verdict):
    t0 = time.perf_counter()
    g = Grid.cube(1, 256, 20.0)
    wf = sc.harmonic_eigenstate(g, 0, 1.0)
    f = madelung.decompose(wf)
    V = sc.Potential.harmonic(g, 1.0, Constants()).values
    m = f.mask.active
    gap = float(np.max(np.abs(f.U[m] + V[m] - 0.5)))
    forms = madelung.quantum_potential(f, tolerance=np.inf).max_relative_discrepancy
    runtime = time.perf_counter() - t0
    ok = gap < 1e-8 and forms < 1e-8 and runtime < 5.0
    verdict(2, ok, f"max|U+V-0.5|={gap:.2e} forms={forms:.2e} runtime={runtime:.2f}s")
    assert ok


def test_criterion_03_constructive_oracle(verdict):
    t0 = time.perf_counter()
    rows, ok = [], True
    for eta_in in (0.02, 0.05, 0.1):
        built = viscous(128, SINGLE_MODE, eta_in=eta_in)
        fit = hydrodiag.fit_viscosity(madelung.decompose(built.wavefunction))
        comp = exactsol.verify_compensation(built.wavefunction, eta_in)
        rel = abs(fit.eta - eta_in) / eta_in
        ok &= (not fit.degenerate) and rel < 0.01 and fit.residual_ratio < 1e-6 and comp.worst < 1e-6
        rows.append(f"{eta_in}: rel={rel:.1e} resid={fit.residual_ratio:.1e} comp={comp.worst:.1e}")
    runtime = time.perf_counter() - t0
    ok &= runtime < 60.0
    verdict(3, ok, "; ".join(rows) + f" runtime={runtime:.1f}s")
    assert ok


def test_criterion_04_hbar_scaling(verdict):
    hbars = [0.5, 1.0, 2.0, 5.0]
    etas = []
    for h in hbars:
        built = viscous(64, SINGLE_MODE, c=Constants(hbar=h), factor=0.05)
        etas.append(hydrodiag.fit_viscosity(madelung.decompose(built.wavefunction)).eta)
    slope = stats.linregress(np.log(hbars), np.log(etas)).slope
    ok = abs(slope - 1.0) <= 0.05
    verdict(4, ok, f"log-log slope={slope:.6f} over hbar={hbars}")
    assert ok


def test_criterion_05_stationary_states(verdict):
    t0 = time.perf_counter()
    g = Grid.cube(1, 256, 20.0)
    pot = sc.Potential.harmonic(g, 1.0, Constants())
    rows, ok = [], True
    for n in (0, 1, 2):
        wf = sc.harmonic_eigenstate(g, n, 1.0)
        traj = sc.evolve(wf, pot, 1e-4, int(round(2 * np.pi / 1e-4)), stride=100)
        dsdt = hydrodiag.entropy_rate(traj).dsdt_norm
        rho = np.abs(traj.psi) ** 2
        drift = float(np.max(np.abs(rho - rho[0])))
        fit = hydrodiag.fit_viscosity(madelung.decompose(traj.snapshot(len(traj) - 1)))
        eta_ok = fit.degenerate or abs(fit.eta) < 1e-6
        ok &= dsdt < 1e-8 and drift < 1e-8 and eta_ok
        rows.append(f"n={n}: dsdt={dsdt:.1e} drift={drift:.1e} degenerate={fit.degenerate}")
    runtime = time.perf_counter() - t0
    ok &= runtime < 60.0
    verdict(5, ok, "; ".join(rows) + f" runtime={runtime:.1f}s")
    assert ok


def _kss_scaled(built, c):
    f = madelung.decompose(built.wavefunction)
    r = hydrodiag.eta_over_s(hydrodiag.fit_viscosity(f), hydrodiag.entropy_density(f), c.hbar, c.k_B)
    return r.value * c.k_B / c.hbar


def test_criterion_06_eta_over_s_order(verdict):
    suite = {"single": dict(n=64, modes=SINGLE_MODE), "three": dict(n=128, modes=THREE_MODES), "random": dict(n=64, modes=None, seed=7)}
    rows, ok = [], True
    for name, kw in suite.items():
        vals = []
        for h in (1.0, 2.0):
            c = Constants(hbar=h)
            vals.append(_kss_scaled(viscous(c=c, factor=0.05, **kw), c))
        change = abs(vals[1] - vals[0]) / abs(vals[0])
        ok &= all(1e-2 <= v <= 1e2 for v in vals) and change <= 0.10
        rows.append(f"{name}: {vals[0]:.3g} -> {vals[1]:.3g} (change {change:.1e})")
    verdict(6, ok, "; ".join(rows))
    assert ok


def test_criterion_07_orthogonality(verdict):
    g = Grid.cube(1, 512, 32.0)
    hbars = [4.0, 2.0, 1.0, 0.5]
    fields = [madelung.decompose(sc.coherent_state(g, 1.0, 1.0, 1.0, Constants(hbar=h))) for h in hbars]
    scan = foliation.semiclassical_scan(fields, hbars)
    g1 = Grid.cube(1, 256, 20.0)
    stationary = [sc.harmonic_eigenstate(g1, n, 1.0) for n in (0, 1, 2)]
    g2 = Grid.cube(2, 64, 20.0)
    stationary.append(sc.harmonic_eigenstate(g2, [1, 0], 1.0))
    g_stat = max(foliation.orthogonality_field(madelung.decompose(s)).g_max for s in stationary)
    ok_scan = scan.strictly_decreasing and scan.slope > 0
    ok = ok_scan and g_stat < 1e-10
    norms = ", ".join(f"{v:.3g}" for v in scan.norms)
    verdict(7, ok, f"coherent g_max(hbar={scan.hbar.tolist()})=[{norms}] slope={scan.slope:.3f} "
                   f"decreasing_as_hbar_shrinks={scan.strictly_decreasing} stationary g={g_stat:.1e}")
    assert ok


def _suite_states():
    g1 = Grid.cube(1, 256, 20.0)
    states = {f"harmonic n={n}": sc.harmonic_eigenstate(g1, n, 1.0) for n in (0, 1, 2)}
    states["free packet"] = sc.gaussian_packet(Grid.cube(1, 512, 40.0), 0.0, 1.0, 1.0)
    states["coherent"] = sc.coherent_state(Grid.cube(1, 512, 32.0), 1.0, 1.0, 1.0)
    states["plane wave"] = sc.plane_wave(Grid.cube(1, 64, 20 * np.pi), 1.0)
    states["2D packet"] = sc.gaussian_packet(Grid.cube(2, 96, 32.0), 0.0, [1.0, 0.5], 1.5)
    states["viscous three-mode"] = viscous(128, THREE_MODES, eta_in=0.05).wavefunction
    states["viscous random"] = viscous(64, None, eta_in=0.05, seed=7).wavefunction
    return states


def test_criterion_08_stress_reduction(verdict):
    gaps = {k: hydrodiag.stress_tensor_check(madelung.decompose(wf), 1.0, 0.0) for k, wf in _suite_states().items()}
    g = Grid.cube(2, 32, 2 * np.pi)
    _, Y = g.mesh
    shear = np.stack([np.sin(Y), np.zeros_like(Y)])
    counter = hydrodiag.stress_tensor_check(shear, 1.0, 0.0, grid=g)
    worst = max(gaps.values())
    ok = worst < 1e-10 and 0.1 <= counter <= 10.0
    verdict(8, ok, f"irrotational worst gap={worst:.1e} over {len(gaps)} states; shear counter-case gap={counter:.3f}")
    assert ok


def test_criterion_09_roundtrip(verdict):
    errors, ok = {}, True
    for name, wf in _suite_states().items():
        f = madelung.decompose(wf)
        phase = madelung.unwrap_phase(wf)
        if phase.nonintegrability >= 1e-8:
            ok = False
            errors[name] = float("nan")
            continue
        errors[name] = madelung.roundtrip_error(wf, madelung.reconstruct(f, phase), f.mask)
    worst = max(errors.values())
    ok &= worst < 1e-10
    g = Grid.cube(2, 64, 16.0)
    X, Y = g.mesh
    vortex = sc.WaveField((X + 1j * Y) * np.exp(-(X ** 2 + Y ** 2) / 9.0), g)
    fv = madelung.decompose(vortex)
    pv = madelung.unwrap_phase(vortex)
    try:
        madelung.reconstruct(fv, pv)
        rejected = False
    except PhaseNotSingleValued:
        rejected = True
    ok &= rejected
    verdict(9, ok, f"worst roundtrip={worst:.1e} over {len(errors)} states; vortex nonintegrability="
                   f"{pv.nonintegrability:.3f} rejected={rejected}")
    assert ok


def _run_all(out: Path) -> tuple[int, float, str]:
    env = dict(os.environ)
    env.pop("QHYDRO_OUTPUT_ROOT", None)
    t0 = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "qhydro", "run", "--all", "--check", "--out", str(out)],
                       capture_output=True, text=True, env=env)
    return r.returncode, time.perf_counter() - t0, r.stdout + r.stderr


def _differing(a: Path, b: Path) -> list[str]:
    bad = []
    for fa in sorted(a.rglob("*")):
        if fa.is_dir() or fa.name == "timing.json":
            continue
        fb = b / fa.relative_to(a)
        if not fb.exists() or not filecmp.cmp(fa, fb, shallow=False):
            bad.append(str(fa.relative_to(a)))
    return bad


def test_criterion_10_determinism(verdict, tmp_path):
    rc1, t1, log1 = _run_all(tmp_path / "first")
    rc2, t2, log2 = _run_all(tmp_path / "second")
    reports = sorted((tmp_path / "first").rglob("report.json"))
    diff = _differing(tmp_path / "first", tmp_path / "second")
    ok = rc1 == 0 and rc2 == 0 and not diff and len(reports) > 0 and t1 + t2 < 300.0
    verdict(10, ok, f"exit codes {rc1},{rc2}; {len(reports)} report files; differing files={diff[:3]}; "
                    f"wall time {t1:.1f}s + {t2:.1f}s")
    assert ok, log1 + log2
