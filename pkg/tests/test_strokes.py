"""Adiabatic strokes: conservation laws, convergence order, reversibility."""

import math

import numpy as np
import pytest
from scipy.integrate import dblquad

import ottocycle as oc
from ottocycle.models import Charge
from ottocycle.strokes import StrokeTrajectory
from ottocycle.tba import charge_expectation, root_density

from conftest import fermi, ising_energy


@pytest.fixture(scope="module")
def xxz_grid96(xxz_model):
    return oc.make_grid(96, xxz_model.domain)


# ---------------------------------------------------------------------------
# work bookkeeping
# ---------------------------------------------------------------------------

def test_work_along_zero_length():
    traj = StrokeTrajectory("thermal", np.array([1.0, 1.0]),
                            np.array([0.3, 0.3]), np.zeros(2), np.zeros(2))
    assert oc.work_along(traj) == 0.0


def test_work_along_needs_two_records():
    traj = StrokeTrajectory("thermal", np.array([1.0]), np.array([0.3]),
                            np.zeros(1), np.zeros(1))
    with pytest.raises(oc.InvalidArgumentError):
        oc.work_along(traj)


def test_ising_frozen_filling_work_oracle(ising_grid):
    # prethermal Ising stroke: the filling is frozen, so the extracted work
    # is minus the double integral of d_h(energy) against the initial
    # occupation, evaluated here by independent adaptive quadrature
    beta, h0, h1 = 1.0, 0.5, 0.6
    model = oc.IsingModel(h0)
    pt = oc.thermal_state(model, ising_grid, beta)
    traj = oc.ghd_stroke(model, ising_grid, pt.filling, h1, 40)
    w = oc.work_along(traj)

    def integrand(k, h):
        e = ising_energy(k, h)
        dh_e = 4.0 * (h - math.cos(k)) / e if e > 0 else 0.0
        return dh_e * fermi(k, beta, h0) / (2.0 * math.pi)

    val, _ = dblquad(integrand, h0, h1, -math.pi, math.pi, epsabs=1e-12)
    assert w == pytest.approx(-val, rel=1e-7, abs=1e-10)


def test_work_endpoint_vs_integral_consistency(xxz_model, xxz_grid):
    # W from the energy drop agrees with the midpoint-rule integral of the
    # instantaneous drive <d_chi H> along the path, to second order in dchi
    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45)

    from ottocycle.correlators import CorrelatorBundle
    from ottocycle.tba import Dresser, ThermalPoint

    def drive(chi, theta):
        mdl = xxz_model.with_chi(chi)
        kern = oc.build_kernels(mdl, xxz_grid, need_dchi=True)
        dresser = Dresser(mdl, xxz_grid, theta, kern)
        rho = root_density(mdl, theta, kern, dresser)
        pt = ThermalPoint(chi, math.nan, math.nan, theta, rho,
                          math.nan, math.nan, math.nan, dresser=dresser)
        return CorrelatorBundle(mdl, pt, kern).dcharge_expectation(Charge.ENERGY)

    def defect(n_steps):
        traj = oc.ghd_stroke(xxz_model, xxz_grid, start.filling, 2.4, n_steps,
                             record_stride=1)
        w = oc.work_along(traj)
        dchi = traj.chis[1] - traj.chis[0]
        # midpoint rule with trajectory endpoints averaged per step
        acc = 0.0
        for i in range(len(traj.fillings) - 1):
            chi_mid = 0.5 * (traj.filling_chis[i] + traj.filling_chis[i + 1])
            theta_mid = traj.fillings[i].with_values(
                0.5 * (traj.fillings[i].values + traj.fillings[i + 1].values))
            acc += dchi * drive(chi_mid, theta_mid)
        return abs(w + acc)

    d2, d4, d8 = defect(2), defect(4), defect(8)
    # second order above the fixed-grid floor, small absolute defect below it
    assert d2 / max(d4, 1e-16) > 3.0
    assert d8 < 1e-5


# ---------------------------------------------------------------------------
# prethermal (mode-conserving) strokes
# ---------------------------------------------------------------------------

def test_ising_prethermal_invariance(ising_grid):
    # non-interacting medium: the filling is exactly stationary
    model = oc.IsingModel(0.5)
    pt = oc.thermal_state(model, ising_grid, 1.0)
    traj = oc.ghd_stroke(model, ising_grid, pt.filling, 1.5, 30)
    assert np.max(np.abs(traj.final_filling.values - pt.filling.values)) < 1e-14


def test_ghd_zero_length_rejected(xxz_model, xxz_grid):
    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45)
    with pytest.raises(oc.InvalidArgumentError):
        oc.ghd_stroke(xxz_model, xxz_grid, start.filling, xxz_model.delta, 10)


def test_ghd_entropy_defect_and_order(xxz_model, xxz_grid96):
    # the continuous flow conserves the entropy density; the discretization
    # leaves an O(dchi^2) step error on top of a small fixed-grid floor,
    # so the order is measured against a step-refined reference
    start = oc.thermal_state(xxz_model, xxz_grid96, -2.0, 0.45)

    def s_end(n):
        return oc.ghd_stroke(xxz_model, xxz_grid96, start.filling, 2.5, n).s[-1]

    ref = s_end(64)
    d8, d16 = abs(s_end(8) - ref), abs(s_end(16) - ref)
    order = math.log2(d8 / d16)
    assert order > 1.8
    assert abs(s_end(32) - start.s) < 1e-6


def test_ghd_per_string_density_conservation(xxz_model, xxz_grid96):
    # the convective flow conserves each string's particle number separately
    start = oc.thermal_state(xxz_model, xxz_grid96, 1.0, 0.45)
    kern0 = oc.build_kernels(xxz_model, xxz_grid96, need_dchi=False)
    rho0 = root_density(xxz_model, start.filling, kern0)
    n0 = np.sum(rho0.rho * xxz_grid96.widths[None, :], axis=1)
    traj = oc.ghd_stroke(xxz_model, xxz_grid96, start.filling, 3.0, 40)
    end_model = xxz_model.with_chi(3.0)
    kern1 = oc.build_kernels(end_model, xxz_grid96, need_dchi=False)
    rho1 = root_density(end_model, traj.final_filling, kern1)
    n1 = np.sum(rho1.rho * xxz_grid96.widths[None, :], axis=1)
    assert np.max(np.abs(n1 - n0)) < 1e-6


def test_ghd_filling_range_preserved(xxz_model, xxz_grid):
    start = oc.thermal_state(xxz_model, xxz_grid, -6.0, 0.45)
    traj = oc.ghd_stroke(xxz_model, xxz_grid, start.filling, 2.6, 30)
    vals = traj.final_filling.values
    assert vals.min() >= 0.0 and vals.max() <= 1.0


def test_ghd_reversibility(xxz_model, xxz_grid, xxz_grid96):
    # the forward/backward round trip is limited by the spatial
    # interpolation; the error must shrink ~w^3 with the cell width
    # (6.5e-7 at N=256, verified offline; kept coarser here for speed)
    def round_trip(grid):
        start = oc.thermal_state(xxz_model, grid, 1.0, 0.45)
        fwd = oc.ghd_stroke(xxz_model, grid, start.filling, 2.5, 30)
        back = oc.ghd_stroke(xxz_model.with_chi(2.5), grid, fwd.final_filling,
                             xxz_model.delta, 30)
        return np.max(np.abs(back.final_filling.values - start.filling.values))

    e64, e96 = round_trip(xxz_grid), round_trip(xxz_grid96)
    assert e96 < 2e-5
    assert e96 < 0.5 * e64


# ---------------------------------------------------------------------------
# thermal strokes
# ---------------------------------------------------------------------------

def test_thermal_stroke_conserves_entropy_and_m(xxz_model, xxz_grid):
    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45)
    traj = oc.thermal_stroke(xxz_model, xxz_grid, start, 2.6, 40)
    assert abs(traj.s[-1] - traj.s[0]) < 1e-8
    assert abs(traj.m[-1] - traj.m[0]) < 1e-8


def test_thermal_stroke_order(xxz_model, xxz_grid):
    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45)

    def ds(n):
        traj = oc.thermal_stroke(xxz_model, xxz_grid, start, 3.0, n)
        return abs(traj.s[-1] - traj.s[0])

    d4, d8 = ds(4), ds(8)
    if d4 > 1e-12:  # above solver noise, the defect must shrink >= 2nd order
        assert math.log2(d4 / max(d8, 1e-16)) > 1.8


def test_thermal_stroke_matches_entropy_matched_resolve(xxz_model, xxz_grid,
                                                        xxz_kernels):
    # independent route: impose entropy and magnetization conservation
    # directly via a 2-d root-find at the final chi
    from scipy.optimize import fsolve
    from ottocycle.tba import gge_point

    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45,
                             kernels=xxz_kernels)
    traj = oc.thermal_stroke(xxz_model, xxz_grid, start, 2.4, 60)
    end_model = xxz_model.with_chi(2.4)
    kern = oc.build_kernels(end_model, xxz_grid, need_dchi=False)

    def resid(x):
        pt = gge_point(end_model, xxz_grid, x[0], x[1], kern)
        return [pt.s - start.s, pt.m - start.m]

    beta_mu = fsolve(resid, [start.beta, start.mu], xtol=1e-12)
    matched = gge_point(end_model, xxz_grid, beta_mu[0], beta_mu[1], kern)
    assert matched.u == pytest.approx(traj.u[-1], abs=1e-6)


def test_thermal_stroke_reversibility(xxz_model, xxz_grid):
    start = oc.thermal_state(xxz_model, xxz_grid, 1.0, 0.45)
    fwd = oc.thermal_stroke(xxz_model, xxz_grid, start, 2.6, 30)
    model_hi = xxz_model.with_chi(2.6)
    back = oc.thermal_stroke(model_hi, xxz_grid, fwd.final_point,
                             xxz_model.delta, 30)
    assert abs(back.final_point.beta - start.beta) < 1e-6
    assert abs(back.final_point.mu - start.mu) < 1e-6


def test_ising_thermal_stroke_entropy(ising_grid):
    model = oc.IsingModel(0.5)
    start = oc.thermal_state(model, ising_grid, 1.0)
    traj = oc.thermal_stroke(model, ising_grid, start, 1.5, 40)
    assert abs(traj.s[-1] - traj.s[0]) < 1e-9
