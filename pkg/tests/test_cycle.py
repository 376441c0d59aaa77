"""Otto cycles: bookkeeping, small-cycle identities, skewed efficiencies."""

import math

import numpy as np
import pytest

import ottocycle as oc
from ottocycle.cycle import CycleConfig, isochore, matched_thermal_reference
from ottocycle.tba import gge_point


@pytest.fixture(scope="module")
def ising_cycle():
    model = oc.IsingModel(0.5)
    grid = oc.make_grid(128, model.domain)
    cfg = CycleConfig(chi_lo=0.5, chi_hi=1.5, beta_cold=-1/0.70,
                      beta_hot=-1/0.69, n_steps=20, medium="both",
                      distance_stride=5)
    return model, grid, oc.run_cycle(model, grid, cfg)


# ---------------------------------------------------------------------------
# bookkeeping
# ---------------------------------------------------------------------------

def test_first_law_closure(ising_cycle):
    _, _, res = ising_cycle
    for med in res.media.values():
        assert med.first_law_defect == pytest.approx(0.0, abs=1e-14)


def test_media_share_bath_corners(ising_cycle):
    _, _, res = ising_cycle
    th, pth = res.media["thermal"], res.media["prethermal"]
    for corner in ("A", "C"):
        assert th.corners[corner]["u"] == pth.corners[corner]["u"]
        assert th.corners[corner]["beta"] == pth.corners[corner]["beta"]


def test_negative_temperature_ordering(ising_cycle):
    _, _, res = ising_cycle
    th, pth = res.media["thermal"], res.media["prethermal"]
    assert th.is_engine and pth.is_engine
    assert pth.eta > th.eta


def test_non_engine_gives_nan_eta():
    model = oc.IsingModel(1.0)
    grid = oc.make_grid(64, model.domain)
    # positive-temperature cycle driven the wrong way around: W < 0
    cfg = CycleConfig(chi_lo=1.0, chi_hi=2.0, beta_cold=1/0.30,
                      beta_hot=1/0.48, n_steps=10, medium="thermal")
    res = oc.run_cycle(model, grid, cfg)
    med = res.media["thermal"]
    assert not med.is_engine
    assert math.isnan(med.eta)


def test_cycle_config_validation():
    with pytest.raises(oc.InvalidArgumentError):
        CycleConfig(chi_lo=1.0, chi_hi=1.0, beta_cold=1.0, beta_hot=2.0)
    with pytest.raises(oc.InvalidArgumentError):
        CycleConfig(chi_lo=1.0, chi_hi=2.0, beta_cold=1.0, beta_hot=2.0,
                    medium="neither")


def test_cycle_result_serializable(ising_cycle):
    import json
    _, _, res = ising_cycle
    doc = json.dumps(res.to_dict())
    assert "prethermal" in doc and "eta" in doc


# ---------------------------------------------------------------------------
# isochores and matched references
# ---------------------------------------------------------------------------

def test_isochore_of_thermal_state_absorbs_nothing():
    model = oc.IsingModel(0.8)
    grid = oc.make_grid(128, model.domain)
    pt = oc.thermal_state(model, grid, 1.3)
    new, q = isochore(model, 0.8, 1.3, None, pt.u, grid)
    assert q == pytest.approx(0.0, abs=1e-10)
    assert new.u == pytest.approx(pt.u, abs=1e-10)


def test_isochore_heat_is_energy_difference():
    model = oc.IsingModel(0.8)
    grid = oc.make_grid(128, model.domain)
    incoming = -0.9
    new, q = isochore(model, 0.8, 0.7, None, incoming, grid)
    assert q == pytest.approx(new.u - incoming, abs=1e-14)


def test_matched_thermal_reference_round_trip_ising():
    model = oc.IsingModel(0.9)
    grid = oc.make_grid(128, model.domain)
    pt = oc.thermal_state(model, grid, 1.7)
    ref = matched_thermal_reference(model, grid, pt.u)
    assert ref.beta == pytest.approx(1.7, abs=1e-8)


def test_matched_thermal_reference_round_trip_xxz(xxz_model, xxz_grid,
                                                  xxz_kernels):
    pt = oc.thermal_state(xxz_model, xxz_grid, -1.4, 0.45, kernels=xxz_kernels)
    ref = matched_thermal_reference(xxz_model, xxz_grid, pt.u, 0.45,
                                    kernels=xxz_kernels, guess=(-1.0, pt.mu))
    assert ref.beta == pytest.approx(-1.4, abs=1e-6)
    assert ref.m == pytest.approx(0.45, abs=1e-8)


def test_matched_thermal_reference_unreachable():
    model = oc.IsingModel(0.9)
    grid = oc.make_grid(64, model.domain)
    # u above the infinite-temperature value is reachable only at beta < 0;
    # u beyond the band maximum is not reachable at all
    with pytest.raises(oc.ConvergenceError):
        matched_thermal_reference(model, grid, 10.0)


# ---------------------------------------------------------------------------
# small-cycle identities
# ---------------------------------------------------------------------------

def test_half_gap_relations_second_order():
    model = oc.IsingModel(1.2)
    grid = oc.make_grid(128, model.domain)
    pt = oc.thermal_state(model, grid, -1.5)

    reps = [oc.half_gap_relations(model, grid, pt, dchi, -0.05 * dchi / 0.04,
                                  n_steps=24)
            for dchi in (0.04, 0.02)]
    # defects of W1/W2/Q_abs against the half-gap prediction vanish at
    # second order, so halving the cycle size shrinks them ~4x
    for i in range(3):
        d0, d1 = abs(reps[0].defects[i]), abs(reps[1].defects[i])
        assert d0 / max(d1, 1e-18) > 2.5, i
    # measured efficiency ratio approaches the closed-form prediction
    assert reps[1].ratio_measured == pytest.approx(reps[1].ratio_predicted,
                                                   rel=0.05)


def test_work_gap_sign_theorem_spot_checks(xxz_model, xxz_grid, xxz_kernels):
    ising = oc.IsingModel(0.8)
    igrid = oc.make_grid(128, ising.domain)
    ikern = oc.build_kernels(ising, igrid, need_dchi=True)
    for beta in (-2.0, -0.5, 0.5, 2.0):
        ipt = gge_point(ising, igrid, beta, 0.0, ikern)
        gap = oc.infinitesimal_work_gap(ising, ipt, 1e-3, kernels=ikern)
        assert gap * beta <= 1e-15
        xpt = oc.thermal_state(xxz_model, xxz_grid, beta, 0.45,
                               kernels=xxz_kernels)
        xgap = oc.infinitesimal_work_gap(xxz_model, xpt, 1e-3,
                                         kernels=xxz_kernels)
        assert xgap * beta <= 1e-15


# ---------------------------------------------------------------------------
# skewed efficiencies and scans
# ---------------------------------------------------------------------------

def test_skewed_ratio_structure(xxz_model, xxz_grid, xxz_kernels):
    for beta in (-1.0, 1.0):
        pt = oc.thermal_state(xxz_model, xxz_grid, beta, 0.45,
                              kernels=xxz_kernels)
        rep = oc.skewed_efficiencies(xxz_model, pt, 1e-3, 0.1,
                                     kernels=xxz_kernels)
        assert rep.eta_th > 0
        # prethermal wins at negative temperature, loses at positive
        assert (rep.ratio - 1.0) * beta < 0


def test_skewed_ratio_at_infinite_temperature():
    model = oc.IsingModel(1.1)
    grid = oc.make_grid(128, model.domain)
    kern = oc.build_kernels(model, grid, need_dchi=True)
    pt = gge_point(model, grid, 0.0, 0.0, kern)
    rep = oc.skewed_efficiencies(model, pt, 1e-3, 0.1, kernels=kern)
    assert rep.ratio == pytest.approx(1.0, abs=1e-9)


def test_grid_scan_ordering_and_failures():
    model = oc.IsingModel(1.0)
    betas, chis = [-1.0, 1.0], [0.8, 1.2]
    rep = oc.grid_scan(model, 64, betas, chis, 1e-3, 0.1)
    assert len(rep.points) == 4
    # row-major ordering over betas x chis
    assert [(p.beta, p.chi) for p in rep.points] == [
        (-1.0, 0.8), (-1.0, 1.2), (1.0, 0.8), (1.0, 1.2)]
    rows = list(rep.csv_rows())
    assert rows[0][0] == "beta"
    assert all(r[-1] in ("ok", "eta_zero", "failed") for r in rows[1:])


def test_grid_scan_parallel_matches_serial():
    model = oc.IsingModel(1.0)
    betas, chis = [-0.8, 0.9], [0.9, 1.3]
    serial = oc.grid_scan(model, 64, betas, chis, 1e-3, 0.1, workers=1)
    parallel = oc.grid_scan(model, 64, betas, chis, 1e-3, 0.1, workers=2)
    for a, b in zip(serial.points, parallel.points):
        assert a.beta == b.beta and a.chi == b.chi
        assert a.ratio == pytest.approx(b.ratio, rel=1e-12)
