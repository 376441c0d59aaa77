"""Connected correlators, susceptibilities and projection norms."""

import numpy as np
import pytest

import ottocycle as oc
from ottocycle.correlators import CorrelatorBundle
from ottocycle.models import Charge
from ottocycle.tba import gge_point

from conftest import ising_cov_oracle, ising_sus_oracle


def _bundle(model, grid, beta, mu=0.0, kernels=None):
    if kernels is None:
        kernels = oc.build_kernels(model, grid, need_dchi=True)
    pt = gge_point(model, grid, beta, mu, kernels)
    return CorrelatorBundle(model, pt, kernels), pt


# ---------------------------------------------------------------------------
# Ising closed forms
# ---------------------------------------------------------------------------

def test_ising_infinite_temperature_closed_forms(ising_grid):
    # <H^2>_c = 1 + h^2 and <H d_h H>_c = h per site at infinite temperature
    for h in (0.5, 1.0, 1.7):
        model = oc.IsingModel(h)
        kernels = oc.build_kernels(model, ising_grid, need_dchi=True)
        bundle, _ = _bundle(model, ising_grid, 0.0, kernels=kernels)
        cov = bundle.covariance()
        sus = bundle.susceptibility()
        assert cov[0, 0] == pytest.approx(1.0 + h * h, rel=1e-10)
        assert sus[0, 0] == pytest.approx(h, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("beta,h", [(0.8, 0.6), (-1.2, 1.1), (2.0, 0.9)])
def test_ising_correlators_match_quadrature(beta, h, ising_grid):
    model = oc.IsingModel(h)
    bundle, _ = _bundle(model, ising_grid, beta)
    assert bundle.covariance()[0, 0] == pytest.approx(
        ising_cov_oracle(beta, h), rel=1e-8)
    assert bundle.susceptibility()[0, 0] == pytest.approx(
        ising_sus_oracle(beta, h), rel=1e-8, abs=1e-10)


# ---------------------------------------------------------------------------
# finite-difference consistency (both models)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("beta,mu", [(0.7, 0.3), (-0.9, 0.5)])
def test_xxz_covariance_is_minus_dbeta_charge(beta, mu, xxz_model, xxz_grid,
                                              xxz_kernels):
    bundle, _ = _bundle(xxz_model, xxz_grid, beta, mu, xxz_kernels)
    cov = bundle.covariance()
    d = 1e-5
    hi = gge_point(xxz_model, xxz_grid, beta + d, mu, xxz_kernels)
    lo = gge_point(xxz_model, xxz_grid, beta - d, mu, xxz_kernels)
    fd_u = -(hi.u - lo.u) / (2 * d)
    fd_n = -((1 - hi.m) / 2 - (1 - lo.m) / 2) / (2 * d)
    assert cov[0, 0] == pytest.approx(fd_u, rel=1e-5)
    assert cov[1, 0] == pytest.approx(fd_n, rel=1e-5)
    # symmetry and positive semidefiniteness at real temperature
    assert cov[0, 1] == pytest.approx(cov[1, 0], rel=1e-10)
    assert np.all(np.linalg.eigvalsh(cov) > -1e-12)


def test_xxz_susceptibility_is_minus_dbeta_drive(xxz_model, xxz_grid,
                                                 xxz_kernels):
    # <Q_i d_chi Q_j>_c = -d_beta <d_chi Q_j> along the beta direction
    beta, mu, d = 0.8, 0.2, 1e-5
    bundle, _ = _bundle(xxz_model, xxz_grid, beta, mu, xxz_kernels)
    sus = bundle.susceptibility()

    def dchi_energy_expect(b):
        pt = gge_point(xxz_model, xxz_grid, b, mu, xxz_kernels)
        bun = CorrelatorBundle(xxz_model, pt, xxz_kernels)
        return bun.dcharge_expectation(Charge.ENERGY)

    fd = -(dchi_energy_expect(beta + d) - dchi_energy_expect(beta - d)) / (2 * d)
    assert sus[0, 0] == pytest.approx(fd, rel=1e-5)


def test_hellmann_feynman_vs_free_energy(xxz_model, xxz_grid, xxz_kernels):
    # d_chi u at fixed (beta, mu) = <d_chi H> - beta <H d_chi H>_c
    beta, mu, d = 1.0, 0.3, 1e-5
    bundle, _ = _bundle(xxz_model, xxz_grid, beta, mu, xxz_kernels)
    expect = (bundle.dcharge_expectation(Charge.ENERGY)
              - beta * bundle.susceptibility()[0, 0])
    up = oc.XXZModel(xxz_model.delta + d, n_strings=xxz_model.n_strings)
    dn = oc.XXZModel(xxz_model.delta - d, n_strings=xxz_model.n_strings)
    fd = (gge_point(up, xxz_grid, beta, mu).u
          - gge_point(dn, xxz_grid, beta, mu).u) / (2 * d)
    assert expect == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# projection norms
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("beta", [-2.0, -0.5, 0.5, 2.0])
def test_projection_defect_nonnegative(beta, xxz_model, xxz_grid, xxz_kernels):
    # the mode-resolved projection never extracts less fluctuation than the
    # thermal-charge projection (Bessel's inequality in the weighted space)
    bundle, _ = _bundle(xxz_model, xxz_grid, beta, 0.4, xxz_kernels)
    p_pth = bundle.projection_norm(Charge.ENERGY)
    p_th = bundle.thermal_projection_norm(Charge.ENERGY)
    assert p_pth - p_th >= -1e-10
    assert p_th >= -1e-12


def test_ising_projections_coincide(ising_grid):
    # one conserved mode function per rapidity and zero force: the Ising
    # drive is exactly captured by the energy projection only when the
    # dispersions align; both norms must still satisfy the ordering
    model = oc.IsingModel(0.8)
    bundle, _ = _bundle(model, ising_grid, 1.0)
    p_pth = bundle.projection_norm(Charge.ENERGY)
    p_th = bundle.thermal_projection_norm(Charge.ENERGY)
    assert p_pth >= p_th - 1e-12
    assert p_th > 0


def test_effective_force_odd_and_zero_for_free(xxz_model, xxz_grid,
                                               xxz_kernels, ising_grid):
    from ottocycle.correlators import effective_force
    from ottocycle.tba import Dresser

    pt = gge_point(xxz_model, xxz_grid, 1.0, 0.3, xxz_kernels)
    dresser = Dresser(xxz_model, xxz_grid, pt.filling, xxz_kernels)
    force = effective_force(xxz_model, pt.filling, xxz_kernels, dresser)
    # parity: F(-lambda) = -F(lambda) on the symmetric grid
    assert np.max(np.abs(force + force[:, ::-1])) < 1e-10

    ising = oc.IsingModel(0.7)
    kern = oc.build_kernels(ising, ising_grid, need_dchi=True)
    ipt = gge_point(ising, ising_grid, 1.0, 0.0, kern)
    idr = Dresser(ising, ising_grid, ipt.filling, kern)
    iforce = effective_force(ising, ipt.filling, kern, idr)
    assert np.all(iforce == 0.0)


def test_dressing_identity_free_model(ising_grid):
    # with a vanishing kernel, dressing is the identity
    from ottocycle.tba import Dresser
    model = oc.IsingModel(1.1)
    kern = oc.build_kernels(model, ising_grid, need_dchi=True)
    pt = gge_point(model, ising_grid, 0.7, 0.0, kern)
    dresser = Dresser(model, ising_grid, pt.filling, kern)
    vec = np.sin(ising_grid.midpoints)[None, :]
    assert np.allclose(dresser.dress(vec), vec, atol=1e-13)
