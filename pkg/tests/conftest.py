"""Shared fixtures and independent quadrature oracles for the test suite.

The Ising oracles evaluate the free-fermion closed forms with adaptive
quadrature, fully independently of the package's grid discretization.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import ottocycle as oc


def ising_energy(k, h):
    return 2.0 * math.sqrt(1.0 + h * h - 2.0 * h * math.cos(k))


def ising_dh_energy(k, h):
    e = ising_energy(k, h)
    return 4.0 * (h - math.cos(k)) / e if e > 0 else 0.0


def fermi(k, beta, h):
    return 1.0 / (1.0 + math.exp(beta * ising_energy(k, h)))


def ising_quad(f, beta, h):
    """(1/2pi) integral of f(k) * (Fermi-Dirac weights) over the zone."""
    val, _ = quad(lambda k: f(k, beta, h), -math.pi, math.pi, limit=400)
    return val / (2.0 * math.pi)


def ising_u_oracle(beta, h):
    return ising_quad(lambda k, b, hh: ising_energy(k, hh) * fermi(k, b, hh),
                      beta, h)


def ising_s_oracle(beta, h):
    def integrand(k, b, hh):
        t = fermi(k, b, hh)
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return -t * math.log(t) - (1.0 - t) * math.log(1.0 - t)
    return ising_quad(integrand, beta, h)


def ising_cov_oracle(beta, h):
    """Energy-energy connected covariance <H^2>_c per site."""
    def integrand(k, b, hh):
        t = fermi(k, b, hh)
        return ising_energy(k, hh) ** 2 * t * (1.0 - t)
    return ising_quad(integrand, beta, h)


def ising_sus_oracle(beta, h):
    """<H d_h H>_c per site."""
    def integrand(k, b, hh):
        t = fermi(k, b, hh)
        return ising_energy(k, hh) * ising_dh_energy(k, hh) * t * (1.0 - t)
    return ising_quad(integrand, beta, h)


@pytest.fixture(scope="session")
def ising_grid():
    return oc.make_grid(256, oc.IsingModel(1.0).domain)


@pytest.fixture(scope="session")
def xxz_model():
    return oc.XXZModel(2.0, n_strings=8)


@pytest.fixture(scope="session")
def xxz_grid(xxz_model):
    return oc.make_grid(64, xxz_model.domain)


@pytest.fixture(scope="session")
def xxz_kernels(xxz_model, xxz_grid):
    return oc.build_kernels(xxz_model, xxz_grid, need_dchi=True)


def max_rel(a, b):
    denom = max(abs(np.asarray(b)).max(), 1e-300)
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / denom
