"""Model descriptors: bare dispersions, momenta, scattering data and their
control-parameter derivatives for the transverse-field Ising chain and the
easy-axis XXZ chain (J = -1).

Conventions
-----------
* The scattering phase Theta_{j,k} carries its 1/(2pi) normalization, so the
  kernel phi = d_lambda Theta convolves with a plain integral (no extra 2pi):
  this combination is fixed by the infinite-temperature entropy sum rule.
* XXZ momenta use the continuous arctan branch with p_j(+-pi/2) = +-pi,
  extended periodically (p_j(lambda + pi) = p_j(lambda) + 2 pi).
* The regime Delta < -1 is reached through the spectrum-preserving map
  (J, Delta) -> (-J, -Delta), which flips the sign of the energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError
from .grids import RapidityGrid, StringSpectrum

ISING_DOMAIN = (-math.pi, math.pi)
XXZ_DOMAIN = (-math.pi / 2, math.pi / 2)

# Gauss-Legendre rule used for cell integrals of the smooth dchi-Theta kernel.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


class Charge(Enum):
    ENERGY = "energy"
    MAGNON = "magnon"


@dataclass(frozen=True)
class IsingModel:
    """Transverse-field Ising chain as free fermions on [-pi, pi].

    Control parameter is the field h.  Single quasiparticle species,
    p(lambda) = lambda, vanishing scattering kernel.
    """

    h: float

    name = "ising"
    interacting = False
    domain = ISING_DOMAIN
    strings = StringSpectrum((1,))

    @property
    def chi(self) -> float:
        return self.h

    def with_chi(self, chi: float) -> "IsingModel":
        return IsingModel(float(chi))

    @property
    def thermal_charges(self):
        return (Charge.ENERGY,)

    # -- single-particle data ------------------------------------------------

    def momentum(self, lam, a=1):
        return np.asarray(lam, dtype=float)

    def dlam_momentum(self, lam, a=1):
        return np.ones_like(np.asarray(lam, dtype=float))

    def dchi_momentum(self, lam, a=1):
        return np.zeros_like(np.asarray(lam, dtype=float))

    def energy(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        return 2.0 * np.sqrt(1.0 + self.h**2 - 2.0 * self.h * np.cos(lam))

    def dlam_energy(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        e = self.energy(lam)
        return np.divide(4.0 * self.h * np.sin(lam), e,
                         out=np.zeros_like(e), where=e > 0)

    def dchi_energy(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        e = self.energy(lam)
        return np.divide(4.0 * (self.h - np.cos(lam)), e,
                         out=np.zeros_like(e), where=e > 0)

    def theta(self, lam, a=1, b=1):
        return np.zeros_like(np.asarray(lam, dtype=float))

    def dchi_theta(self, lam, a=1, b=1):
        return np.zeros_like(np.asarray(lam, dtype=float))

    # -- charge eigenvalues --------------------------------------------------

    def charge_value(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.energy(lam, a)
        raise InvalidArgumentError(f"Ising does not expose charge {charge}")

    def dlam_charge(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.dlam_energy(lam, a)
        raise InvalidArgumentError(f"Ising does not expose charge {charge}")

    def dchi_charge(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.dchi_energy(lam, a)
        raise InvalidArgumentError(f"Ising does not expose charge {charge}")


def _branch_index(lam):
    """Winding index k such that lam - k*pi lies in [-pi/2, pi/2)."""
    return np.floor(np.asarray(lam, dtype=float) / math.pi + 0.5)


@dataclass(frozen=True)
class XXZModel:
    """Easy-axis XXZ chain at J = -1, |Delta| > 1, truncated Bethe strings.

    Control parameter is the anisotropy Delta; theta = arccosh|Delta|.
    """

    delta: float
    n_strings: int = 10

    name = "xxz"
    interacting = True
    domain = XXZ_DOMAIN

    def __post_init__(self):
        if abs(self.delta) <= 1.0:
            raise InvalidArgumentError(
                f"easy-plane |Delta| <= 1 is out of scope, got Delta={self.delta}"
            )
        if self.n_strings < 1:
            raise InvalidArgumentError("n_strings must be >= 1")

    @property
    def chi(self) -> float:
        return self.delta

    def with_chi(self, chi: float) -> "XXZModel":
        return XXZModel(float(chi), self.n_strings)

    @property
    def strings(self) -> StringSpectrum:
        return StringSpectrum(tuple(range(1, self.n_strings + 1)))

    @property
    def thermal_charges(self):
        return (Charge.ENERGY, Charge.MAGNON)

    @property
    def theta_angle(self) -> float:
        return math.acosh(abs(self.delta))

    @property
    def _branch_sign(self) -> float:
        # dDelta''/dDelta for the (J,Delta)->(-J,-Delta) map, Delta'' = |Delta|
        return 1.0 if self.delta > 0 else -1.0

    # -- momenta -------------------------------------------------------------

    def _c(self, a) -> float:
        return 1.0 / math.tanh(0.5 * a * self.theta_angle)

    def momentum(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        k = _branch_index(lam)
        t = np.tan(lam - k * math.pi)
        return 2.0 * np.arctan(self._c(a) * t) + 2.0 * math.pi * k

    def dlam_momentum(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        t = np.tan(lam - _branch_index(lam) * math.pi)
        c = self._c(a)
        return 2.0 * c * (1.0 + t * t) / (1.0 + c * c * t * t)

    def _d2lam_momentum(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        t = np.tan(lam - _branch_index(lam) * math.pi)
        c = self._c(a)
        den = 1.0 + c * c * t * t
        return 4.0 * c * t * (1.0 + t * t) * (1.0 - c * c) / (den * den)

    def _dtheta_c(self, a) -> float:
        c = self._c(a)
        return 0.5 * a * (1.0 - c * c)

    def _dtheta_momentum(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        t = np.tan(lam - _branch_index(lam) * math.pi)
        c = self._c(a)
        return self._dtheta_c(a) * 2.0 * t / (1.0 + c * c * t * t)

    def _dtheta_dlam_momentum(self, lam, a=1):
        lam = np.asarray(lam, dtype=float)
        t = np.tan(lam - _branch_index(lam) * math.pi)
        c = self._c(a)
        den = 1.0 + c * c * t * t
        return self._dtheta_c(a) * 2.0 * (1.0 + t * t) * (1.0 - c * c * t * t) / (den * den)

    def dchi_momentum(self, lam, a=1):
        # d/dDelta = (1/sinh theta) d/dtheta, times the branch map sign
        s = self._branch_sign / math.sinh(self.theta_angle)
        return s * self._dtheta_momentum(lam, a)

    # -- energies ------------------------------------------------------------

    @property
    def _energy_sign(self) -> float:
        # J = -1, Delta > 1: e_j = -(1/2) sinh(theta) p_j'; the Delta < -1
        # branch flips the spectrum sign.
        return 1.0 if self.delta > 0 else -1.0

    def energy(self, lam, a=1):
        th = self.theta_angle
        return -0.5 * self._energy_sign * math.sinh(th) * self.dlam_momentum(lam, a)

    def dlam_energy(self, lam, a=1):
        th = self.theta_angle
        return -0.5 * self._energy_sign * math.sinh(th) * self._d2lam_momentum(lam, a)

    def dchi_energy(self, lam, a=1):
        # e = s_e * e_std(|Delta|); dDelta e = s_e*s_d * dDelta'' e_std = dDelta'' e_std
        th = self.theta_angle
        sh, ch = math.sinh(th), math.cosh(th)
        return -0.5 * ((ch / sh) * self.dlam_momentum(lam, a)
                       + self._dtheta_dlam_momentum(lam, a))

    # -- scattering ----------------------------------------------------------

    def _phase_terms(self, a, b):
        """(length, coefficient) pairs entering Theta_{a,b}."""
        lo, hi, mn = abs(a - b), a + b, min(a, b)
        terms = []
        if lo > 0:
            terms.append((lo, 1.0))
        terms.append((hi, 1.0))
        for ell in range(1, mn):
            terms.append((lo + 2 * ell, 2.0))
        return terms

    def theta(self, lam, a=1, b=1):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for length, coeff in self._phase_terms(a, b):
            out += coeff * self.momentum(lam, length)
        return out / (2.0 * math.pi)

    def dchi_theta(self, lam, a=1, b=1):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for length, coeff in self._phase_terms(a, b):
            out += coeff * self.dchi_momentum(lam, length)
        return out / (2.0 * math.pi)

    def kernel(self, lam, a=1, b=1):
        """phi_{a,b} = d_lambda Theta_{a,b}."""
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for length, coeff in self._phase_terms(a, b):
            out += coeff * self.dlam_momentum(lam, length)
        return out / (2.0 * math.pi)

    # -- charge eigenvalues --------------------------------------------------

    def charge_value(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.energy(lam, a)
        if charge is Charge.MAGNON:
            return float(a) * np.ones_like(np.asarray(lam, dtype=float))
        raise InvalidArgumentError(f"unknown charge {charge}")

    def dlam_charge(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.dlam_energy(lam, a)
        if charge is Charge.MAGNON:
            return np.zeros_like(np.asarray(lam, dtype=float))
        raise InvalidArgumentError(f"unknown charge {charge}")

    def dchi_charge(self, charge: Charge, lam, a=1):
        if charge is Charge.ENERGY:
            return self.dchi_energy(lam, a)
        if charge is Charge.MAGNON:
            return np.zeros_like(np.asarray(lam, dtype=float))
        raise InvalidArgumentError(f"unknown charge {charge}")


def cell_kernel_matrix(model, grid: RapidityGrid) -> np.ndarray:
    """Cell-integrated scattering kernel on the flattened (string, cell) index.

    Entry [(a,n), (b,m)] = int over cell m of phi_{a,b}(mid_n - lambda'),
    evaluated exactly through the antiderivative Theta.  The matrix is
    block-Toeplitz; only 2N distinct phase values per string pair are needed.
    """
    n = grid.n_cells
    w = grid.period / n
    lengths = model.strings.lengths
    s = len(lengths)
    if not model.interacting:
        return np.zeros((s * n, s * n))

    # Theta at mid_n - node_m = (d + 1/2) w for d = n - m in [-n, n-1]
    ds = np.arange(-n, n)
    xs = (ds + 0.5) * w
    idx = np.arange(n)
    dmat = idx[:, None] - idx[None, :]          # n - m_cell
    pos_hi = dmat + n                           # index of d = n - m
    pos_lo = dmat - 1 + n                       # index of d = n - m - 1

    out = np.empty((s, n, s, n))
    theta_cache = {}
    for ia, a in enumerate(lengths):
        for ib, b in enumerate(lengths):
            key = (min(a, b), max(a, b))
            if key not in theta_cache:
                theta_cache[key] = model.theta(xs, a, b)
            tv = theta_cache[key]
            out[ia, :, ib, :] = tv[pos_hi] - tv[pos_lo]
    return out.reshape(s * n, s * n)


def dchi_kernel_matrix(model, grid: RapidityGrid) -> np.ndarray:
    """Cell-integrated d_chi Theta kernel (Gauss-Legendre per cell).

    Entry [(a,n), (b,m)] = int over cell m of dchi_Theta_{a,b}(mid_n - lambda').
    """
    n = grid.n_cells
    w = grid.period / n
    lengths = model.strings.lengths
    s = len(lengths)
    if not model.interacting:
        return np.zeros((s * n, s * n))

    ds = np.arange(-(n - 1), n)
    idx = np.arange(n)
    dmat = idx[:, None] - idx[None, :] + (n - 1)    # index of d = n - m
    out = np.empty((s, n, s, n))
    cache = {}
    for ia, a in enumerate(lengths):
        for ib, b in enumerate(lengths):
            key = (min(a, b), max(a, b))
            if key not in cache:
                acc = np.zeros(ds.size)
                for xi, wg in zip(_GL_NODES, _GL_WEIGHTS):
                    args = (ds - 0.5 * xi) * w
                    acc += (0.5 * w * wg) * model.dchi_theta(args, a, b)
                cache[key] = acc
            out[ia, :, ib, :] = cache[key][dmat]
    return out.reshape(s * n, s * n)


@dataclass
class KernelSet:
    """Precomputed kernel matrices for one (model, grid) pair."""

    conv: np.ndarray | None
    dchi: np.ndarray | None


def build_kernels(model, grid: RapidityGrid, need_dchi: bool = True) -> KernelSet:
    if not model.interacting:
        return KernelSet(None, None)
    conv = cell_kernel_matrix(model, grid)
    dchi = dchi_kernel_matrix(model, grid) if need_dchi else None
    return KernelSet(conv, dchi)
