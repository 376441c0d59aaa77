"""Static correlators on a thermal/GGE state: charge covariances,
susceptibilities, Hellmann-Feynman expectations, hydrodynamic projections
and the effective force driving interacting adiabatic evolution.

All quantities are per-site densities.  The central objects are

    C_ij  = <Q_i Q_j>_c / L        (covariance)
    A_ij  = <Q_i dchi(Q_j)>_c / L  (susceptibility)

together with the dressed response functions

    f      = -dchi(p)   + dchi(Theta) * [theta (dlam p)^dr]
    Lam_i  = -dchi(q_i) + dchi(Theta) * [theta (dlam q_i)^dr]

from which the effective force F_eff = f^dr / (dlam p)^dr and the projected
quadratic forms <dchi(H)| P |dchi(H)> are built.  For a non-interacting
model the scattering terms vanish identically and everything reduces to
bare Fermi-Dirac integrals.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError, SingularForceError
from .grids import FillingState
from .models import Charge, KernelSet, build_kernels
from .tba import Dresser, ThermalPoint, root_density

TWO_PI = 2.0 * math.pi

# Dressed momentum derivatives smaller than this trip the singular-force guard.
_FORCE_DENOM_TOL = 1e-10


def _per_string(fn, mids, lengths):
    return np.array([fn(mids, a) for a in lengths])


def effective_force(model, filling: FillingState,
                    kernels: KernelSet | None = None,
                    dresser: Dresser | None = None,
                    rho_total: np.ndarray | None = None) -> np.ndarray:
    """F_eff(lambda) on the grid midpoints, shape (S, N).

    Vanishes identically for non-interacting models.  `rho_total` may be
    passed to avoid recomputing the dressed momentum derivative.
    """
    grid = filling.grid
    if not model.interacting:
        return np.zeros((len(model.strings), grid.n_cells))
    if kernels is None or kernels.dchi is None:
        kernels = build_kernels(model, grid, need_dchi=True)
    if dresser is None:
        dresser = Dresser(model, grid, filling, kernels)
    mids = grid.midpoints
    lengths = model.strings.lengths
    if rho_total is None:
        dp = _per_string(model.dlam_momentum, mids, lengths)
        dp_dr = dresser.dress(dp)
    else:
        dp_dr = TWO_PI * np.asarray(rho_total, dtype=float)
    dchi_p = _per_string(model.dchi_momentum, mids, lengths)
    f_flat = -dchi_p.reshape(-1) + kernels.dchi @ (filling.flat * dp_dr.reshape(-1))
    f_dr = dresser.dress_flat(f_flat).reshape(dp_dr.shape)
    bad = np.abs(dp_dr) < _FORCE_DENOM_TOL
    if np.any(bad):
        lam = mids[np.argmax(bad.any(axis=0))]
        raise SingularForceError(
            "dressed momentum derivative vanished on the grid", rapidity=float(lam))
    return f_dr / dp_dr


class CorrelatorBundle:
    """All dressed correlator data for one solved thermal point.

    Builds the dressed charge functions once and exposes covariance /
    susceptibility matrices over the model's thermal charges, plus the
    projected quadratic forms used by the infinitesimal-cycle analysis.
    """

    def __init__(self, model, point: ThermalPoint,
                 kernels: KernelSet | None = None):
        grid = point.filling.grid
        if model.interacting and (kernels is None or kernels.dchi is None):
            kernels = build_kernels(model, grid, need_dchi=True)
        self.model = model
        self.point = point
        self.kernels = kernels
        self.grid = grid
        self.charges = tuple(model.thermal_charges)

        filling = point.filling
        dresser = point.dresser
        if dresser is None:
            dresser = Dresser(model, grid, filling, kernels)
        if point.rho is None:
            point.rho = root_density(model, filling, kernels, dresser)
        self.dresser = dresser

        mids = grid.midpoints
        lengths = model.strings.lengths
        th = filling.values
        rho = point.rho.rho
        self.dp_dr = TWO_PI * point.rho.rho_total
        # quadrature weight of the connected-correlator inner product
        self.weight = rho * (1.0 - th) * grid.widths[None, :]

        self.q = {}
        self.q_dr = {}
        self.dlam_q = {}
        self.dlam_q_dr = {}
        self.dchi_q = {}
        for ch in self.charges:
            self.q[ch] = _per_string(lambda x, a, c=ch: model.charge_value(c, x, a),
                                     mids, lengths)
            self.q_dr[ch] = dresser.dress(self.q[ch])
            self.dlam_q[ch] = _per_string(
                lambda x, a, c=ch: model.dlam_charge(c, x, a), mids, lengths)
            self.dlam_q_dr[ch] = dresser.dress(self.dlam_q[ch])
            self.dchi_q[ch] = _per_string(
                lambda x, a, c=ch: model.dchi_charge(c, x, a), mids, lengths)

        if model.interacting:
            g = kernels.dchi
            dchi_p = _per_string(model.dchi_momentum, mids, lengths)
            self.f = (-dchi_p.reshape(-1)
                      + g @ (filling.flat * self.dp_dr.reshape(-1))).reshape(th.shape)
            self.f_dr = dresser.dress(self.f)
            self.lam_resp = {}
            self.lam_resp_dr = {}
            for ch in self.charges:
                lam_ch = (-self.dchi_q[ch].reshape(-1)
                          + g @ (filling.flat * self.dlam_q_dr[ch].reshape(-1)))
                self.lam_resp[ch] = lam_ch.reshape(th.shape)
                self.lam_resp_dr[ch] = dresser.dress(self.lam_resp[ch])
        else:
            self.f = np.zeros_like(th)
            self.f_dr = np.zeros_like(th)
            self.lam_resp = {ch: -self.dchi_q[ch] for ch in self.charges}
            self.lam_resp_dr = {ch: -self.dchi_q[ch] for ch in self.charges}

    # -- inner products ------------------------------------------------------

    def _dot(self, left: np.ndarray, right: np.ndarray) -> float:
        return float(np.sum(left * self.weight * right))

    def covariance(self) -> np.ndarray:
        """Matrix C_ij over the thermal charges."""
        k = len(self.charges)
        out = np.empty((k, k))
        for i, ci in enumerate(self.charges):
            for j in range(i, k):
                out[i, j] = out[j, i] = self._dot(self.q_dr[ci],
                                                  self.q_dr[self.charges[j]])
        return out

    def charge_cross(self, ci: Charge, cj: Charge) -> float:
        """<Q_i Q_j>_c / L for an arbitrary charge pair."""
        return self._dot(self.q_dr[ci], self.q_dr[cj])

    def projection_vector(self, charge: Charge) -> np.ndarray:
        """v_j = f^dr (dlam q_j)^dr / (dlam p)^dr - Lam_j^dr, shape (S, N)."""
        if np.any(np.abs(self.dp_dr) < _FORCE_DENOM_TOL):
            raise SingularForceError("dressed momentum derivative vanished")
        return (self.f_dr * self.dlam_q_dr[charge] / self.dp_dr
                - self.lam_resp_dr[charge])

    def susceptibility(self) -> np.ndarray:
        """Matrix A_ij = <Q_i dchi(Q_j)>_c / L over the thermal charges."""
        k = len(self.charges)
        out = np.empty((k, k))
        vs = {ch: self.projection_vector(ch) for ch in self.charges}
        for i, ci in enumerate(self.charges):
            for j, cj in enumerate(self.charges):
                out[i, j] = self._dot(self.q_dr[ci], vs[cj])
        return out

    def dcharge_expectation(self, charge: Charge) -> float:
        """<dchi(Q_j)> / L via the Hellmann-Feynman integral."""
        grid = self.grid
        rho = self.point.rho.rho
        th = self.point.filling.values
        integrand = (self.dchi_q[charge] * rho
                     + self.dlam_q[charge] * self.f_dr * th / TWO_PI)
        return float(np.sum(integrand * grid.widths[None, :]))

    def projection_norm(self, ci: Charge, cj: Charge | None = None) -> float:
        """<dchi(Q_i)| P |dchi(Q_j)> in the full quasiparticle basis.

        This is the value of the projected quadratic form when every
        conserved mode is retained, i.e. the non-thermalizing bound.
        """
        vi = self.projection_vector(ci)
        vj = vi if (cj is None or cj == ci) else self.projection_vector(cj)
        return self._dot(vi, vj)

    def effective_force(self) -> np.ndarray:
        """F_eff = f^dr / (dlam p)^dr on the grid, shape (S, N)."""
        if not self.model.interacting:
            return np.zeros_like(self.f_dr)
        if np.any(np.abs(self.dp_dr) < _FORCE_DENOM_TOL):
            raise SingularForceError("dressed momentum derivative vanished")
        return self.f_dr / self.dp_dr

    # -- thermal projection --------------------------------------------------

    def thermal_projection_norm(self, charge: Charge = Charge.ENERGY) -> float:
        """<dchi(Q)| P^th |dchi(Q)>: projection onto the thermal charge span.

        Computed as x^T C^{-1} x with x_i = <Q_i dchi(Q)>_c and C the
        thermal-charge covariance; reduces to x^2/C for a single charge.
        """
        cov = self.covariance()
        v = self.projection_vector(charge)
        x = np.array([self._dot(self.q_dr[ci], v) for ci in self.charges])
        try:
            sol = np.linalg.solve(cov, x)
        except np.linalg.LinAlgError as exc:
            raise InvalidArgumentError(
                f"thermal covariance matrix is singular: {exc}") from exc
        return float(x @ sol)
