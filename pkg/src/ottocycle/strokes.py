"""Adiabatic strokes: slow driving of the control parameter chi for the two
working-medium scenarios.

* Thermalizing medium: the state stays thermal (GGE over the thermal charge
  set) at every instant; the Lagrange multipliers obey the flow

      C(chi) d(beta_vec)/dchi = -A(chi) beta_vec,

  integrated with classical RK4.  The flow conserves the entropy density and,
  when a magnon charge is present, the magnetization.

* Non-thermalizing (prethermal) medium: every quasiparticle mode is
  conserved; the filling obeys the convective equation
  d_chi theta + F_eff d_lam theta = 0, integrated by a second-order
  method of characteristics on staggered integer/half-integer chi slices.
  For a non-interacting model F_eff = 0 and the filling is exactly frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FlowSingularityError, InvalidArgumentError, StrokeFailureError
from .grids import (FillingState, RapidityGrid, interpolate_filling,
                    interpolate_periodic)
from .models import Charge, KernelSet, build_kernels
from .tba import (
    Dresser,
    ThermalPoint,
    charge_expectation,
    gge_point,
    root_density,
    yang_yang_entropy,
)
from .correlators import CorrelatorBundle, effective_force

DEFAULT_STEP_COUNT = 400


class _KernelCache:
    """Keeps the most recently used kernel matrices, keyed by chi.

    RK4 stages and staggered characteristics revisit the same chi values
    (mid/endpoints); a tiny cache avoids rebuilding the Toeplitz blocks.
    """

    def __init__(self, base_model, grid: RapidityGrid, need_dchi: bool, cap: int = 4):
        self.base = base_model
        self.grid = grid
        self.need_dchi = need_dchi
        self.cap = cap
        self._store: dict[float, tuple] = {}

    def at(self, chi: float):
        key = float(chi)
        hit = self._store.pop(key, None)
        if hit is None:
            model = self.base.with_chi(key)
            hit = (model, build_kernels(model, self.grid, self.need_dchi))
        self._store[key] = hit
        while len(self._store) > self.cap:
            self._store.pop(next(iter(self._store)))
        return hit


@dataclass
class StrokeTrajectory:
    """Per-step observables along one stroke; arrays share the chi axis."""

    kind: str
    chis: np.ndarray
    u: np.ndarray
    m: np.ndarray
    s: np.ndarray
    multipliers: np.ndarray | None = None   # thermal strokes: (n+1, k) beta_vec
    fillings: list = field(default_factory=list, repr=False)
    filling_chis: list = field(default_factory=list)
    final_filling: FillingState | None = field(default=None, repr=False)
    final_point: ThermalPoint | None = field(default=None, repr=False)


def _step_count(chi_start: float, chi_end: float, n_steps: int | None) -> int:
    if n_steps is None:
        n_steps = DEFAULT_STEP_COUNT
    if n_steps < 1:
        raise InvalidArgumentError(f"n_steps must be >= 1, got {n_steps}")
    if chi_end == chi_start:
        raise InvalidArgumentError("stroke endpoints coincide")
    return int(n_steps)


def work_along(trajectory: StrokeTrajectory) -> float:
    """Per-site work density extracted over a stroke.

    Positive when the medium does work on the driving agent; equals the drop
    of the energy density between the first and last recorded slices, which
    for a slow drive coincides with -integral d_chi <d_chi H>.
    """
    if trajectory.u.size < 2:
        raise InvalidArgumentError("trajectory needs at least two records")
    return float(trajectory.u[0] - trajectory.u[-1])


# ---------------------------------------------------------------------------
# thermalizing medium
# ---------------------------------------------------------------------------

def thermal_stroke(model, grid: RapidityGrid, start: ThermalPoint,
                   chi_end: float, n_steps: int | None = None) -> StrokeTrajectory:
    """Drive chi from the model's value to chi_end with an always-thermal state.

    `start` must be a solved thermal point of `model` (same grid).  Returns
    the trajectory of (chi, u, m, s) and the final thermal point.
    """
    chi0 = model.chi
    n = _step_count(chi0, chi_end, n_steps)
    dchi = (chi_end - chi0) / n
    with_mu = Charge.MAGNON in model.thermal_charges
    y = np.array([start.beta, start.mu] if with_mu else [start.beta])

    cache = _KernelCache(model, grid, need_dchi=True)
    warm = {"eps": start.eps}

    def solve_point(chi, yv):
        mdl, kernels = cache.at(chi)
        beta = float(yv[0])
        mu = float(yv[1]) if with_mu else 0.0
        pt = gge_point(mdl, grid, beta, mu, kernels, initial_eps=warm["eps"])
        warm["eps"] = pt.eps
        return mdl, kernels, pt

    def rhs(chi, yv):
        mdl, kernels, pt = solve_point(chi, yv)
        bundle = CorrelatorBundle(mdl, pt, kernels)
        cov = bundle.covariance()
        sus = bundle.susceptibility()
        try:
            dy = np.linalg.solve(cov, -sus @ yv)
        except np.linalg.LinAlgError as exc:
            raise FlowSingularityError(
                f"covariance matrix singular at chi={chi:.6g}: {exc}") from exc
        return dy, pt

    chis = np.empty(n + 1)
    us = np.empty(n + 1)
    ms = np.empty(n + 1)
    ss = np.empty(n + 1)
    mults = np.empty((n + 1, y.size))

    chi = chi0
    for i in range(n):
        k1, pt = rhs(chi, y)
        chis[i], us[i], ms[i], ss[i] = chi, pt.u, pt.m, pt.s
        mults[i] = y
        try:
            k2, _ = rhs(chi + 0.5 * dchi, y + 0.5 * dchi * k1)
            k3, _ = rhs(chi + 0.5 * dchi, y + 0.5 * dchi * k2)
            k4, _ = rhs(chi + dchi, y + dchi * k3)
        except FlowSingularityError:
            raise
        except Exception as exc:
            raise StrokeFailureError(
                f"thermal stroke failed at step {i}: {exc}", step=i) from exc
        y = y + (dchi / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        chi += dchi

    mdl, kernels, final = solve_point(chi_end, y)
    chis[n], us[n], ms[n], ss[n] = chi_end, final.u, final.m, final.s
    mults[n] = y
    return StrokeTrajectory("thermal", chis, us, ms, ss, multipliers=mults,
                            final_filling=final.filling, final_point=final)


# ---------------------------------------------------------------------------
# prethermal medium
# ---------------------------------------------------------------------------

def _advect(filling: FillingState, dchi: float, force: np.ndarray,
            departure_iters: int = 2) -> FillingState:
    """Semi-Lagrangian step theta_new(lambda) = theta(lambda_dep).

    The departure point solves lambda_dep = lambda - dchi * F(midpoint of the
    characteristic); a couple of fixed-point sweeps on
    s = dchi * F(lambda - s/2) keep the step second-order accurate.
    """
    grid = filling.grid
    mids = grid.midpoints
    new_vals = np.empty_like(filling.values)
    for i in range(len(filling.strings)):
        s = dchi * force[i]
        for _ in range(departure_iters):
            s = dchi * interpolate_periodic(grid, force[i], mids - 0.5 * s)
        new_vals[i] = interpolate_filling(filling, i, mids - s)
    return filling.with_values(new_vals)


def _force_and_dresser(model, kernels: KernelSet, filling: FillingState):
    """Effective force plus the dressing operator used to compute it."""
    dresser = Dresser(model, filling.grid, filling, kernels)
    force = effective_force(model, filling, kernels, dresser)
    return force, dresser


def ghd_stroke(model, grid: RapidityGrid, start: FillingState,
               chi_end: float, n_steps: int | None = None,
               bootstrap_substeps: int = 100,
               record_stride: int = 0) -> StrokeTrajectory:
    """Drive chi from the model's value to chi_end conserving every mode.

    Second-order characteristics: the filling is tracked on integer chi
    slices theta_n and half-integer slices theta'_n; each uses the force
    evaluated from the other at the midpoint of its own step.  theta'_0 is
    bootstrapped with `bootstrap_substeps` first-order substeps.
    `record_stride` > 0 stores intermediate fillings every that many steps.
    """
    chi0 = model.chi
    n = _step_count(chi0, chi_end, n_steps)
    dchi = (chi_end - chi0) / n
    if start.grid != grid:
        raise InvalidArgumentError("starting filling lives on a different grid")

    chis = chi0 + dchi * np.arange(n + 1)
    us = np.empty(n + 1)
    ms = np.empty(n + 1)
    ss = np.empty(n + 1)
    fillings: list[FillingState] = []
    filling_chis: list[float] = []

    def record(i, mdl, filling, dresser=None, kernels=None):
        rho = root_density(mdl, filling, kernels, dresser)
        us[i] = charge_expectation(mdl, rho, Charge.ENERGY)
        ms[i] = (charge_expectation(mdl, rho, Charge.MAGNON)
                 if Charge.MAGNON in mdl.thermal_charges else math.nan)
        ss[i] = yang_yang_entropy(mdl, filling, rho_state=rho)
        if record_stride and (i % record_stride == 0 or i == n):
            fillings.append(filling)
            filling_chis.append(float(chis[i]))

    if not model.interacting:
        # zero effective force: the filling is exactly stationary
        theta = start
        for i, chi in enumerate(chis):
            record(i, model.with_chi(float(chi)), theta)
        return StrokeTrajectory("ghd", chis, us, ms, ss, fillings=fillings,
                                filling_chis=filling_chis, final_filling=theta)

    cache = _KernelCache(model, grid, need_dchi=True)

    mdl0, k0 = cache.at(chi0)
    record(0, mdl0, start, kernels=k0)

    # bootstrap the staggered filling theta'_0 ~ theta(chi0 + dchi/2)
    if bootstrap_substeps < 1:
        raise InvalidArgumentError("bootstrap_substeps must be >= 1")
    half = start
    sub = 0.5 * dchi / bootstrap_substeps
    for j in range(bootstrap_substeps):
        mdl, kern = cache.at(chi0 + j * sub)
        force, _ = _force_and_dresser(mdl, kern, half)
        half = _advect(half, sub, force)

    theta = start
    for i in range(n):
        try:
            # integer slice: force at the midpoint, from the staggered filling
            mdl_mid, kern_mid = cache.at(chis[i] + 0.5 * dchi)
            force_mid, _ = _force_and_dresser(mdl_mid, kern_mid, half)
            theta = _advect(theta, dchi, force_mid)
            # staggered slice: force at the next integer chi, from theta
            mdl_int, kern_int = cache.at(chis[i + 1])
            force_int, dresser_int = _force_and_dresser(mdl_int, kern_int, theta)
            record(i + 1, mdl_int, theta, dresser=dresser_int, kernels=kern_int)
            if i + 1 < n:
                half = _advect(half, dchi, force_int)
        except (FlowSingularityError, InvalidArgumentError):
            raise
        except StrokeFailureError:
            raise
        except Exception as exc:
            raise StrokeFailureError(
                f"adiabatic stroke failed at step {i}: {exc}", step=i) from exc

    return StrokeTrajectory("ghd", chis, us, ms, ss, fillings=fillings,
                            filling_chis=filling_chis, final_filling=theta)
