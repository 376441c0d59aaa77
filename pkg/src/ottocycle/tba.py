"""Thermodynamic Bethe ansatz: pseudoenergies, dressing, root densities,
charge expectations, Yang-Yang entropy and thermal-state construction.

Discretization follows the cell-integrated kernel of `models`; the nonlinear
pseudoenergy equation is solved by Newton-Raphson with an analytic Jacobian
and residual backtracking, warm-startable for continuation along strokes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq
from scipy.special import expit

from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    SolverFailureError,
    UnreachableMagnetizationError,
)
from .grids import FillingState, RapidityGrid, RootDensityState
from .models import Charge, KernelSet, build_kernels

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DrivingTerm:
    """Per-string source term w_a(lambda) of the pseudoenergy equation."""

    values: np.ndarray  # shape (S, N)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def gge_driving(model, grid: RapidityGrid, beta: float, mu: float = 0.0) -> DrivingTerm:
    """Thermal driving w_a = beta * e_a + mu * a on the grid midpoints."""
    mids = grid.midpoints
    rows = [beta * model.energy(mids, a) + mu * a for a in model.strings.lengths]
    values = np.array(rows)
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("driving term is not finite on the grid")
    return DrivingTerm(values)


def _log_term(eps):
    """log(1 + e^{-eps}), overflow-safe."""
    return np.logaddexp(0.0, -eps)


def filling_from_eps(model, grid, eps) -> FillingState:
    return FillingState(grid, model.strings, expit(-eps))


@dataclass
class PseudoenergyState:
    """Solution of the pseudoenergy equation plus derived filling.

    `jacobian_lu` caches the LU factors of (1 + phi * theta) at the solution,
    which is exactly the dressing operator for this state.
    """

    grid: RapidityGrid
    eps: np.ndarray  # (S, N)
    filling: FillingState
    residual: float
    iterations: int
    jacobian_lu: tuple | None = field(default=None, repr=False)


class Dresser:
    """Solves the linear dressing equation tau_dr = tau - phi * (theta tau_dr)
    for a fixed (model, filling) pair, factorizing the system once."""

    def __init__(self, model, grid, filling: FillingState, kernels: KernelSet | None = None,
                 lu: tuple | None = None):
        self.model = model
        self.grid = grid
        self.filling = filling
        if not model.interacting:
            self._lu = None
            return
        if lu is not None:
            self._lu = lu
            return
        if kernels is None:
            kernels = build_kernels(model, grid, need_dchi=False)
        mat = np.eye(kernels.conv.shape[0]) + kernels.conv * filling.flat[None, :]
        try:
            self._lu = lu_factor(mat)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise SolverFailureError(f"singular dressing system: {exc}") from exc

    def dress_flat(self, tau_flat: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.array(tau_flat, dtype=float)
        return lu_solve(self._lu, np.asarray(tau_flat, dtype=float))

    def dress(self, tau: np.ndarray) -> np.ndarray:
        """Dress a (S, N) array, returning the same shape."""
        tau = np.asarray(tau, dtype=float)
        return self.dress_flat(tau.reshape(-1)).reshape(tau.shape)


def dress(model, filling: FillingState, tau, kernels: KernelSet | None = None) -> np.ndarray:
    """One-shot dressing of a per-string function tau (shape (S, N))."""
    return Dresser(model, filling.grid, filling, kernels).dress(tau)


def solve_pseudoenergy(model, grid: RapidityGrid, driving: DrivingTerm,
                       kernels: KernelSet | None = None,
                       initial: np.ndarray | None = None,
                       tol: float = 1e-11, max_iter: int = 80) -> PseudoenergyState:
    """Solve eps = w + phi * log(1 + e^{-eps}) on the grid.

    Newton-Raphson with analytic Jacobian and step halving on residual
    increase; `initial` warm-starts continuation along strokes.
    """
    w = driving.values
    shape = w.shape
    if shape != (len(model.strings), grid.n_cells):
        raise InvalidArgumentError("driving shape does not match model/grid")

    if not model.interacting:
        eps = w.copy()
        return PseudoenergyState(grid, eps, filling_from_eps(model, grid, eps),
                                 0.0, 0, None)

    if kernels is None:
        kernels = build_kernels(model, grid, need_dchi=False)
    m = kernels.conv
    w_flat = w.reshape(-1)
    eps = (w_flat if initial is None else np.asarray(initial, dtype=float).reshape(-1)).copy()

    def residual(e):
        return e - w_flat - m @ _log_term(e)

    r = residual(eps)
    rnorm = np.max(np.abs(r))
    eye = np.eye(eps.size)
    lu = None
    stalls = 0
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            if lu is None:
                lu = lu_factor(eye + m * expit(-eps)[None, :])
            theta = expit(-eps).reshape(shape)
            return PseudoenergyState(grid, eps.reshape(shape),
                                     FillingState(grid, model.strings, theta),
                                     float(rnorm), it - 1, lu)
        jac = eye + m * expit(-eps)[None, :]
        try:
            lu = lu_factor(jac)
            step = lu_solve(lu, r)
        except np.linalg.LinAlgError as exc:
            raise SolverFailureError(f"singular TBA Jacobian: {exc}") from exc
        # backtracking line search on the residual sup norm
        alpha = 1.0
        for _ in range(30):
            trial = eps - alpha * step
            r_new = residual(trial)
            r_new_norm = np.max(np.abs(r_new))
            if np.isfinite(r_new_norm) and r_new_norm < rnorm:
                break
            alpha *= 0.5
        else:
            stalls += 1
            if stalls >= 3:
                raise ConvergenceError(
                    f"pseudoenergy Newton stalled, residual {rnorm:.3e}", rnorm)
            # damped fixed-point rescue step
            trial = 0.7 * eps + 0.3 * (w_flat + m @ _log_term(eps))
            r_new = residual(trial)
            r_new_norm = np.max(np.abs(r_new))
        eps, r, rnorm = trial, r_new, r_new_norm

    if rnorm < tol:
        theta = expit(-eps).reshape(shape)
        return PseudoenergyState(grid, eps.reshape(shape),
                                 FillingState(grid, model.strings, theta),
                                 float(rnorm), max_iter, lu)
    raise ConvergenceError(
        f"pseudoenergy solve did not converge in {max_iter} iterations, "
        f"residual {rnorm:.3e}", rnorm)


def root_density(model, filling: FillingState, kernels: KernelSet | None = None,
                 dresser: Dresser | None = None) -> RootDensityState:
    """rho_a = theta_a (d_lambda p)^dr / 2pi, with rho_t stored alongside."""
    grid = filling.grid
    if dresser is None:
        dresser = Dresser(model, grid, filling, kernels)
    mids = grid.midpoints
    dp = np.array([model.dlam_momentum(mids, a) for a in model.strings.lengths])
    rho_t = dresser.dress(dp) / TWO_PI
    rho = filling.values * rho_t
    return RootDensityState(grid, model.strings, rho, rho_t)


def charge_expectation(model, rho_state: RootDensityState, charge: Charge) -> float:
    """Per-site charge density; Charge.MAGNON returns the magnetization
    m = 1 - 2 sum_a a * int rho_a (each magnon flips one spin from +1 to -1;
    the normalization is fixed by m -> 0 in the infinite-temperature,
    zero-potential state)."""
    grid = rho_state.grid
    widths = grid.widths
    mids = grid.midpoints
    if charge is Charge.ENERGY:
        total = 0.0
        for i, a in enumerate(model.strings.lengths):
            total += float(np.sum(model.energy(mids, a) * rho_state.rho[i] * widths))
        return total
    if charge is Charge.MAGNON:
        density = 0.0
        for i, a in enumerate(model.strings.lengths):
            density += a * float(np.sum(rho_state.rho[i] * widths))
        return 1.0 - 2.0 * density
    raise InvalidArgumentError(f"unknown charge {charge}")


def magnon_density(rho_state: RootDensityState, strings) -> float:
    """Per-site magnon number sum_a a * int rho_a."""
    widths = rho_state.grid.widths
    return float(sum(a * np.sum(rho_state.rho[i] * widths)
                     for i, a in enumerate(strings.lengths)))


def yang_yang_entropy(model, filling: FillingState,
                      kernels: KernelSet | None = None,
                      dresser: Dresser | None = None,
                      rho_state: RootDensityState | None = None) -> float:
    """Per-site entropy density of the macrostate described by the filling."""
    if rho_state is None:
        rho_state = root_density(model, filling, kernels, dresser)
    th = filling.values
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(th > 0, th * np.log(th), 0.0) \
            - np.where(th < 1, (1 - th) * np.log1p(-th), 0.0)
    widths = filling.grid.widths
    return float(np.sum(rho_state.rho_total * h * widths))


@dataclass
class ThermalPoint:
    """A solved GGE/thermal point: multipliers, state and scalar observables."""

    chi: float
    beta: float
    mu: float
    filling: FillingState
    rho: RootDensityState
    u: float
    m: float
    s: float
    eps: np.ndarray = field(repr=False, default=None)
    dresser: Dresser = field(repr=False, default=None)


def _observables(model, grid, sol: PseudoenergyState, kernels) -> ThermalPoint:
    # factor the dressing operator at the converged filling; the solver's
    # last Newton Jacobian belongs to the previous iterate and is not
    # accurate enough for observables
    dresser = Dresser(model, grid, sol.filling, kernels)
    rho = root_density(model, sol.filling, kernels, dresser)
    u = charge_expectation(model, rho, Charge.ENERGY)
    m = charge_expectation(model, rho, Charge.MAGNON)
    s = yang_yang_entropy(model, sol.filling, rho_state=rho)
    return ThermalPoint(model.chi, math.nan, math.nan, sol.filling, rho, u, m, s,
                        eps=sol.eps, dresser=dresser)


def gge_point(model, grid, beta: float, mu: float = 0.0,
              kernels: KernelSet | None = None,
              initial_eps: np.ndarray | None = None) -> ThermalPoint:
    """Solve the TBA at given (beta, mu) and collect observables."""
    if kernels is None and model.interacting:
        kernels = build_kernels(model, grid, need_dchi=False)
    sol = solve_pseudoenergy(model, grid, gge_driving(model, grid, beta, mu),
                             kernels, initial=initial_eps)
    point = _observables(model, grid, sol, kernels)
    point.beta = beta
    point.mu = mu
    return point


_MU_CAP = 1024.0


def thermal_state(model, grid: RapidityGrid, beta: float,
                  target_m: float | None = None,
                  kernels: KernelSet | None = None,
                  initial_eps: np.ndarray | None = None,
                  mu_tol: float = 1e-13) -> ThermalPoint:
    """Thermal point at inverse temperature beta.

    For models exposing the magnon charge, the chemical-potential multiplier
    mu is tuned so the magnetization matches `target_m` (monotone bracket
    plus Brent root-finding).  For the Ising chain target_m is ignored.
    """
    if Charge.MAGNON not in model.thermal_charges or target_m is None:
        return gge_point(model, grid, beta, 0.0, kernels, initial_eps)

    if kernels is None:
        kernels = build_kernels(model, grid, need_dchi=False)

    warm = {"eps": initial_eps}

    def m_of_mu(mu):
        point = gge_point(model, grid, beta, mu, kernels, warm["eps"])
        warm["eps"] = point.eps
        warm["point"] = point
        return point.m - target_m

    f0 = m_of_mu(0.0)
    if abs(f0) <= 1e-12:
        mu_lo = mu_hi = 0.0
    else:
        direction = 1.0 if f0 < 0 else -1.0  # m increases with mu
        step = 1.0
        mu_prev, f_prev = 0.0, f0
        while True:
            mu_try = direction * step
            f_try = m_of_mu(mu_try)
            if f_prev * f_try <= 0:
                mu_lo, mu_hi = sorted((mu_prev, mu_try))
                break
            if step >= _MU_CAP:
                raise UnreachableMagnetizationError(
                    f"magnetization {target_m} unreachable at beta={beta} "
                    f"(m({mu_try:+.0f}) = {f_try + target_m:.6f})")
            mu_prev, f_prev = mu_try, f_try
            step *= 2.0

    if mu_lo == mu_hi:
        mu_star = 0.0
    else:
        mu_star = brentq(m_of_mu, mu_lo, mu_hi, xtol=mu_tol, rtol=1e-15)
    point = gge_point(model, grid, beta, mu_star, kernels, warm["eps"])
    if abs(point.m - target_m) > 1e-8:
        raise ConvergenceError(
            f"mu root-finding left |m - target| = {abs(point.m - target_m):.3e}")
    return point
