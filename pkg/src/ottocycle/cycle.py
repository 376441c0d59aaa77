"""Full quasi-static Otto cycles and their infinitesimal-cycle analysis.

A cycle alternates two adiabatic strokes in the control parameter chi with
two constant-chi equilibrations against baths at inverse temperatures
beta_cold and beta_hot:

    A (chi_lo, beta_C)  --adiabat-->  B (chi_hi)
    B  --hot isochore-->  C (chi_hi, beta_H)
    C  --adiabat-->  D (chi_lo)
    D  --cold isochore-->  A

Work is extracted on the adiabats (W = -delta_u per site), heat enters on
the isochores (Q = +delta_u); the efficiency is eta = (W1+W2)/max(Q1,Q2).
The two working media differ only in the adiabats: the thermalizing medium
follows the multiplier flow, the prethermal one evolves every quasiparticle
mode; the baths thermalize either medium completely at fixed magnetization.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, InvalidArgumentError, OttocycleError
from .grids import FillingState, RapidityGrid, gge_distance, make_grid
from .models import Charge, IsingModel, KernelSet, XXZModel, build_kernels
from .tba import ThermalPoint, gge_point, root_density, thermal_state
from .correlators import CorrelatorBundle
from .strokes import StrokeTrajectory, ghd_stroke, thermal_stroke

# Relative size of |X| below which the skewed thermal efficiency is treated
# as vanishing and the efficiency ratio is flagged undefined.
_ZERO_ETA_REL = 1e-10


# ---------------------------------------------------------------------------
# configuration and result containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CycleConfig:
    """Geometry and baths of one Otto cycle."""

    chi_lo: float
    chi_hi: float
    beta_cold: float
    beta_hot: float
    target_m: float | None = None
    n_steps: int | None = None
    medium: str = "both"            # "thermal" | "prethermal" | "both"
    distance_stride: int = 10       # prethermal GGE-distance sampling; 0 = off
    bootstrap_substeps: int = 100

    def __post_init__(self):
        if self.chi_lo == self.chi_hi:
            raise InvalidArgumentError("cycle needs chi_lo != chi_hi")
        if self.beta_cold == self.beta_hot:
            raise InvalidArgumentError("cycle needs beta_cold != beta_hot")
        if self.medium not in ("thermal", "prethermal", "both"):
            raise InvalidArgumentError(f"unknown medium {self.medium!r}")


def _corner_summary(pt: ThermalPoint) -> dict:
    return {"chi": pt.chi, "beta": pt.beta, "mu": pt.mu,
            "u": pt.u, "m": pt.m, "s": pt.s}


@dataclass
class DistanceCurve:
    """GGE distance from the energy-(and m-)matched thermal state vs chi."""

    chis: np.ndarray
    values: np.ndarray

    def peak(self) -> float:
        return float(np.max(self.values)) if self.values.size else 0.0


@dataclass
class MediumResult:
    """Work/heat bookkeeping of one working medium around the cycle."""

    medium: str
    w1: float
    w2: float
    q1: float
    q2: float
    corners: dict
    adiabat_ab: StrokeTrajectory = field(repr=False, default=None)
    adiabat_cd: StrokeTrajectory = field(repr=False, default=None)
    distance_ab: DistanceCurve | None = None
    distance_cd: DistanceCurve | None = None

    @property
    def work(self) -> float:
        return self.w1 + self.w2

    @property
    def q_abs(self) -> float:
        return max(self.q1, self.q2)

    @property
    def is_engine(self) -> bool:
        return self.work > 0.0

    @property
    def eta(self) -> float:
        """Efficiency; NaN when the cycle does not operate as an engine."""
        if not self.is_engine or self.q_abs <= 0.0:
            return math.nan
        return self.work / self.q_abs

    @property
    def first_law_defect(self) -> float:
        return self.w1 + self.w2 - self.q1 - self.q2

    def to_dict(self) -> dict:
        out = {"medium": self.medium, "W1": self.w1, "W2": self.w2,
               "Q1": self.q1, "Q2": self.q2, "W": self.work,
               "Q_abs": self.q_abs, "eta": self.eta,
               "is_engine": self.is_engine,
               "first_law_defect": self.first_law_defect,
               "corners": self.corners}
        for name, traj in (("adiabat_AB", self.adiabat_ab),
                           ("adiabat_CD", self.adiabat_cd)):
            if traj is not None:
                out[name] = {"chi": traj.chis.tolist(), "u": traj.u.tolist(),
                             "m": traj.m.tolist(), "s": traj.s.tolist()}
        for name, curve in (("distance_AB", self.distance_ab),
                            ("distance_CD", self.distance_cd)):
            if curve is not None:
                out[name] = {"chi": curve.chis.tolist(),
                             "distance": curve.values.tolist()}
        return out


@dataclass
class CycleResult:
    """Results of run_cycle for the requested media."""

    config: CycleConfig
    media: dict  # medium name -> MediumResult

    def to_dict(self) -> dict:
        cfg = {"chi_lo": self.config.chi_lo, "chi_hi": self.config.chi_hi,
               "beta_cold": self.config.beta_cold,
               "beta_hot": self.config.beta_hot,
               "target_m": self.config.target_m,
               "n_steps": self.config.n_steps,
               "medium": self.config.medium,
               "distance_stride": self.config.distance_stride}
        return {"config": cfg,
                "media": {k: v.to_dict() for k, v in self.media.items()}}


# ---------------------------------------------------------------------------
# thermal reference matching (for the GGE-distance diagnostic)
# ---------------------------------------------------------------------------

def _covariance_only(model, point: ThermalPoint) -> np.ndarray:
    """Covariance over thermal charges without the chi-derivative machinery."""
    grid = point.filling.grid
    mids = grid.midpoints
    lengths = model.strings.lengths
    weight = point.rho.rho * (1.0 - point.filling.values) * grid.widths[None, :]
    charges = model.thermal_charges
    qd = [point.dresser.dress(np.array([model.charge_value(c, mids, a)
                                        for a in lengths])) for c in charges]
    k = len(charges)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = float(np.sum(qd[i] * weight * qd[j]))
    return out


def matched_thermal_reference(model, grid: RapidityGrid, u_target: float,
                              m_target: float | None = None,
                              kernels: KernelSet | None = None,
                              guess: tuple[float, float] = (1.0, 0.0),
                              tol: float = 1e-9,
                              max_iter: int = 60) -> ThermalPoint:
    """Thermal point with prescribed energy (and magnetization) density.

    Used to build the relaxation target of a generalized Gibbs state: the
    thermal state carrying the same conserved quantities the baths couple to.
    Ising: 1-d root-find in beta.  XXZ: damped Newton in (beta, mu) with the
    covariance matrix as the exact Jacobian.
    """
    if Charge.MAGNON not in model.thermal_charges or m_target is None:
        # single conserved charge: u(beta) is strictly decreasing
        warm = {"eps": None}

        def u_of_beta(b):
            pt = gge_point(model, grid, b, 0.0, kernels, warm["eps"])
            warm["eps"] = pt.eps
            warm["pt"] = pt
            return pt.u - u_target

        b0 = guess[0]
        f0 = u_of_beta(b0)
        step = 0.5
        b_prev, f_prev = b0, f0
        while True:
            b_try = b_prev + math.copysign(step, f_prev)
            f_try = u_of_beta(b_try)
            if f_prev * f_try <= 0:
                lo, hi = sorted((b_prev, b_try))
                break
            if abs(b_try) > 1e4:
                raise ConvergenceError(
                    f"no inverse temperature reaches u = {u_target}")
            b_prev, f_prev = b_try, f_try
            step *= 2.0
        beta = brentq(u_of_beta, lo, hi, xtol=tol, rtol=1e-15)
        return gge_point(model, grid, beta, 0.0, kernels, warm["eps"])

    if kernels is None:
        kernels = build_kernels(model, grid, need_dchi=False)
    beta, mu = float(guess[0]), float(guess[1])
    warm_eps = None
    pt = gge_point(model, grid, beta, mu, kernels, warm_eps)
    res = np.array([pt.u - u_target, pt.m - m_target])
    scale = np.array([max(1.0, abs(u_target)), 1.0])
    for _ in range(max_iter):
        if np.max(np.abs(res / scale)) < tol:
            return pt
        cov = _covariance_only(model, pt)
        # d(u, m)/d(beta, mu): du = -C_HH, -C_HN; dm = +2C_NH, +2C_NN
        jac = np.array([[-cov[0, 0], -cov[0, 1]],
                        [2.0 * cov[1, 0], 2.0 * cov[1, 1]]])
        try:
            step_vec = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                f"singular Jacobian matching (u, m) = ({u_target}, {m_target}): "
                f"{exc}") from exc
        alpha = 1.0
        base = np.max(np.abs(res / scale))
        for _ in range(25):
            trial = gge_point(model, grid, beta - alpha * step_vec[0],
                              mu - alpha * step_vec[1], kernels, pt.eps)
            trial_res = np.array([trial.u - u_target, trial.m - m_target])
            if np.max(np.abs(trial_res / scale)) < base:
                break
            alpha *= 0.5
        else:
            # line search exhausted: accept if we are at solver-noise level
            if base < 1e3 * tol:
                return pt
            raise ConvergenceError(
                f"(u, m) matching stalled at residual {base:.3e}", base)
        beta -= alpha * step_vec[0]
        mu -= alpha * step_vec[1]
        pt, res = trial, trial_res
    raise ConvergenceError(
        f"(u, m) matching did not converge, residual {np.max(np.abs(res)):.3e}")


def _distance_curve(model, grid, trajectory: StrokeTrajectory,
                    target_m: float | None,
                    kernels_cache_guess: tuple[float, float]) -> DistanceCurve:
    """Distance of each recorded filling from its matched thermal state."""
    chis, values = [], []
    guess = kernels_cache_guess
    for chi, filling in zip(trajectory.filling_chis, trajectory.fillings):
        mdl = model.with_chi(chi)
        kern = build_kernels(mdl, grid, need_dchi=False)
        rho = root_density(mdl, filling, kern)
        u_here = float(trajectory.u[int(np.argmin(np.abs(trajectory.chis - chi)))])
        ref = matched_thermal_reference(mdl, grid, u_here,
                                        target_m if model.interacting else None,
                                        kern, guess=guess)
        guess = (ref.beta, ref.mu)
        chis.append(chi)
        values.append(gge_distance(rho, ref.rho).value)
    return DistanceCurve(np.asarray(chis), np.asarray(values))


# ---------------------------------------------------------------------------
# cycle assembly
# ---------------------------------------------------------------------------

def isochore(model, chi: float, bath_beta: float, target_m: float | None,
             incoming_u: float, grid: RapidityGrid,
             kernels: KernelSet | None = None,
             initial_eps: np.ndarray | None = None) -> tuple[ThermalPoint, float]:
    """Equilibrate with a bath at fixed chi; returns the new state and the
    absorbed heat Q = u_out - u_in per site."""
    mdl = model.with_chi(chi)
    if kernels is None:
        kernels = build_kernels(mdl, grid, need_dchi=False)
    out = thermal_state(mdl, grid, bath_beta, target_m, kernels, initial_eps)
    return out, out.u - incoming_u


def _run_medium(medium: str, model, grid: RapidityGrid, cfg: CycleConfig,
                corner_a: ThermalPoint, corner_c: ThermalPoint) -> MediumResult:
    """One working medium around the cycle, given the solved bath corners."""
    stride = cfg.distance_stride if medium == "prethermal" else 0

    def adiabat(mdl, start_pt, chi_to):
        if medium == "thermal":
            return thermal_stroke(mdl, grid, start_pt, chi_to, cfg.n_steps)
        return ghd_stroke(mdl, grid, start_pt.filling, chi_to, cfg.n_steps,
                          bootstrap_substeps=cfg.bootstrap_substeps,
                          record_stride=stride)

    model_lo = model.with_chi(cfg.chi_lo)
    model_hi = model.with_chi(cfg.chi_hi)

    traj_ab = adiabat(model_lo, corner_a, cfg.chi_hi)
    u_b = float(traj_ab.u[-1])
    q1 = corner_c.u - u_b
    traj_cd = adiabat(model_hi, corner_c, cfg.chi_lo)
    u_d = float(traj_cd.u[-1])
    q2 = corner_a.u - u_d

    corners = {"A": _corner_summary(corner_a),
               "B": {"chi": cfg.chi_hi, "u": u_b,
                     "m": float(traj_ab.m[-1]), "s": float(traj_ab.s[-1])},
               "C": _corner_summary(corner_c),
               "D": {"chi": cfg.chi_lo, "u": u_d,
                     "m": float(traj_cd.m[-1]), "s": float(traj_cd.s[-1])}}

    result = MediumResult(medium=medium,
                          w1=corner_a.u - u_b, w2=corner_c.u - u_d,
                          q1=q1, q2=q2, corners=corners,
                          adiabat_ab=traj_ab, adiabat_cd=traj_cd)
    if stride:
        result.distance_ab = _distance_curve(
            model, grid, traj_ab, cfg.target_m, (corner_a.beta, corner_a.mu))
        result.distance_cd = _distance_curve(
            model, grid, traj_cd, cfg.target_m, (corner_c.beta, corner_c.mu))
    return result


def run_cycle(model, grid: RapidityGrid, cfg: CycleConfig) -> CycleResult:
    """Run the Otto cycle for the requested working media.

    Both media share the same bath corners A and C (the baths thermalize the
    system completely, erasing the medium's history at those two points).
    """
    model_lo = model.with_chi(cfg.chi_lo)
    model_hi = model.with_chi(cfg.chi_hi)
    kern_lo = build_kernels(model_lo, grid, need_dchi=False)
    kern_hi = build_kernels(model_hi, grid, need_dchi=False)
    corner_a = thermal_state(model_lo, grid, cfg.beta_cold, cfg.target_m, kern_lo)
    corner_c = thermal_state(model_hi, grid, cfg.beta_hot, cfg.target_m, kern_hi)

    media = {}
    wanted = ("thermal", "prethermal") if cfg.medium == "both" else (cfg.medium,)
    for medium in wanted:
        media[medium] = _run_medium(medium, model, grid, cfg, corner_a, corner_c)
    return CycleResult(cfg, media)


# ---------------------------------------------------------------------------
# infinitesimal cycles: closed forms
# ---------------------------------------------------------------------------

@dataclass
class SkewedReport:
    """Leading-order efficiencies of a skewed infinitesimal cycle."""

    beta: float
    chi: float
    eta_th: float
    ratio: float              # eta_pth / eta_th; NaN when flagged
    work_gap: float           # delta_W = W_pth - W_th at this (dchi, dbeta)
    p_pth: float
    p_th: float
    x_eff: float              # constrained <.. dchi H> coupling
    c_eff: float              # constrained energy autocorrelation
    eta_zero: bool            # thermal efficiency vanishes; ratio undefined


def _projection_pair(bundle: CorrelatorBundle) -> tuple[float, float]:
    p_pth = bundle.projection_norm(Charge.ENERGY)
    p_th = bundle.thermal_projection_norm(Charge.ENERGY)
    return p_pth, p_th


def infinitesimal_work_gap(model, point: ThermalPoint, delta_chi: float,
                           kernels: KernelSet | None = None,
                           bundle: CorrelatorBundle | None = None) -> float:
    """delta_W = W_pth - W_th = -beta dchi^2 (P_pth - P_th) per site."""
    if bundle is None:
        bundle = CorrelatorBundle(model, point, kernels)
    p_pth, p_th = _projection_pair(bundle)
    return -point.beta * delta_chi**2 * (p_pth - p_th)


def skewed_efficiencies(model, point: ThermalPoint, delta_chi: float,
                        delta_beta: float,
                        kernels: KernelSet | None = None,
                        bundle: CorrelatorBundle | None = None) -> SkewedReport:
    """Closed-form leading-order efficiencies in the skewed regime
    |delta_beta| >> |delta_chi|.

    The reservoir exchanges energy only, so for models with a conserved
    magnon number the temperature variations are constrained to keep the
    magnetization fixed; this replaces the bare correlators with their
    magnon-projected combinations.
    """
    if bundle is None:
        bundle = CorrelatorBundle(model, point, kernels)
    cov = bundle.covariance()
    sus = bundle.susceptibility()
    if Charge.MAGNON in bundle.charges:
        ih, im = bundle.charges.index(Charge.ENERGY), bundle.charges.index(Charge.MAGNON)
        x_eff = sus[ih, ih] - sus[im, ih] * cov[im, ih] / cov[im, im]
        c_eff = cov[ih, ih] - cov[ih, im]**2 / cov[im, im]
    else:
        x_eff = sus[0, 0]
        c_eff = cov[0, 0]
    p_pth, p_th = _projection_pair(bundle)
    eta_zero = abs(x_eff) <= _ZERO_ETA_REL * max(c_eff, 1.0)
    eta_th = 0.0 if eta_zero else abs(delta_chi * x_eff) / c_eff
    if eta_zero:
        ratio = math.nan
    else:
        ratio = 1.0 - abs(delta_chi / delta_beta) * point.beta \
            * (p_pth - p_th) / abs(x_eff)
    gap = -point.beta * delta_chi**2 * (p_pth - p_th)
    return SkewedReport(point.beta, model.chi, eta_th, ratio, gap,
                        p_pth, p_th, x_eff, c_eff, eta_zero)


@dataclass
class HalfGapReport:
    """Finite-cycle check of the small-cycle work/heat identities."""

    delta_chi: float
    delta_beta: float
    work_gap_predicted: float
    w1_gap: float
    w2_gap: float
    q_abs_gap: float          # Q_abs^pth - Q_abs^th
    defects: tuple[float, float, float]
    ratio_predicted: float
    ratio_measured: float


def half_gap_relations(model, grid: RapidityGrid, point: ThermalPoint,
                       delta_chi: float, delta_beta: float,
                       n_steps: int | None = None) -> HalfGapReport:
    """Run a small finite cycle and compare with the leading-order identities
    (work always counted as extracted, heat as absorbed):

        W1_pth - W1_th = W2_pth - W2_th = delta_W / 2,
        Q_abs_pth - Q_abs_th = delta_W / 2,
        eta_pth/eta_th = (1 + dW/W_th) / (1 + dW/(2 Q_abs_th)).
    """
    cfg = CycleConfig(chi_lo=model.chi, chi_hi=model.chi + delta_chi,
                      beta_cold=point.beta, beta_hot=point.beta + delta_beta,
                      target_m=(point.m if Charge.MAGNON in model.thermal_charges
                                else None),
                      n_steps=n_steps, medium="both", distance_stride=0)
    res = run_cycle(model, grid, cfg)
    th, pth = res.media["thermal"], res.media["prethermal"]
    gap_pred = infinitesimal_work_gap(model, point, delta_chi)
    w1_gap = pth.w1 - th.w1
    w2_gap = pth.w2 - th.w2
    q_gap = pth.q_abs - th.q_abs
    defects = (w1_gap - 0.5 * gap_pred, w2_gap - 0.5 * gap_pred,
               q_gap - 0.5 * gap_pred)
    dw = pth.work - th.work
    ratio_pred = ((1.0 + dw / th.work) / (1.0 + dw / (2.0 * th.q_abs))
                  if th.work != 0 else math.nan)
    ratio_meas = (pth.eta / th.eta
                  if th.is_engine and pth.is_engine else math.nan)
    return HalfGapReport(delta_chi, delta_beta, gap_pred, w1_gap, w2_gap,
                         q_gap, defects, ratio_pred, ratio_meas)


# ---------------------------------------------------------------------------
# parameter-space scans (Fig. 2-style grids)
# ---------------------------------------------------------------------------

@dataclass
class ScanPoint:
    beta: float
    chi: float
    eta_th: float
    eta_th_scaled: float      # eta_th / |delta_chi|
    ratio: float
    ratio_scaled: float       # (ratio - 1) * |delta_beta/delta_chi|
    work_gap: float
    eta_zero: bool
    failed: bool = False
    message: str = ""


@dataclass
class InfinitesimalReport:
    """Grid of skewed-cycle efficiencies over (beta, chi)."""

    betas: np.ndarray
    chis: np.ndarray
    delta_chi: float
    delta_beta: float
    target_m: float | None
    points: list  # row-major list of ScanPoint

    def csv_rows(self):
        yield ("beta", "chi", "eta_th", "eta_th_scaled", "ratio",
               "ratio_scaled", "work_gap", "flag")
        for p in self.points:
            flag = "failed" if p.failed else ("eta_zero" if p.eta_zero else "ok")
            yield (p.beta, p.chi, p.eta_th, p.eta_th_scaled, p.ratio,
                   p.ratio_scaled, p.work_gap, flag)


def _scan_one(args) -> ScanPoint:
    (name, params, n_cells, beta, chi, delta_chi, delta_beta, target_m) = args
    try:
        if name == "ising":
            model = IsingModel(chi)
        else:
            model = XXZModel(chi, n_strings=int(params["n_strings"]))
        grid = make_grid(n_cells, model.domain)
        kernels = build_kernels(model, grid, need_dchi=True)
        point = thermal_state(model, grid, beta, target_m, kernels)
        rep = skewed_efficiencies(model, point, delta_chi, delta_beta, kernels)
        scale = abs(delta_beta / delta_chi)
        return ScanPoint(beta, chi, rep.eta_th, rep.eta_th / abs(delta_chi),
                         rep.ratio, (rep.ratio - 1.0) * scale,
                         rep.work_gap, rep.eta_zero)
    except OttocycleError as exc:
        return ScanPoint(beta, chi, math.nan, math.nan, math.nan, math.nan,
                         math.nan, False, failed=True, message=str(exc))


def grid_scan(model, n_cells: int, betas, chis,
              delta_chi: float, delta_beta: float,
              target_m: float | None = None,
              workers: int = 1) -> InfinitesimalReport:
    """Skewed-cycle efficiencies on a dense (beta, chi) grid.

    Points are independent; `workers` > 1 distributes them across processes.
    Per-point failures are recorded in the report and do not stop the scan.
    Output ordering is deterministic (row-major over betas x chis).
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    chis = np.atleast_1d(np.asarray(chis, dtype=float))
    params = {"n_strings": getattr(model, "n_strings", 1)}
    tasks = [(model.name, params, n_cells, float(b), float(c),
              delta_chi, delta_beta, target_m)
             for b in betas for c in chis]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_scan_one, tasks))
    else:
        points = [_scan_one(t) for t in tasks]
    return InfinitesimalReport(betas, chis, delta_chi, delta_beta,
                               target_m, points)
