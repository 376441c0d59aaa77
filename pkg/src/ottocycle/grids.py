"""Rapidity grids, state containers, interpolation and state-distance diagnostics.

The rapidity (Brillouin) zone is discretized into N uniform cells.  All
state-carrying quantities (filling functions, root densities, charge
eigenvalues, ...) live on the cell midpoints; integrals use the midpoint
rule, which is spectrally accurate for smooth periodic integrands.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReferenceError, InvalidArgumentError

# Filling values this far outside [0, 1] are snapped; larger violations raise.
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class RapidityGrid:
    """Uniform discretization of the Brillouin zone.

    nodes are the N+1 cell boundaries; midpoints and widths are derived.
    Instances are immutable and safe to share.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgumentError("grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidArgumentError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def domain(self) -> tuple[float, float]:
        return (float(self.nodes[0]), float(self.nodes[-1]))

    @property
    def period(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    def __eq__(self, other):
        if not isinstance(other, RapidityGrid):
            return NotImplemented
        return self.nodes.shape == other.nodes.shape and np.array_equal(
            self.nodes, other.nodes
        )

    def __hash__(self):
        return hash((self.nodes.size, float(self.nodes[0]), float(self.nodes[-1])))


@dataclass(frozen=True)
class StringSpectrum:
    """Bethe-string lengths kept in the truncated quasiparticle spectrum.

    Lengths must be the consecutive integers 1..n_strings; free models use
    the single entry (1,).
    """

    lengths: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(int(a) for a in self.lengths)
        if len(lengths) < 1 or list(lengths) != list(range(1, len(lengths) + 1)):
            raise InvalidArgumentError(
                f"string lengths must be consecutive 1..N_str, got {lengths}"
            )
        object.__setattr__(self, "lengths", lengths)

    def __len__(self):
        return len(self.lengths)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.lengths, dtype=float)


def make_grid(n_cells: int, domain: tuple[float, float]) -> RapidityGrid:
    """Build a uniform grid of n_cells cells over the given interval."""
    if n_cells < 8:
        raise InvalidArgumentError(f"n_cells must be >= 8, got {n_cells}")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise InvalidArgumentError(f"degenerate domain ({lo}, {hi})")
    return RapidityGrid(np.linspace(lo, hi, n_cells + 1))


def _validate_values(values, n_strings, n_cells, lo=0.0, hi=1.0, snap=True):
    values = np.array(values, dtype=float)
    if values.shape != (n_strings, n_cells):
        raise InvalidArgumentError(
            f"values shape {values.shape} != ({n_strings}, {n_cells})"
        )
    if snap:
        if values.min() < lo - CLAMP_TOL or values.max() > hi + CLAMP_TOL:
            raise InvalidArgumentError(
                "filling values outside [0,1] beyond clamp tolerance: "
                f"range [{values.min()}, {values.max()}]"
            )
        np.clip(values, lo, hi, out=values)
    return values


@dataclass(frozen=True)
class FillingState:
    """Per-string filling functions on the grid midpoints; values in [0, 1]."""

    grid: RapidityGrid
    strings: StringSpectrum
    values: np.ndarray

    def __post_init__(self):
        values = _validate_values(self.values, len(self.strings), self.grid.n_cells)
        object.__setattr__(self, "values", values)
        values.setflags(write=False)

    @property
    def flat(self) -> np.ndarray:
        """String-major flattened view, index n = cell + string_index * N."""
        return self.values.reshape(-1)

    def with_values(self, values) -> "FillingState":
        return FillingState(self.grid, self.strings, values)

    def to_dict(self) -> dict:
        return {
            "grid": {"nodes": self.grid.nodes.tolist()},
            "strings": list(self.strings.lengths),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FillingState":
        return cls(
            RapidityGrid(np.asarray(data["grid"]["nodes"], dtype=float)),
            StringSpectrum(tuple(data["strings"])),
            np.asarray(data["values"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FillingState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RootDensityState:
    """Root densities rho_a(lambda) and total densities rho_t,a on the grid."""

    grid: RapidityGrid
    strings: StringSpectrum
    rho: np.ndarray
    rho_total: np.ndarray

    def __post_init__(self):
        shape = (len(self.strings), self.grid.n_cells)
        rho = np.array(self.rho, dtype=float)
        rho_t = np.array(self.rho_total, dtype=float)
        if rho.shape != shape or rho_t.shape != shape:
            raise InvalidArgumentError(f"root density shape mismatch, expected {shape}")
        # tolerate solver-level negative noise, reject real violations
        if rho.min() < -1e-10:
            raise InvalidArgumentError(f"negative root density: min {rho.min()}")
        np.clip(rho, 0.0, None, out=rho)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "rho_total", rho_t)
        rho.setflags(write=False)
        rho_t.setflags(write=False)


@dataclass(frozen=True)
class StateDistance:
    """Relative L2 distance between two root-density states."""

    value: float


def interpolate_periodic(grid: RapidityGrid, values: np.ndarray, lam) -> np.ndarray:
    """Cubic Lagrange interpolation of midpoint samples, periodic on the zone.

    `values` holds one sample per cell midpoint; the 4-point stencil is
    centered on the midpoint interval containing the query.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    n = grid.n_cells
    w = grid.period / n
    lo = grid.domain[0]
    # position in midpoint units: u = 0 at the first midpoint
    u = np.mod(lam - lo, grid.period) / w - 0.5
    j0 = np.floor(u).astype(int)
    t = u - j0  # in [0, 1)
    vm = values[(j0 - 1) % n]
    v0 = values[j0 % n]
    vp = values[(j0 + 1) % n]
    v2 = values[(j0 + 2) % n]
    return (-t * (t - 1.0) * (t - 2.0) / 6.0 * vm
            + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * v0
            - (t + 1.0) * t * (t - 2.0) / 2.0 * vp
            + (t + 1.0) * t * (t - 1.0) / 6.0 * v2)


def interpolate_filling(state: FillingState, string: int, lam) -> np.ndarray | float:
    """Evaluate a filling function off-grid by local cubic interpolation.

    Rapidities wrap periodically on the Brillouin zone.  The result is
    clamped to [0, 1].  `string` is the 0-based species index.
    """
    if not 0 <= string < len(state.strings):
        raise InvalidArgumentError(f"string index {string} out of range")
    scalar = np.asarray(lam).ndim == 0
    out = interpolate_periodic(state.grid, state.values[string], lam)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def gge_distance(a: RootDensityState, reference: RootDensityState) -> StateDistance:
    """Relative L2 distance of `a` from `reference`, normalized by the reference.

    The definition is asymmetric: the denominator is the reference norm.
    """
    if a.grid != reference.grid or a.strings.lengths != reference.strings.lengths:
        raise InvalidArgumentError("states live on different grids or string sets")
    widths = a.grid.widths
    num = float(np.sum((a.rho - reference.rho) ** 2 * widths))
    den = float(np.sum(reference.rho**2 * widths))
    if den == 0.0:
        raise DegenerateReferenceError("reference root density has zero norm")
    return StateDistance(float(np.sqrt(num / den)))


def export_state_csv(path, filling: FillingState, rho: RootDensityState | None = None):
    """Write (string, lambda_midpoint, filling, rho) rows for plotting."""
    mids = filling.grid.midpoints
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["string", "lambda", "theta", "rho"])
        for i, length in enumerate(filling.strings.lengths):
            for j, lam in enumerate(mids):
                r = rho.rho[i, j] if rho is not None else ""
                writer.writerow([length, repr(float(lam)),
                                 repr(float(filling.values[i, j])),
                                 repr(float(r)) if r != "" else ""])
