"""Quasi-static quantum Otto cycles in integrable spin chains.

Equilibrium states, correlators and slow-driving dynamics of the
transverse-field Ising chain and the easy-axis XXZ chain, for comparing
thermalizing and prethermalizing working media: work, heat, efficiency and
distance-from-equilibrium diagnostics, from single thermal points up to full
four-stroke cycles and parameter-space scans.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateReferenceError,
    FlowSingularityError,
    InvalidArgumentError,
    OttocycleError,
    SingularForceError,
    SolverFailureError,
    StrokeFailureError,
    UnreachableMagnetizationError,
)
from .grids import (
    FillingState,
    RapidityGrid,
    RootDensityState,
    StringSpectrum,
    gge_distance,
    interpolate_filling,
    make_grid,
)
from .models import Charge, IsingModel, KernelSet, XXZModel, build_kernels
from .tba import (
    Dresser,
    ThermalPoint,
    gge_point,
    root_density,
    solve_pseudoenergy,
    thermal_state,
    yang_yang_entropy,
)
from .config import RunConfig, load_config_file, resolve_config
from .correlators import CorrelatorBundle, effective_force
from .strokes import StrokeTrajectory, ghd_stroke, thermal_stroke, work_along
from .cycle import (
    CycleConfig,
    CycleResult,
    InfinitesimalReport,
    grid_scan,
    half_gap_relations,
    infinitesimal_work_gap,
    isochore,
    matched_thermal_reference,
    run_cycle,
    skewed_efficiencies,
)

__version__ = "0.1.0"
