"""choquardlab: normalized solutions of the lower-critical Choquard equation.

A numpy/scipy laboratory for mass-constrained ground states of

    -Delta u + lambda u = gamma (I_alpha * |u|^p) |u|^{p-2} u + mu |u|^{q-2} u,
    p = (N + alpha)/N,   integral |u|^2 = c^2,

plus the quantitative inequalities that govern existence (energy and
multiplier bounds, Pohozaev identity, critical-exponent nonexistence) and
the multiplicity machinery for the non-autonomous potential-weighted
problem.
"""

from .grid import (
    Field,
    Grid,
    boundary_mass_fraction,
    dilate,
    export_slice_csv,
    gaussian_field,
    grad_norm_sq,
    integrate,
    load_field,
    lp_norm,
    mass,
    random_smooth_field,
    save_field,
    shift,
)
from .riesz import RieszOperator, apply as riesz_apply, apply_direct, bilinear_energy
from .sharp_constants import ConstantsCache, gn_constant, hls_constant
from .functionals import (
    EnergyBreakdown,
    Problem,
    energy,
    euler_lagrange_gradient,
    lagrange_multiplier,
    pohozaev_residual,
)
from .solver import (
    SolveReport,
    SolverConfig,
    energy_curve_tau,
    minimize,
    minimize_with_box_continuation,
    project_mass,
    rearrange,
    tail_extended_embed,
)
from .thresholds import (
    EmptinessReport,
    PhasePoint,
    SweepTable,
    classify,
    compatible_mu,
    critical_compatibility_value,
    critical_manifold_minimizer,
    critical_witness,
    ground_level_bound,
    multiplier_lower_bound,
    sweep,
    verify_pohozaev_emptiness,
)
from .multibump import (
    BasinReport,
    BasinSolveError,
    BasinSpec,
    LevelHierarchy,
    PotentialSpec,
    autonomous_level,
    barycenter,
    default_basins,
    gaussian_bumps_potential,
    level_hierarchy,
    multiplicity_run,
    solve_in_basin,
    table_potential_1d,
    weighted_energy,
    weighted_multiplier,
)

__version__ = "0.1.0"
