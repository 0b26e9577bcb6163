"""Multiplicity of constrained states for the potential-weighted problem.

The weighted energy replaces the nonlocal coupling by a bounded positive
weight h sampled at the slow scale eps:

    E_eps(u) = 1/2 |grad u|_2^2 - mu/q integral |u|^q
               - N/(2(N+alpha)) integral (I_alpha * [h(eps x)|u|^p]) h(eps x) |u|^p.

A constant weight g reduces it to the autonomous energy with coupling g^2,
so each global maximum point a_i of h carries, for small eps, its own
constrained minimizer: descent is confined to the basin of fields whose
truncated barycenter stays within rho_tilde of a_i, initialized from the
autonomous ground state translated to a_i / eps.  Distinct basins have
disjoint barycenter ranges, which is what makes the count a multiplicity
statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .functionals import Problem
from .grid import Field, Grid, grad_norm_sq, mass, shift
from .riesz import RieszOperator, apply as riesz_apply
from .solver import SolveReport, SolverConfig, minimize, project_mass

_STEP_FLOOR = 1e-14
_MAX_BASIN_HALVINGS = 60


class BasinSolveError(RuntimeError):
    """A basin-constrained solve failed; carries the basin index."""

    def __init__(self, basin_index: int, message: str):
        super().__init__(f"basin {basin_index}: {message}")
        self.basin_index = basin_index


@dataclass
class PotentialSpec:
    """Bounded positive weight with finitely many global maxima.

    h maps an (..., N) array of points to values; h_inf is its limit at
    infinity, h_max its maximum, attained exactly on `maxima` (a_1 = 0 by
    convention).  eps sets the sampling scale h(eps x).
    """

    h: callable
    h_max: float
    h_inf: float
    maxima: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.maxima = np.atleast_2d(np.asarray(self.maxima, dtype=float))
        if not 0.0 < self.h_inf < self.h_max:
            raise ValueError("need 0 < h_inf < h_max")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if np.linalg.norm(self.maxima[0]) > 1e-12:
            raise ValueError("the first maximum must sit at the origin")
        for i in range(len(self.maxima)):
            for j in range(i + 1, len(self.maxima)):
                if np.linalg.norm(self.maxima[i] - self.maxima[j]) <= 1e-12:
                    raise ValueError("maxima must be pairwise distinct")
        values = self.h(self.maxima)
        if np.max(np.abs(values - self.h_max)) > 1e-12:
            raise ValueError("h must equal h_max at every listed maximum")

    @property
    def count(self) -> int:
        return len(self.maxima)

    def sample(self, grid: Grid) -> np.ndarray:
        """h(eps x) on the grid cells (flat), with bounds sanity checks."""
        pts = np.stack([c.ravel() for c in grid.coords()], axis=-1)
        w = np.asarray(self.h(self.epsilon * pts), dtype=float).ravel()
        if w.size != grid.size:
            raise ValueError("potential callable returned the wrong number of samples")
        if np.min(w) <= 0.0:
            raise ValueError("potential samples must stay positive")
        if np.max(w) > self.h_max + 1e-9:
            raise ValueError("potential samples exceed the declared maximum")
        return w


def gaussian_bumps_potential(maxima, widths, h_max: float, h_inf: float,
                             epsilon: float) -> PotentialSpec:
    """Builtin weight: floor h_inf plus Gaussian bumps of height h_max.

    The bumps combine through a pointwise max so h equals h_max exactly at
    each center no matter how close the centers sit.
    """
    centers = np.atleast_2d(np.asarray(maxima, dtype=float))
    widths_arr = np.broadcast_to(np.asarray(widths, dtype=float).ravel(), (len(centers),))

    def h(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(pts.shape[0], -np.inf)
        for center, width in zip(centers, widths_arr):
            d2 = np.sum((pts - center) ** 2, axis=-1)
            best = np.maximum(best, np.exp(-d2 / (2.0 * width**2)))
        return h_inf + (h_max - h_inf) * best

    return PotentialSpec(h, h_max, h_inf, centers, epsilon)


def table_potential_1d(xs, values, h_max: float, h_inf: float, maxima,
                       epsilon: float) -> PotentialSpec:
    """Weight interpolated linearly from (x, h) samples, h_inf outside."""
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)

    def h(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))[:, 0]
        return np.interp(pts, xs, values, left=h_inf, right=h_inf)

    return PotentialSpec(h, h_max, h_inf, np.atleast_2d(maxima).T
                         if np.ndim(maxima) == 1 else maxima, epsilon)


@dataclass(frozen=True)
class BasinSpec:
    """Barycenter-confinement radii: basin radius rho_tilde, truncation r_tilde."""

    rho_tilde: float
    r_tilde: float

    def __post_init__(self):
        if not 0.0 < self.rho_tilde or not 0.0 < self.r_tilde:
            raise ValueError("radii must be positive")

    def validate(self, pot: PotentialSpec) -> None:
        """Closed basin balls pairwise disjoint and inside the truncation ball."""
        a = pot.maxima
        for i in range(len(a)):
            for j in range(i + 1, len(a)):
                if np.linalg.norm(a[i] - a[j]) <= 2.0 * self.rho_tilde:
                    raise ValueError("basin balls overlap: shrink rho_tilde")
        if np.max(np.linalg.norm(a, axis=1)) + self.rho_tilde > self.r_tilde:
            raise ValueError("basin balls stick out of the truncation ball")


def default_basins(pot: PotentialSpec) -> BasinSpec:
    """rho_tilde = 0.45 * min pairwise maxima distance, r_tilde = 2 max|a| + 1."""
    a = pot.maxima
    if len(a) > 1:
        dists = [np.linalg.norm(a[i] - a[j])
                 for i in range(len(a)) for j in range(i + 1, len(a))]
        rho = 0.45 * min(dists)
    else:
        rho = 1.0
    r = 2.0 * float(np.max(np.linalg.norm(a, axis=1))) + 1.0
    spec = BasinSpec(rho, r)
    spec.validate(pot)
    return spec


# ---------------------------------------------------------------------------
# weighted energy, gradient, barycenter
# ---------------------------------------------------------------------------

def _weighted_parts(prob: Problem, weights: np.ndarray, u: Field, op: RieszOperator):
    """(total, kinetic_full, nonlocal, local, u_hat, conv) for the weighted energy."""
    g = u.grid
    p = prob.nonlocal_exponent
    u_hat = np.fft.fftn(u.reshaped())
    kinetic_full = g.cell_volume / g.size * float(np.sum(g.wavenumber_sq() * np.abs(u_hat) ** 2))
    density = weights * np.abs(u.values) ** p
    conv = riesz_apply(op, u.with_values(density))
    nl = g.cell_volume * float(np.dot(conv.values, density))
    local = g.cell_volume * float(np.sum(np.abs(u.values) ** prob.q))
    total = (0.5 * kinetic_full
             - prob.dim / (2.0 * (prob.dim + prob.alpha)) * nl
             - prob.mu / prob.q * local)
    return total, kinetic_full, nl, local, u_hat, conv


def _weighted_gradient(prob: Problem, weights: np.ndarray, u: Field,
                       u_hat: np.ndarray, conv: Field) -> np.ndarray:
    p = prob.nonlocal_exponent
    lap = np.fft.ifftn(u.grid.wavenumber_sq() * u_hat).real.ravel()
    frac = np.sign(u.values) * np.abs(u.values) ** (p - 1.0)
    loc = np.sign(u.values) * np.abs(u.values) ** (prob.q - 1.0)
    return lap - conv.values * weights * frac - prob.mu * loc


def weighted_energy(prob: Problem, pot: PotentialSpec, u: Field,
                    op: RieszOperator) -> float:
    """E_eps(u); the coupling enters through the weight only (gamma unused)."""
    if op.grid != u.grid:
        raise ValueError("field grid does not match operator grid")
    weights = pot.sample(u.grid)
    return _weighted_parts(prob, weights, u, op)[0]


def weighted_multiplier(prob: Problem, pot: PotentialSpec, u: Field,
                        op: RieszOperator) -> float:
    """Multiplier of the weighted equation tested against u."""
    weights = pot.sample(u.grid)
    _, kinetic_full, nl, local, _, _ = _weighted_parts(prob, weights, u, op)
    return (-kinetic_full + nl + prob.mu * local) / mass(u)


def barycenter(pot: PotentialSpec, basins: BasinSpec, u: Field) -> np.ndarray:
    """Truncated center of mass Q_eps(u); always inside the r_tilde ball."""
    m = mass(u)
    if m <= 0.0:
        raise ValueError("barycenter requires a field with positive mass")
    g = u.grid
    pts = pot.epsilon * np.stack([c.ravel() for c in g.coords()], axis=-1)
    norms = np.linalg.norm(pts, axis=-1)
    scale = np.where(norms > basins.r_tilde, basins.r_tilde / np.maximum(norms, 1e-300), 1.0)
    chi = pts * scale[:, None]
    w = u.values**2
    return g.cell_volume * (chi * w[:, None]).sum(axis=0) / m


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

@dataclass
class BasinReport:
    """Outcome of one basin-confined weighted minimization."""

    basin_index: int
    minimizer: Field
    energy: float
    multiplier: float
    barycenter: np.ndarray
    in_basin: bool
    iterations: int
    converged: bool
    basin_rejections: int
    grad_residual: float
    trace: np.ndarray
    warnings: list = field(default_factory=list)


def autonomous_level(prob: Problem, grid: Grid, coupling: float,
                     cfg: SolverConfig | None = None,
                     init: Field | None = None) -> SolveReport:
    """Constrained minimum of the constant-weight energy (coupling h-value).

    A constant weight g multiplies the nonlocal density twice, so the
    autonomous problem carries gamma = g^2.
    """
    autonomous = replace(prob, gamma=coupling**2)
    return minimize(autonomous, grid, cfg, init=init)


def _required_half_width(pot: PotentialSpec, grid: Grid) -> bool:
    reach = float(np.max(np.abs(pot.maxima))) / pot.epsilon
    return reach <= 0.6 * grid.half_width


def ensure_grid_covers(pot: PotentialSpec, grid: Grid) -> Grid:
    """Double the box (same spacing) until all a_i/eps fit well inside."""
    g = grid
    while not _required_half_width(pot, g):
        g = Grid(g.dim, 2 * g.points_per_axis, 2.0 * g.half_width)
    return g


def translated_ground_state(pot: PotentialSpec, ground: Field, i: int) -> Field:
    """Autonomous profile moved to a_i / eps by whole-cell circular shift."""
    offset = np.round(pot.maxima[i] / (pot.epsilon * ground.grid.spacing)).astype(int)
    return shift(ground, offset)


def _descend_weighted(prob: Problem, pot: PotentialSpec, grid: Grid,
                      cfg: SolverConfig, init: Field,
                      basin: tuple | None) -> BasinReport:
    """Projected descent on the weighted energy, optionally basin-confined.

    basin = (index, center a_i, basins) activates step rejection: any trial
    step whose barycenter leaves the closed rho_tilde ball around a_i is
    rejected and the step halved, up to 60 halvings.
    """
    op = RieszOperator.build(grid, prob.alpha)
    weights = pot.sample(grid)
    basins = basin[2] if basin is not None else None
    target = np.asarray(basin[1], dtype=float) if basin is not None else None
    index = basin[0] if basin is not None else -1

    u = project_mass(init, prob.c)
    if basin is not None:
        qe = barycenter(pot, basins, u)
        if np.linalg.norm(qe - target) > basins.rho_tilde:
            raise BasinSolveError(index, f"initial barycenter {qe} outside the basin")

    total, kin, nl, loc, u_hat, conv = _weighted_parts(prob, weights, u, op)
    tol = cfg.resolved_grad_tol(grid)
    w = grid.cell_volume
    step = cfg.step_init
    trace = []
    rejections = 0
    converged = False
    warnings = []
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = _weighted_gradient(prob, weights, u, u_hat, conv)
        coeff = w * np.dot(grad, u.values) / prob.c**2
        gt = grad - coeff * u.values
        res = float(np.sqrt(w * np.sum(gt**2)))
        trace.append((it - 1, total, res))
        if res <= tol:
            converged = True
            break
        slack = 4.0 * np.finfo(float).eps * (1.0 + abs(total))
        step = min(2.0 * step, cfg.step_init)
        accepted = False
        halvings = 0
        while step >= _STEP_FLOOR:
            cand = project_mass(u.with_values(u.values - step * gt), prob.c)
            if basin is not None:
                qe = barycenter(pot, basins, cand)
                if np.linalg.norm(qe - target) > basins.rho_tilde:
                    rejections += 1
                    halvings += 1
                    if halvings > _MAX_BASIN_HALVINGS:
                        raise BasinSolveError(
                            index, f"basin violation unresolved after {halvings} halvings")
                    step *= 0.5
                    continue
            cand_parts = _weighted_parts(prob, weights, cand, op)
            if cand_parts[0] <= total - cfg.armijo_c * step * res * res + slack:
                u = cand
                total, kin, nl, loc, u_hat, conv = cand_parts
                accepted = True
                break
            step *= cfg.backtrack_factor
        if not accepted:
            warnings.append(f"backtracking exhausted at iteration {it} (residual {res:.3e})")
            break

    grad = _weighted_gradient(prob, weights, u, u_hat, conv)
    coeff = w * np.dot(grad, u.values) / prob.c**2
    gt = grad - coeff * u.values
    res = float(np.sqrt(w * np.sum(gt**2)))
    if res <= tol:
        converged = True
    lam = (-kin + nl + prob.mu * loc) / mass(u)
    if basins is not None:
        qe = barycenter(pot, basins, u)
        in_basin = bool(np.linalg.norm(qe - target) <= basins.rho_tilde)
    else:
        default = default_basins(pot)
        qe = barycenter(pot, default, u)
        in_basin = True
    return BasinReport(
        basin_index=index,
        minimizer=u,
        energy=total,
        multiplier=lam,
        barycenter=qe,
        in_basin=in_basin,
        iterations=it,
        converged=converged,
        basin_rejections=rejections,
        grad_residual=res,
        trace=np.asarray(trace),
        warnings=warnings,
    )


def solve_in_basin(prob: Problem, pot: PotentialSpec, basins: BasinSpec, i: int,
                   grid: Grid, cfg: SolverConfig | None = None,
                   ground: Field | None = None) -> BasinReport:
    """Minimize the weighted energy over the i-th barycenter basin.

    Starts from the autonomous ground state (coupling h_max) translated to
    a_i / eps; the basin constraint is enforced by step rejection so the
    energy landscape itself stays untouched.
    """
    if cfg is None:
        cfg = SolverConfig()
    basins.validate(pot)
    if not 0 <= i < pot.count:
        raise ValueError(f"basin index {i} out of range")
    grid = ensure_grid_covers(pot, grid)
    if ground is None:
        ground = autonomous_level(prob, grid, pot.h_max, cfg).minimizer
    elif ground.grid != grid:
        raise ValueError("ground state grid does not match the (possibly enlarged) grid")
    init = translated_ground_state(pot, ground, i)
    cfg_basin = replace(cfg, rearrange_every=0)  # rearranging would recenter the bump
    return _descend_weighted(prob, pot, grid, cfg_basin, init,
                             basin=(i, pot.maxima[i], basins))


def multiplicity_run(prob: Problem, pot: PotentialSpec, basins: BasinSpec,
                     grid: Grid, cfg: SolverConfig | None = None) -> list:
    """One basin solve per maximum of h; distinctness via basin membership.

    The closed basin balls are pairwise disjoint, so reports whose
    barycenters stay in their own ball describe pairwise distinct states.
    Any failed basin raises BasinSolveError carrying the index.
    """
    if cfg is None:
        cfg = SolverConfig()
    basins.validate(pot)
    grid = ensure_grid_covers(pot, grid)
    ground = autonomous_level(prob, grid, pot.h_max, cfg).minimizer
    reports = []
    for i in range(pot.count):
        report = solve_in_basin(prob, pot, basins, i, grid, cfg, ground=ground)
        if not report.converged:
            raise BasinSolveError(i, "basin solve did not converge")
        if not report.in_basin:
            raise BasinSolveError(i, "converged barycenter left its basin")
        reports.append(report)
    return reports


@dataclass
class LevelHierarchy:
    """Autonomous levels at the extreme couplings and the global estimate."""

    level_hmax: float
    level_hinf: float
    global_estimate: float
    ordering_ok: bool       # level_hmax < level_hinf < 0
    gap_to_hmax: float      # global_estimate - level_hmax
    report_hmax: SolveReport
    report_hinf: SolveReport
    report_global: BasinReport


def level_hierarchy(prob: Problem, pot: PotentialSpec, grid: Grid,
                    cfg: SolverConfig | None = None) -> LevelHierarchy:
    """Compare the weighted minimum against the two autonomous levels.

    All three minimizations run on one shared grid so the discretization
    bias cancels from the comparisons.
    """
    if cfg is None:
        cfg = SolverConfig()
    grid = ensure_grid_covers(pot, grid)
    rep_hmax = autonomous_level(prob, grid, pot.h_max, cfg)
    rep_hinf = autonomous_level(prob, grid, pot.h_inf, cfg)
    cfg_w = replace(cfg, rearrange_every=0)
    rep_global = _descend_weighted(prob, pot, grid, cfg_w,
                                   rep_hmax.minimizer, basin=None)
    hmax_level = rep_hmax.energy.total
    hinf_level = rep_hinf.energy.total
    return LevelHierarchy(
        level_hmax=hmax_level,
        level_hinf=hinf_level,
        global_estimate=rep_global.energy,
        ordering_ok=bool(hmax_level < hinf_level < 0.0),
        gap_to_hmax=rep_global.energy - hmax_level,
        report_hmax=rep_hmax,
        report_hinf=rep_hinf,
        report_global=rep_global,
    )
