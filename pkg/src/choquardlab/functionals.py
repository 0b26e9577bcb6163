"""The constrained energy, its L2 gradient, and the scaling identities.

For a parameter set (N, alpha, gamma, mu, q, c) the energy of u is

    E(u) = 1/2 |grad u|_2^2
           - gamma N / (2(N+alpha)) * integral (I_alpha * |u|^p) |u|^p
           - mu/q * integral |u|^q,          p = (N + alpha)/N,

minimized over the mass sphere |u|_2 = c.  The frequency of a constrained
critical point appears as a Lagrange multiplier, and every solution obeys
the dilation (Pohozaev) identity

    Q(u) = |grad u|_2^2 - mu eta_q integral |u|^q = 0,  eta_q = N/2 - N/q.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, grad_norm_sq, integrate, laplacian, mass
from .riesz import RieszOperator, apply as riesz_apply, bilinear_energy
from .sharp_constants import interp_exponent

_CRITICAL_TOL = 1e-12


@dataclass(frozen=True)
class Problem:
    """Parameters of the mass-constrained problem.

    dim: spatial dimension N in {1, 2, 3}
    alpha: Riesz order, 0 < alpha < N
    gamma: nonlocal coupling (>= 0; zero only for diagnostics)
    mu: local coupling (>= 0; zero only for diagnostics)
    q: local exponent, 2 < q <= 2 + 4/N
    c: target mass, |u|_2 = c
    """

    dim: int
    alpha: float
    gamma: float
    mu: float
    q: float
    c: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not 0.0 < self.alpha < self.dim:
            raise ValueError(f"alpha must lie in (0, {self.dim}), got {self.alpha}")
        if self.gamma < 0 or self.mu < 0:
            raise ValueError("couplings must be nonnegative")
        if not (2.0 < self.q <= self.q_critical + _CRITICAL_TOL):
            raise ValueError(f"q must lie in (2, 2 + 4/N], got {self.q}")
        if not self.c > 0:
            raise ValueError("c must be positive")

    @property
    def nonlocal_exponent(self) -> float:
        """p = (N + alpha)/N, always in (1, 2)."""
        return (self.dim + self.alpha) / self.dim

    @property
    def q_critical(self) -> float:
        return 2.0 + 4.0 / self.dim

    @property
    def is_mass_critical(self) -> bool:
        return abs(self.q - self.q_critical) <= _CRITICAL_TOL

    @property
    def interp_exponent_q(self) -> float:
        return interp_exponent(self.dim, self.q)

    @property
    def is_degenerate(self) -> bool:
        return self.gamma == 0.0 or self.mu == 0.0


@dataclass(frozen=True)
class EnergyBreakdown:
    """The three raw integrals and the assembled total.

    kinetic holds 1/2 |grad u|_2^2; nonlocal and local are the bare
    integrals (no coupling or exponent prefactors).
    """

    kinetic: float
    nonlocal_term: float
    local: float
    total: float
    interp_exponent: float


def nonlocal_density(prob: Problem, u: Field) -> Field:
    return u.with_values(np.abs(u.values) ** prob.nonlocal_exponent)


def energy(prob: Problem, u: Field, op: RieszOperator) -> EnergyBreakdown:
    """Assemble the energy of u from its three integrals."""
    _check_compatible(prob, u, op)
    kinetic = 0.5 * grad_norm_sq(u)
    rho = nonlocal_density(prob, u)
    nl = bilinear_energy(op, rho, rho)
    local = integrate(u.with_values(np.abs(u.values) ** prob.q))
    total = (kinetic
             - prob.gamma * prob.dim / (2.0 * (prob.dim + prob.alpha)) * nl
             - prob.mu / prob.q * local)
    return EnergyBreakdown(kinetic, nl, local, total, prob.interp_exponent_q)


def euler_lagrange_gradient(prob: Problem, u: Field, op: RieszOperator) -> Field:
    """L2 representative of E'(u):

        -Delta u - gamma (I_alpha * |u|^p) |u|^{p-2} u - mu |u|^{q-2} u.

    |u|^{p-2} u is evaluated as sign(u) |u|^{p-1}, continuous with value 0
    at u = 0 since p > 1.
    """
    _check_compatible(prob, u, op)
    p = prob.nonlocal_exponent
    rho = nonlocal_density(prob, u)
    conv = riesz_apply(op, rho)
    frac = np.sign(u.values) * np.abs(u.values) ** (p - 1.0)
    loc = np.sign(u.values) * np.abs(u.values) ** (prob.q - 1.0)
    out = (-laplacian(u).values
           - prob.gamma * conv.values * frac
           - prob.mu * loc)
    return u.with_values(out)


def pohozaev_residual(prob: Problem, u: Field) -> float:
    """Q(u) = |grad u|_2^2 - mu eta_q integral |u|^q; zero at any solution."""
    local = integrate(u.with_values(np.abs(u.values) ** prob.q))
    return grad_norm_sq(u) - prob.mu * prob.interp_exponent_q * local


def lagrange_multiplier(prob: Problem, u: Field, op: RieszOperator) -> float:
    """Multiplier from pairing the Euler-Lagrange equation with u:

        lambda c^2 = -|grad u|_2^2 + gamma * nonlocal + mu * integral |u|^q.
    """
    m = mass(u)
    if m <= 0.0:
        raise ValueError("lagrange_multiplier requires positive mass")
    rho = nonlocal_density(prob, u)
    nl = bilinear_energy(op, rho, rho)
    local = integrate(u.with_values(np.abs(u.values) ** prob.q))
    return (-grad_norm_sq(u) + prob.gamma * nl + prob.mu * local) / m


def _energy_parts(prob: Problem, u: Field, op: RieszOperator):
    """(breakdown, u_hat, conv) with the transforms exposed for reuse."""
    g = u.grid
    u_hat = np.fft.fftn(u.reshaped())
    k2 = g.wavenumber_sq()
    kinetic = 0.5 * g.cell_volume / g.size * float(np.sum(k2 * np.abs(u_hat) ** 2))
    rho = nonlocal_density(prob, u)
    conv = riesz_apply(op, rho)
    nl = g.cell_volume * float(np.dot(conv.values, rho.values))
    local = g.cell_volume * float(np.sum(np.abs(u.values) ** prob.q))
    total = (kinetic
             - prob.gamma * prob.dim / (2.0 * (prob.dim + prob.alpha)) * nl
             - prob.mu / prob.q * local)
    return EnergyBreakdown(kinetic, nl, local, total, prob.interp_exponent_q), u_hat, conv


def _gradient_from_parts(prob: Problem, u: Field, u_hat: np.ndarray, conv: Field) -> Field:
    p = prob.nonlocal_exponent
    lap = np.fft.ifftn(u.grid.wavenumber_sq() * u_hat).real.ravel()  # -Delta u
    frac = np.sign(u.values) * np.abs(u.values) ** (p - 1.0)
    loc = np.sign(u.values) * np.abs(u.values) ** (prob.q - 1.0)
    return u.with_values(lap - prob.gamma * conv.values * frac - prob.mu * loc)


def energy_and_gradient(prob: Problem, u: Field, op: RieszOperator):
    """Energy breakdown and L2 gradient sharing one convolution and one FFT.

    Numerically identical to calling `energy` and `euler_lagrange_gradient`
    separately; useful in descent loops where the duplicated transforms of
    the separate calls dominate the cost.
    """
    _check_compatible(prob, u, op)
    eb, u_hat, conv = _energy_parts(prob, u, op)
    return eb, _gradient_from_parts(prob, u, u_hat, conv)


def multiplier_residual(prob: Problem, u: Field, op: RieszOperator) -> float:
    """|E'(u) + lambda u|_2 / |u|_2 -- Euler-Lagrange consistency at u."""
    lam = lagrange_multiplier(prob, u, op)
    g = euler_lagrange_gradient(prob, u, op)
    res = g.values + lam * u.values
    num = np.sqrt(u.grid.cell_volume * np.sum(res**2))
    return float(num / np.sqrt(mass(u)))


def _check_compatible(prob: Problem, u: Field, op: RieszOperator) -> None:
    if op.grid != u.grid:
        raise ValueError("field grid does not match operator grid")
    if abs(op.alpha - prob.alpha) > 1e-14:
        raise ValueError(f"operator alpha {op.alpha} does not match problem alpha {prob.alpha}")
    if u.grid.dim != prob.dim:
        raise ValueError("field dimension does not match problem dimension")
