"""
Pseudo-spectral RK4 solver for the symmetrized rotating systems on the torus.

With ``c = sqrt(gamma-1)``, ``a = sqrt(gamma-1)/2`` and ``E = exp(sigma*S)``
(``E = 1`` without entropy) the unknown ``U = (p, u[, S])`` evolves by

    p_t + u.grad p + c (1/sigma + a p) div u       = 0
    u_t + u.grad u + c E (1/sigma + a p) grad p    = J u / tau
    S_t + u.grad S                                 = 0

Shallow water is ``c = 1``, ``a = 1/2``.  The ideal-gas line is the
entropy-weighted symmetric form with the weight ``exp(sigma*S)`` on the
``p`` row divided out.  All nonlinear products are dealiased with the
two-thirds rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rotlab.errors import CFLError, GridMismatchError
from rotlab.params import FlowParams
from rotlab.reports import RunReport
from rotlab.spectral import (
    ScalarField,
    TorusGrid,
    VectorField,
    grad_linf_array,
    require_finite,
    sobolev_norm_array,
)
from rotlab.transforms import check_vacuum, denormalize, height_to_density, normalize_height


@dataclass(frozen=True)
class SolverOptions:
    """Switches for reduced dynamics and the breakdown proxy."""

    rotation: bool = True
    pressure: bool = True
    advection: bool = True
    breakdown_factor: float = 1e3


@dataclass(frozen=True, eq=False)
class FlowState:
    """
    Symmetrized unknown packed as ``U[0] = p``, ``U[1:3] = u``, ``U[3] = S``.

    ``broken_down`` is set by :func:`integrate` together with ``t_break``;
    only then may ``U`` hold non-finite values.
    """

    U: np.ndarray
    t: float
    params: FlowParams
    broken_down: bool = False
    t_break: float | None = None

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        k = 4 if self.params.has_entropy else 3
        if U.ndim != 3 or U.shape[0] != k or U.shape[1] != U.shape[2]:
            raise GridMismatchError(f"state must have shape ({k}, n, n), got {U.shape}")
        if not self.broken_down:
            require_finite(U)
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.U.shape[-1])

    @property
    def p(self) -> ScalarField:
        return ScalarField(self.grid, self.U[0])

    @property
    def u(self) -> VectorField:
        return VectorField.from_array(self.grid, self.U[1:3])

    @property
    def S(self) -> ScalarField | None:
        return ScalarField(self.grid, self.U[3]) if self.params.has_entropy else None

    @property
    def h(self) -> ScalarField:
        pr = self.params
        return ScalarField(self.grid, denormalize(self.U[0], pr.sigma, pr.family, pr.gamma))

    @classmethod
    def from_height(cls, h0: ScalarField, u0: VectorField, params: FlowParams,
                    S0: ScalarField | None = None, t: float = 0.0) -> "FlowState":
        """Build ``U`` from height-like data; raises ``VacuumError`` on vacuum."""
        if h0.grid != u0.grid:
            raise GridMismatchError("height and velocity live on different grids")
        p = normalize_height(h0.values, params.sigma, params.family, params.gamma)
        parts = [p[None], u0.values]
        if params.has_entropy:
            S = np.zeros_like(p) if S0 is None else S0.values
            parts.append(np.asarray(S)[None])
        return cls(np.concatenate(parts), t, params)


def wave_coefficients(params: FlowParams) -> tuple[float, float]:
    """``(c, a)`` of the symmetrized system."""
    if params.family == "rsw":
        return 1.0, 0.5
    return params.c_gamma, params.a_gamma


def rhs_array(grid: TorusGrid, U, params: FlowParams, options: SolverOptions = SolverOptions()):
    """Time derivative of the packed state ``U``."""
    sigma = params.sigma
    c, a = wave_coefficients(params)
    p, ux, uy = U[0], U[1], U[2]
    px, py = grid.grad(p)
    M = grid.jacobian(U[1:3])
    divu = M[0, 0] + M[1, 1]
    out = np.zeros_like(U)
    if options.advection:
        out[0] = -(ux * px + uy * py)
        out[1] = -(ux * M[0, 0] + uy * M[0, 1])
        out[2] = -(ux * M[1, 0] + uy * M[1, 1])
    if options.pressure:
        out[0] -= (c * a) * (p * divu)
        # nonlinear part of c E (1/sigma + a p) grad p; the c/sigma grad p part is added below
        if params.has_entropy:
            coef = c * (np.expm1(sigma * U[3]) * (1.0 / sigma + a * p) + a * p)
        else:
            coef = (c * a) * p
        out[1] -= coef * px
        out[2] -= coef * py
    out[0] = grid.dealias(out[0])
    out[1] = grid.dealias(out[1])
    out[2] = grid.dealias(out[2])
    if options.pressure:
        out[0] -= (c / sigma) * divu
        out[1] -= (c / sigma) * px
        out[2] -= (c / sigma) * py
    if options.rotation:
        out[1] += uy / params.tau
        out[2] -= ux / params.tau
    if params.has_entropy:
        if options.advection:
            Sx, Sy = grid.grad(U[3])
            out[3] = grid.dealias(-(ux * Sx + uy * Sy))
    return out


def rhs(state: FlowState, options: SolverOptions = SolverOptions()) -> np.ndarray:
    """Time derivative of ``state.U``; raises on non-finite input."""
    require_finite(state.U)
    return rhs_array(state.grid, state.U, state.params, options)


def rhs_height(grid: TorusGrid, V, params: FlowParams, options: SolverOptions = SolverOptions()):
    """
    Height-form right-hand side for ``V = (h, u[, S])``:
    ``h_t + u.grad h + (gamma-1)(1/sigma + h) div u = 0`` and
    ``u_t + u.grad u + (E/sigma) grad h = J u / tau``.
    """
    sigma = params.sigma
    k = 1.0 if params.family == "rsw" else params.gamma - 1.0
    h, ux, uy = V[0], V[1], V[2]
    hx, hy = grid.grad(h)
    M = grid.jacobian(V[1:3])
    divu = M[0, 0] + M[1, 1]
    out = np.zeros_like(V)
    if options.advection:
        out[0] = -(ux * hx + uy * hy)
        out[1] = -(ux * M[0, 0] + uy * M[0, 1])
        out[2] = -(ux * M[1, 0] + uy * M[1, 1])
    if options.pressure:
        out[0] -= k * (h * divu)
        if params.has_entropy:
            Em1 = np.expm1(sigma * V[3])
            out[1] -= Em1 * hx / sigma
            out[2] -= Em1 * hy / sigma
    out[0] = grid.dealias(out[0])
    out[1] = grid.dealias(out[1])
    out[2] = grid.dealias(out[2])
    if options.pressure:
        out[0] -= (k / sigma) * divu
        out[1] -= hx / sigma
        out[2] -= hy / sigma
    if options.rotation:
        out[1] += uy / params.tau
        out[2] -= ux / params.tau
    if params.has_entropy and options.advection:
        Sx, Sy = grid.grad(V[3])
        out[3] = grid.dealias(-(ux * Sx + uy * Sy))
    return out


def skew_operator(grid: TorusGrid, U, params: FlowParams):
    """
    Constant-coefficient linear part ``K[U] = (c/sigma div u, c/sigma grad p - J u/tau)``
    of the shallow-water / isentropic system, entropy row zero.
    """
    c, _ = wave_coefficients(params)
    out = np.zeros_like(U)
    px, py = grid.grad(U[0])
    out[0] = (c / params.sigma) * grid.div(U[1:3])
    out[1] = (c / params.sigma) * px - U[2] / params.tau
    out[2] = (c / params.sigma) * py + U[1] / params.tau
    return out


def inner(grid: TorusGrid, A, B) -> float:
    return grid.quadrature(np.sum(A * B, axis=0))


def wave_speed(U, params: FlowParams, options: SolverOptions = SolverOptions()) -> float:
    """
    Bound on ``max|u| + c_max`` where ``c_max`` is the pressure coefficient
    ``c (1/sigma + a max|p|)``, scaled by ``max(1, max E)`` for the ideal gas.
    """
    umax = float(np.max(np.hypot(U[1], U[2]))) if options.advection else 0.0
    if not options.pressure:
        return umax
    c, a = wave_coefficients(params)
    cmax = c * (1.0 / params.sigma + a * float(np.max(np.abs(U[0]))))
    if params.has_entropy:
        cmax *= max(1.0, float(np.exp(params.sigma * np.max(U[3]))))
    return umax + cmax


def admissible_dt(state: FlowState, options: SolverOptions = SolverOptions()) -> float:
    """
    ``cfl * min(dx / (max|u| + c_max), tau)``.  The ``tau`` cap keeps the
    rotation term inside the RK4 stability region.
    """
    pr = state.params
    speed = wave_speed(state.U, pr, options)
    limits = []
    if speed > 0:
        limits.append(state.grid.dx / speed)
    if options.rotation:
        limits.append(pr.tau)
    return pr.cfl * min(limits) if limits else math.inf


def _rk4(grid, U, dt, params, options, f=rhs_array):
    k1 = f(grid, U, params, options)
    k2 = f(grid, U + 0.5 * dt * k1, params, options)
    k3 = f(grid, U + 0.5 * dt * k2, params, options)
    k4 = f(grid, U + dt * k3, params, options)
    return U + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state: FlowState, dt: float, options: SolverOptions = SolverOptions(),
         check_cfl: bool = True) -> FlowState:
    """One classical RK4 step; refuses ``dt`` above :func:`admissible_dt`."""
    if check_cfl:
        limit = admissible_dt(state, options)
        if dt > limit * (1.0 + 1e-12):
            raise CFLError(dt, limit)
    U = _rk4(state.grid, state.U, dt, state.params, options)
    return FlowState(U, state.t + dt, state.params, broken_down=not np.all(np.isfinite(U)),
                     t_break=None if np.all(np.isfinite(U)) else state.t + dt)


def integrate_height(grid: TorusGrid, V0, params: FlowParams, t_end: float, dt: float,
                     options: SolverOptions = SolverOptions()):
    """Fixed-step RK4 in the height variables; cross-check path only."""
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    h = t_end / n
    V = np.array(V0, dtype=float)
    for _ in range(n):
        V = _rk4(grid, V, h, params, options, rhs_height)
    return V


@dataclass
class Diagnostics:
    mass: float
    entropy_mass: float
    energy: float
    grad: float
    min_depth: float
    p_inf: float
    u_inf: float


def diagnostics(state: FlowState) -> Diagnostics:
    """Conserved integrals and pointwise extremes of ``state``."""
    g = state.grid
    pr = state.params
    U = state.U
    h = denormalize(U[0], pr.sigma, pr.family, pr.gamma)
    depth = 1.0 + pr.sigma * h
    if pr.family == "rsw":
        rho = h
    else:
        rho = height_to_density(h, pr.sigma, pr.gamma)
    ent = g.quadrature((1.0 + pr.sigma * rho) * U[3]) if pr.has_entropy else 0.0
    energy = 0.5 * g.quadrature(np.sum(U**2, axis=0))
    return Diagnostics(
        mass=g.quadrature(rho),
        entropy_mass=ent,
        energy=energy,
        grad=grad_linf_array(g, U[1:3]),
        min_depth=float(np.min(depth)),
        p_inf=float(np.max(np.abs(U[0]))),
        u_inf=float(np.max(np.hypot(U[1], U[2]))),
    )


def integrate(state: FlowState, t_end: float, dt: float | None = None,
              options: SolverOptions = SolverOptions(), samples=None,
              kind: str = "simulate") -> tuple[FlowState, RunReport]:
    """
    Integrate to ``t_end`` with RK4.

    ``dt=None`` picks :func:`admissible_dt` every step; a fixed ``dt`` is
    checked against it.  Steps are shortened to land on every time in
    ``samples`` (default: start and end), where a row of diagnostics is
    recorded.  Integration halts with ``broken_down`` set at the first step
    that produces non-finite values or lifts ``grad_linf`` above
    ``breakdown_factor`` times its initial value.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the state's time")
    g = state.grid
    pr = state.params
    check_vacuum(denormalize(state.U[0], pr.sigma, pr.family, pr.gamma), pr.sigma)
    marks = sorted({float(t_end), *(float(s) for s in ([] if samples is None else samples) if state.t < s <= t_end)})
    report = RunReport(kind=kind, meta={"params": pr.to_dict(), "options": options.__dict__.copy()})
    d0 = diagnostics(state)
    ref = d0.grad if d0.grad > 0 else 1.0
    limit = options.breakdown_factor * ref

    def record(st, d):
        report.add_row(t=st.t, grad=d.grad, min_depth=d.min_depth, mass=d.mass,
                       entropy_mass=d.entropy_mass, energy=d.energy, p_inf=d.p_inf, u_inf=d.u_inf)

    record(state, d0)
    U = np.array(state.U)
    t = state.t
    broken = False
    t_break = None
    steps = 0
    for mark in marks:
        while t < mark - 1e-14 * max(1.0, abs(mark)):
            current = FlowState(U, t, pr)
            limit_dt = admissible_dt(current, options)
            if dt is None:
                h = min(limit_dt, mark - t)
            else:
                if dt > limit_dt * (1.0 + 1e-12):
                    raise CFLError(dt, limit_dt)
                h = min(dt, mark - t)
            U = _rk4(g, U, h, pr, options)
            t = t + h
            steps += 1
            if not np.all(np.isfinite(U)):
                broken, t_break = True, t
                break
            if grad_linf_array(g, U[1:3]) > limit:
                broken, t_break = True, t
                break
        if broken:
            break
        t = mark
        st = FlowState(U, t, pr)
        record(st, diagnostics(st))
    final = FlowState(U, t, pr, broken_down=broken, t_break=t_break)
    report.scalars.update({
        "t_end": float(t_end),
        "steps": steps,
        "broken_down": broken,
        "t_break": t_break if t_break is not None else float("nan"),
        "breakdown_factor": options.breakdown_factor,
        "initial_grad": d0.grad,
    })
    return final, report


def breakdown_time(state0: FlowState, t_max: float, options: SolverOptions = SolverOptions(),
                   dt: float | None = None) -> float | None:
    """First time the breakdown proxy fires before ``t_max``, else ``None``."""
    final, _ = integrate(state0, t_max, dt=dt, options=options, kind="breakdown")
    return final.t_break if final.broken_down else None


@dataclass
class ErrorRecord:
    s: float
    p: float
    u: float
    h: float
    S: float | None = None

    def to_dict(self) -> dict:
        d = {"s": self.s, "p": self.p, "u": self.u, "h": self.h}
        if self.S is not None:
            d["S"] = self.S
        return d

    @property
    def total(self) -> float:
        """``||U - U2||_s`` over the symmetrized components."""
        parts = [self.p, self.u] + ([self.S] if self.S is not None else [])
        return float(math.sqrt(sum(x * x for x in parts)))


def compare_to_approx(state: FlowState, approx, s: float = 1.0) -> ErrorRecord:
    """Sobolev distances between the solver state and an ``ApproxSolution``."""
    g = state.grid
    if approx.h2.grid != g:
        raise GridMismatchError(f"state grid n={g.n} vs approximation n={approx.h2.grid.n}")
    if approx.params != state.params:
        raise GridMismatchError("state and approximation carry different parameters")
    dp = sobolev_norm_array(g, state.U[0] - approx.p2.values, s)
    du = state.U[1:3] - approx.u2.values
    eu = math.hypot(sobolev_norm_array(g, du[0], s), sobolev_norm_array(g, du[1], s))
    dh = sobolev_norm_array(g, state.h.values - approx.h2.values, s)
    dS = None
    if state.params.has_entropy:
        dS = sobolev_norm_array(g, state.U[3] - approx.S2.values, s)
    return ErrorRecord(s=float(s), p=dp, u=eu, h=dh, S=dS)


__all__ = [
    "FlowState",
    "SolverOptions",
    "ErrorRecord",
    "Diagnostics",
    "rhs",
    "rhs_array",
    "rhs_height",
    "skew_operator",
    "inner",
    "wave_speed",
    "wave_coefficients",
    "admissible_dt",
    "step",
    "integrate",
    "integrate_height",
    "diagnostics",
    "breakdown_time",
    "compare_to_approx",
]
