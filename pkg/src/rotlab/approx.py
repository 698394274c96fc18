"""
Second approximation around the pressureless velocity ``u1``.

The height-like variable solves the linear transport problem

    h2_t + u1.grad h2 + (gamma-1) (1/sigma + h2) div u1 = 0,

so ``w = (1/sigma + h2)**(1/(gamma-1))`` obeys a continuity equation, as does
the relative vorticity ``phi``.  Their ratio is constant along particle paths,
which turns ``h2`` into a closed-form pull-back (``transport_h2_exact``); the
pseudo-spectral integration (``transport_h2_numeric``) is kept as its oracle.

The corrected velocity is the frozen-height Duhamel solution of
``v_t + (1/sigma) grad h2 = J v / tau`` glued onto ``u1``:

    u2 = u1 - (tau/sigma) J (I - exp(tJ/tau)) E grad h2,    E = exp(sigma*S2),

with ``E = 1`` except for the ideal gas.  ``residual_R`` is the exact defect
of ``u2`` in ``u2_t + u1.grad u2 + (E/sigma) grad h2 - J u2/tau = R``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from rotlab.errors import CFLError, SubcriticalityError, VorticityDegeneracyError
from rotlab.params import FlowParams
from rotlab.pressureless import PressurelessFlow, _drift, _rotate, gradient_matrix
from rotlab.spectral import (
    ScalarField,
    TrigInterpolant,
    VectorField,
    save_snapshot,
    sobolev_norm_array,
)
from rotlab.transforms import check_vacuum, normalize_height


def _weight_exponent(params: FlowParams) -> float:
    return 1.0 if params.family == "rsw" else params.gamma - 1.0


def _flow(u0, params, flow):
    if flow is not None:
        return flow
    return PressurelessFlow(u0, params.tau)


def transport_h2_exact(h0: ScalarField, u0: VectorField, params: FlowParams, t: float,
                       flow: PressurelessFlow | None = None) -> ScalarField:
    """
    ``h2(t, .)`` on the grid from the conserved ratio along trajectories.

    ``(1/sigma + h2)(t, x(t)) = (1/sigma + h0)(x0) * (phi(t)/phi0)**(gamma-1)``
    with ``phi`` read off the Riccati gradient matrix.
    """
    flow = _flow(u0, params, flow)
    g = h0.grid
    x0, y0, _, M0 = flow.departure_points(t)
    h0_at = TrigInterpolant(g, h0.values)(x0, y0)[0]
    tau, sigma = params.tau, params.sigma
    zeta0 = M0[..., 1, 0] - M0[..., 0, 1]
    phi0 = 1.0 / tau + zeta0
    if np.any(np.abs(phi0) < 1e-12 / tau):
        raise VorticityDegeneracyError("relative vorticity vanishes at a departure point")
    M = gradient_matrix(M0, t, tau)
    zeta = M[..., 1, 0] - M[..., 0, 1]
    ratio_m1 = (zeta - zeta0) / phi0
    if np.any(ratio_m1 <= -1.0):
        raise VorticityDegeneracyError("relative vorticity changes sign along a trajectory")
    r_m1 = np.expm1(_weight_exponent(params) * np.log1p(ratio_m1))
    return ScalarField(g, h0_at * (1.0 + r_m1) + r_m1 / sigma)


def transport_S2(S0: ScalarField, u0: VectorField, params: FlowParams, t: float,
                 flow: PressurelessFlow | None = None) -> ScalarField:
    """Entropy carried unchanged along the closed-form trajectories."""
    flow = _flow(u0, params, flow)
    x0, y0, _, _ = flow.departure_points(t)
    return ScalarField(S0.grid, TrigInterpolant(S0.grid, S0.values)(x0, y0)[0])


def h2_rhs(grid, h, u1, params: FlowParams):
    """``-div(u1 w) - (k-1) w div u1`` with ``w = 1/sigma + h`` and ``k = gamma-1``."""
    k = _weight_exponent(params)
    flux = grid.dealias(u1 * h[None])
    divu = grid.div(u1)
    out = -grid.div(flux) - divu / params.sigma
    if k != 1.0:
        out -= (k - 1.0) * (divu / params.sigma + grid.dealias(h * divu))
    return out


class _StageVelocity:
    """``u1`` at RK stage times, warm-starting each flow-map inversion from the last."""

    def __init__(self, flow):
        self.flow = flow
        self._guess = None
        self._cache = {}

    def __call__(self, s):
        key = float(s)
        if key not in self._cache:
            if len(self._cache) > 4:
                self._cache.clear()
            px, py, u, _ = self.flow.departure_points(s, guess=self._guess)
            self._guess = (px, py)
            self._cache[key] = np.stack(_rotate(u[0], u[1], s / self.flow.tau))
        return self._cache[key]


def transport_h2_numeric(h0: ScalarField, u0: VectorField, params: FlowParams, t: float,
                         dt: float | None = None, flow: PressurelessFlow | None = None,
                         times=None):
    """
    Classical RK4 integration of the linear ``h2`` equation with ``u1`` supplied
    by :class:`PressurelessFlow` at each stage.

    ``dt`` defaults to ``tau/400`` and is checked against
    ``cfl * dx / max|u0|``.  If ``times`` is given (increasing, ending at or
    before ``t``), returns the fields at those times; each segment between
    output times is split into equal steps no longer than ``dt``.  Otherwise
    returns the field at ``t``.
    """
    flow = _flow(u0, params, flow)
    g = h0.grid
    dt = params.tau / 400.0 if dt is None else float(dt)
    umax = float(np.max(np.hypot(*u0.values)))
    if umax > 0:
        admissible = params.cfl * g.dx / umax
        if dt > admissible * (1 + 1e-12):
            raise CFLError(dt, admissible)
    targets = [float(t)] if times is None else [float(s) for s in times]
    if any(b < a for a, b in zip(targets, targets[1:])) or targets[0] < 0:
        raise ValueError("output times must be non-negative and increasing")
    u1_at = _StageVelocity(flow)
    h = np.array(h0.values)
    s = 0.0
    out = []
    for target in targets:
        nsteps = int(math.ceil((target - s) / dt - 1e-9))
        if nsteps > 0:
            step = (target - s) / nsteps
            for i in range(nsteps):
                t0 = s + i * step
                k1 = h2_rhs(g, h, u1_at(t0), params)
                um = u1_at(t0 + 0.5 * step)
                k2 = h2_rhs(g, h + 0.5 * step * k1, um, params)
                k3 = h2_rhs(g, h + 0.5 * step * k2, um, params)
                k4 = h2_rhs(g, h + step * k3, u1_at(t0 + step), params)
                h = h + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(h)):
                    raise FloatingPointError(f"h2 integration produced non-finite values at t={t0 + step:.6g}")
        s = target
        out.append(ScalarField(g, h))
    return out if times is not None else out[0]


def velocity_correction(grad_h, params: FlowParams, t: float, S2=None):
    """``-(tau/sigma) J (I - exp(tJ/tau)) E grad h`` on arrays of shape ``(2, n, n)``."""
    gx, gy = grad_h
    if S2 is not None:
        E = np.exp(params.sigma * np.asarray(S2))
        gx, gy = E * gx, E * gy
    dx, dy = _drift(gx, gy, t / params.tau)
    c = -params.tau / params.sigma
    return np.stack([c * dx, c * dy])


def build_u2(u1: VectorField, h2_gradient: VectorField, params: FlowParams, t: float,
             S2: ScalarField | None = None) -> VectorField:
    """Corrected velocity ``u2 = u1 - (tau/sigma) J (I - exp(tJ/tau)) E grad h2``."""
    S = None if S2 is None else S2.values
    corr = velocity_correction(h2_gradient.values, params, t, S)
    return VectorField.from_array(u1.grid, u1.values + corr)


def residual_array(grid, u1, h2, params: FlowParams, t: float, S2=None):
    M = grid.jacobian(u1)
    gh = grid.grad(h2)
    divu = grid.div(u1)
    k = params.gamma - 1.0 if params.family != "rsw" else 1.0
    tx = grid.dealias(M[0, 0] * gh[0] + M[1, 0] * gh[1])
    ty = grid.dealias(M[0, 1] * gh[0] + M[1, 1] * gh[1])
    q = divu / params.sigma + grid.dealias(h2 * divu)
    qx, qy = grid.grad(q)
    bx, by = tx + k * qx, ty + k * qy
    if S2 is not None:
        E = np.exp(params.sigma * np.asarray(S2))
        bx, by = grid.dealias(E * bx), grid.dealias(E * by)
    dx, dy = _drift(bx, by, t / params.tau)
    c = params.tau / params.sigma
    return np.stack([c * dx, c * dy])


def residual_R(u1: VectorField, h2: ScalarField, params: FlowParams, t: float,
               S2: ScalarField | None = None) -> VectorField:
    """
    Momentum defect of ``u2``:
    ``R = (tau/sigma) J (I - exp(tJ/tau)) E [(grad u1)^T grad h2 + (gamma-1) grad((1/sigma + h2) div u1)]``.
    """
    S = None if S2 is None else S2.values
    return VectorField.from_array(u1.grid, residual_array(u1.grid, u1.values, h2.values, params, t, S))


def duhamel_velocity(u0: VectorField, h_gradient: VectorField, params: FlowParams, t: float) -> VectorField:
    """
    Pressure branch of the splitting, ``v_t + (1/sigma) grad h = J v/tau``,
    solved with ``grad h`` frozen at its time-``t`` value.
    """
    rx, ry = _rotate(u0.values[0], u0.values[1], t / params.tau)
    corr = velocity_correction(h_gradient.values, params, t)
    return VectorField.from_array(u0.grid, np.stack([rx, ry]) + corr)


def exp_entropy_ratio(S: ScalarField, sigma: float, m: float) -> float:
    """``||exp(sigma S) - 1||_m / (sigma ||S||_m)``; bounded for bounded ``|S|_inf``."""
    g = S.grid
    num = sobolev_norm_array(g, np.expm1(sigma * S.values), m)
    den = sigma * sobolev_norm_array(g, S.values, m)
    return num / den


@dataclass(frozen=True, eq=False)
class ApproxSolution:
    h2: ScalarField
    p2: ScalarField
    u2: VectorField
    u1: VectorField
    t: float
    params: FlowParams
    S2: ScalarField | None = None

    def sidecar(self) -> dict:
        p = self.params
        return {"t": self.t, "tau": p.tau, "sigma": p.sigma, "gamma": p.gamma, "family": p.family}

    def save(self, stem):
        """Binary snapshot ``<stem>.bin`` (h2, p2, u2x, u2y[, S2]) plus JSON sidecar."""
        from pathlib import Path

        stem = Path(stem)
        fields = [self.h2, self.p2, self.u2.x, self.u2.y]
        if self.S2 is not None:
            fields.append(self.S2)
        bin_path = save_snapshot(stem.with_suffix(".bin"), fields)
        meta = dict(self.sidecar(), components=["h2", "p2", "u2x", "u2y"] + (["S2"] if self.S2 is not None else []))
        json_path = stem.with_suffix(".json")
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return bin_path, json_path


def approximate_solution(h0: ScalarField, u0: VectorField, params: FlowParams, t: float,
                         S0: ScalarField | None = None,
                         flow: PressurelessFlow | None = None) -> ApproxSolution:
    """Assemble ``(h2, p2, u2[, S2])`` at time ``t`` along the exact path."""
    check_vacuum(h0.values, params.sigma)
    flow = _flow(u0, params, flow)
    g = h0.grid
    h2 = transport_h2_exact(h0, u0, params, t, flow=flow)
    u1 = flow.velocity(t)
    S2 = None
    if params.has_entropy:
        if S0 is None:
            S0 = ScalarField(g, np.zeros((g.n, g.n)))
        S2 = transport_S2(S0, u0, params, t, flow=flow)
    gh = VectorField.from_array(g, np.stack(g.grad(h2.values)))
    u2 = build_u2(u1, gh, params, t, S2)
    p2 = normalize_height(h2, params.sigma, params.family, params.gamma)
    return ApproxSolution(h2=h2, p2=p2, u2=u2, u1=u1, t=float(t), params=params, S2=S2)


@dataclass
class VacuumReport:
    alpha0: float
    times: list = field(default_factory=list)
    min_depth: list = field(default_factory=list)
    p2_inf_ratio: list = field(default_factory=list)
    p2_sobolev_ratio: list = field(default_factory=list)

    @property
    def minimum(self) -> float:
        return float(min(self.min_depth)) if self.min_depth else float("nan")

    @property
    def vacuum_reached(self) -> bool:
        return any(not m > 0 for m in self.min_depth)


def vacuum_guard(h2_series, params: FlowParams, sobolev_index: float = 2.0) -> VacuumReport:
    """
    Track ``min(1 + sigma h2)`` and the ratios ``|p2|_inf / (1 + tau/sigma)``,
    ``||p2||_n / (1 + tau/sigma)`` over a series of ``(t, h2)`` pairs whose
    first entry is the initial datum.
    """
    series = list(h2_series)
    if not series:
        raise ValueError("empty h2 series")
    sigma = params.sigma
    alpha0 = check_vacuum(series[0][1].values, sigma)
    scale = 1.0 + params.tau / sigma
    rep = VacuumReport(alpha0=alpha0)
    for t, h2 in series:
        depth = float(np.min(1.0 + sigma * h2.values))
        rep.times.append(float(t))
        rep.min_depth.append(depth)
        if depth > 0:
            p2 = normalize_height(h2.values, sigma, params.family, params.gamma)
            rep.p2_inf_ratio.append(float(np.max(np.abs(p2))) / scale)
            rep.p2_sobolev_ratio.append(sobolev_norm_array(h2.grid, p2, sobolev_index) / scale)
        else:
            rep.p2_inf_ratio.append(float("nan"))
            rep.p2_sobolev_ratio.append(float("nan"))
    return rep


def require_subcritical(u0: VectorField, tau: float, flow_margin_min: float = 0.0):
    """Raise unless ``u0`` passes both threshold forms at ``tau``."""
    from rotlab.pressureless import threshold_analyze

    rep = threshold_analyze(u0, tau)
    if not rep.subcritical or rep.flow_margin <= flow_margin_min:
        raise SubcriticalityError(
            f"tau={tau}: margin={rep.margin:.4g}, flow margin={rep.flow_margin:.4g}"
        )
    return rep
