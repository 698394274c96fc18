"""
Closed-form pressureless rotating flow ``u_t + u.grad u = J u / tau``.

Particles move on circles: ``u(t, x(t)) = R(t) u0(x0)`` with
``R(t) = exp(tJ/tau)`` and ``x(t) = x0 + tau J (I - R(t)) u0(x0)``, so every
trajectory closes after ``2*pi*tau``.  The velocity gradient along a
trajectory solves ``M' + M^2 = J M / tau`` and is
``M(t) = R M0 (I + tau J (I - R) M0)^{-1}``; the matrix being inverted is the
Jacobian of the flow map ``x0 -> x(t)``.

Vectors on the grid are stored component-first, shape ``(2, n, n)``;
velocity-gradient matrices are ``M[i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from rotlab.errors import (
    FlowMapInversionError,
    SubcriticalityError,
    ThresholdBreakdownError,
)
from rotlab.spectral import ScalarField, TrigInterpolant, VectorField, require_finite

J = np.array([[0.0, 1.0], [-1.0, 0.0]])

#: relative vorticity is ``CURL_SIGN * (dv/dx - du/dy) + 1/tau``; the other
#: sign fails the continuity equation (checked in the test-suite).
CURL_SIGN = 1.0

SINGULAR_DET = 1e-12


def rotation(theta):
    """``exp(theta*J) = [[cos, sin], [-sin, cos]]``; broadcasts over ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)


def _rotate(vx, vy, theta):
    c, s = math.cos(theta), math.sin(theta)
    return c * vx + s * vy, -s * vx + c * vy


def _drift(vx, vy, theta):
    # J (I - exp(theta J)) v = (1 - cos) J v + sin v
    c, s = math.cos(theta), math.sin(theta)
    q = 1.0 - c
    return q * vy + s * vx, -q * vx + s * vy


def drift_matrix(theta):
    """``J (I - exp(theta*J))`` as a 2x2 array."""
    return J @ (np.eye(2) - rotation(theta))


# -- critical threshold -------------------------------------------------------


def _smallest_positive_root(A, B):
    """Smallest positive root of ``A tau^2 + B tau - 1 = 0``, elementwise; inf if none."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    out = np.full(np.broadcast(A, B).shape, np.inf)
    A, B = np.broadcast_arrays(A, B)
    lin = np.abs(A) <= 1e-14 * np.maximum(1.0, B * B)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lin & (B > 0), 1.0 / B, np.inf)
        out = np.where(lin, r, out)
        disc = B * B + 4.0 * A
        ok = ~lin & (disc >= 0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        q = -0.5 * (B + np.where(B >= 0, sq, -sq))
        r1 = np.where(ok & (A != 0), q / np.where(A != 0, A, 1.0), np.inf)
        r2 = np.where(ok & (q != 0), -1.0 / np.where(q != 0, q, 1.0), np.inf)
    r1 = np.where(r1 > 0, r1, np.inf)
    r2 = np.where(r2 > 0, r2, np.inf)
    return np.where(ok, np.minimum(r1, r2), out)


@dataclass(frozen=True, eq=False)
class ThresholdReport:
    """
    Pointwise critical-threshold diagnostics for initial velocity ``u0``.

    ``margin`` and ``tau_c`` use the stated criterion
    ``tau*omega0 + tau^2/2 * eta0sq < 1``.  ``flow_margin`` / ``tau_c_flow``
    use ``2*tau*omega0 + tau^2 * eta0sq < 1``, which is exactly the condition
    for the flow-map Jacobian of the pressureless system to stay nonsingular
    over a period; it is the one the Riccati solution actually obeys.
    """

    tau: float
    omega0: ScalarField
    eta0sq: ScalarField
    tau_c_map: np.ndarray
    margin: float
    tau_c: float
    extremal_point: tuple
    flow_margin: float
    tau_c_flow: float

    @property
    def subcritical(self) -> bool:
        return self.margin > 0.0

    @property
    def flow_subcritical(self) -> bool:
        return self.flow_margin > 0.0

    def to_dict(self) -> dict:
        def enc(v):
            return "inf" if math.isinf(v) else float(v)

        return {
            "tau": self.tau,
            "margin": self.margin,
            "tau_c": enc(self.tau_c),
            "subcritical": self.subcritical,
            "extremal_point": list(self.extremal_point),
            "flow_margin": self.flow_margin,
            "tau_c_flow": enc(self.tau_c_flow),
            "flow_subcritical": self.flow_subcritical,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def threshold_analyze(u0: VectorField, tau: float) -> ThresholdReport:
    require_finite(u0.values)
    grid = u0.grid
    M = grid.jacobian(u0.values)
    omega = M[0, 1] - M[1, 0]
    tr = M[0, 0] + M[1, 1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    eta2 = tr * tr - 4.0 * det
    margin_map = 1.0 - tau * omega - 0.5 * tau * tau * eta2
    flow_map = 1.0 - 2.0 * tau * omega - tau * tau * eta2
    tau_c_map = _smallest_positive_root(0.5 * eta2, omega)
    tau_c_flow = _smallest_positive_root(eta2, 2.0 * omega)
    i, j = np.unravel_index(int(np.argmin(margin_map)), margin_map.shape)
    return ThresholdReport(
        tau=float(tau),
        omega0=ScalarField(grid, omega),
        eta0sq=ScalarField(grid, eta2),
        tau_c_map=tau_c_map,
        margin=float(margin_map.min()),
        tau_c=float(tau_c_map.min()),
        extremal_point=(float(grid.x[i]), float(grid.x[j])),
        flow_margin=float(flow_map.min()),
        tau_c_flow=float(tau_c_flow.min()),
    )


# -- Lagrangian closed form ---------------------------------------------------


def trajectory_position(x0, u0_at_x0, t, tau):
    """Exact particle position ``x0 + tau J (I - exp(tJ/tau)) u0``; last axis is 2."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u0_at_x0, dtype=float)
    dx, dy = _drift(u[..., 0], u[..., 1], t / tau)
    return x0 + tau * np.stack([dx, dy], -1)


def lagrangian_velocity(u0_at_x0, t, tau):
    if tau <= 0:
        raise ValueError("tau must be > 0")
    u = np.asarray(u0_at_x0, dtype=float)
    vx, vy = _rotate(u[..., 0], u[..., 1], t / tau)
    return np.stack([vx, vy], -1)


def _jacobian_det(M0, t, tau):
    theta = np.asarray(t, dtype=float) / tau
    A = np.eye(2) + tau * np.matmul(drift_matrix(theta), M0)
    return A, A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def gradient_matrix(M0, t, tau):
    """
    Velocity gradient at time ``t`` along the trajectory starting with ``M0``.

    Broadcasts over leading axes of ``M0`` (shape ``(..., 2, 2)``) and over an
    array of times.  Raises :class:`ThresholdBreakdownError` once the flow-map
    Jacobian determinant falls below ``1e-12``.
    """
    M0 = np.asarray(M0, dtype=float)
    A, det = _jacobian_det(M0, t, tau)
    if np.any(det < SINGULAR_DET):
        k = np.unravel_index(int(np.argmin(det)), np.shape(det))
        tk = np.broadcast_to(np.asarray(t, dtype=float), np.shape(det))[k]
        Mk = np.broadcast_to(M0, np.shape(det) + (2, 2))[k]
        raise ThresholdBreakdownError(float(tk), Mk.copy(), float(det[k]))
    inv = np.empty_like(A)
    inv[..., 0, 0] = A[..., 1, 1]
    inv[..., 1, 1] = A[..., 0, 0]
    inv[..., 0, 1] = -A[..., 0, 1]
    inv[..., 1, 0] = -A[..., 1, 0]
    inv /= det[..., None, None]
    return np.matmul(rotation(np.asarray(t, dtype=float) / tau), np.matmul(M0, inv))


def first_singular_time(M0, tau):
    """
    Earliest ``t > 0`` at which the flow-map Jacobian of one trajectory is
    singular, from ``det = 1 - a + a cos(phi) + b sin(phi)``, ``phi = t/tau``,
    with ``a = tau*omega0 - 2 tau^2 det(M0)`` and ``b = tau*tr(M0)``.
    Returns ``None`` when the trajectory never breaks down.
    """
    M0 = np.asarray(M0, dtype=float)
    omega = M0[0, 1] - M0[1, 0]
    a = tau * omega - 2.0 * tau * tau * np.linalg.det(M0)
    b = tau * np.trace(M0)
    rho = math.hypot(a, b)
    if rho == 0.0 or abs(a - 1.0) > rho:
        return None
    psi = math.atan2(b, a)
    alpha = math.acos(max(-1.0, min(1.0, (a - 1.0) / rho)))
    cands = [psi + sgn * alpha + 2 * math.pi * k for sgn in (1, -1) for k in range(-1, 3)]
    phi = min(c for c in cands if c > 1e-14)
    return tau * phi


def singular_time_bisection(M0, tau, tol=1e-6, samples=4096):
    """First breakdown time of :func:`gradient_matrix` located by bisection on ``t``."""

    def breaks(t):
        try:
            gradient_matrix(M0, t, tau)
        except ThresholdBreakdownError:
            return True
        return False

    ts = np.linspace(0.0, 2 * math.pi * tau, samples + 1)[1:]
    hits = [t for t in ts if breaks(t)]
    if not hits:
        return None
    hi = hits[0]
    lo = hi - ts[0]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if breaks(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def critical_tau_bisection(M0, lo=1e-3, hi=10.0, tol=1e-5, samples=4096):
    """
    Smallest ``tau`` for which :func:`gradient_matrix` breaks down somewhere in
    one period, by bisection on ``tau``.  Assumes breakdown is monotone in tau.
    """

    M0 = np.asarray(M0, dtype=float)
    phis = np.linspace(0.0, 2 * math.pi, samples + 1)

    def breaks(tau):
        try:
            gradient_matrix(M0, phis * tau, tau)
        except ThresholdBreakdownError:
            return True
        return False

    if breaks(lo) or not breaks(hi):
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if breaks(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# -- Eulerian reconstruction --------------------------------------------------


class PressurelessFlow:
    """
    Pressureless solution generated by ``u0`` at Rossby number ``tau``.

    Holds a trigonometric interpolant of ``u0`` and its gradient so that the
    flow map can be inverted at any time.  Instances are read-only after
    construction and may be shared between threads.
    """

    def __init__(self, u0: VectorField, tau: float, check=True, tol=1e-12, method="newton"):
        require_finite(u0.values)
        if tau <= 0:
            raise ValueError("tau must be > 0")
        if check:
            rep = threshold_analyze(u0, tau)
            if not rep.subcritical:
                raise SubcriticalityError(
                    f"tau={tau} is not sub-critical (margin {rep.margin:.4g})"
                )
        self.u0 = u0
        self.tau = float(tau)
        self.grid = u0.grid
        self.tol = tol
        self.method = method
        g = self.grid
        ux, uy = u0.values
        gx = g.grad(ux)
        gy = g.grad(uy)
        self._interp = TrigInterpolant(g, [ux, uy, gx[0], gx[1], gy[0], gy[1]])

    def _eval(self, px, py):
        v = self._interp(px, py)
        M = np.empty(px.shape + (2, 2))
        M[..., 0, 0] = v[2]
        M[..., 0, 1] = v[3]
        M[..., 1, 0] = v[4]
        M[..., 1, 1] = v[5]
        return v[0], v[1], M

    def _residual(self, px, py, X, Y, theta):
        ux, uy, M = self._eval(px, py)
        dx, dy = _drift(ux, uy, theta)
        return px + self.tau * dx - X, py + self.tau * dy - Y, ux, uy, M

    def departure_points(self, t, targets=None, guess=None):
        """
        Solve ``x0 + tau J (I - R(t)) u0(x0) = x`` for every target ``x``.

        Newton with the analytic Jacobian ``I + tau J (I - R) grad u0``,
        seeded by one explicit step (or by ``guess``, e.g. the departure
        points of a nearby time); damped fixed-point iteration
        ``x0 <- x0 - 0.5 * residual`` takes over if Newton stalls.
        Returns ``(x0, y0, u0(x0), grad u0(x0))``.
        """
        if targets is None:
            X, Y = self.grid.mesh
        else:
            X, Y = targets
        theta = t / self.tau
        D = self.tau * drift_matrix(theta)
        if guess is None:
            ux, uy, _ = self._eval(X, Y)
            dx, dy = _drift(ux, uy, theta)
            px = X - self.tau * dx
            py = Y - self.tau * dy
        else:
            px, py = guess
        rx, ry, ux, uy, M = self._residual(px, py, X, Y, theta)
        err = np.maximum(np.abs(rx), np.abs(ry))
        it = 0
        if self.method == "newton":
            while err.max() > self.tol and it < 50:
                it += 1
                A = np.eye(2) + np.matmul(D, M)
                det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
                if np.any(np.abs(det) < SINGULAR_DET):
                    break
                sx = -(A[..., 1, 1] * rx - A[..., 0, 1] * ry) / det
                sy = -(-A[..., 1, 0] * rx + A[..., 0, 0] * ry) / det
                lam = np.ones_like(px)
                for _ in range(6):
                    nx, ny = px + lam * sx, py + lam * sy
                    nrx, nry, nux, nuy, nM = self._residual(nx, ny, X, Y, theta)
                    nerr = np.maximum(np.abs(nrx), np.abs(nry))
                    worse = nerr > err
                    if not worse.any():
                        break
                    lam = np.where(worse, 0.5 * lam, lam)
                if np.all(nerr >= err) and err.max() > self.tol:
                    break
                keep = nerr <= err
                px = np.where(keep, nx, px)
                py = np.where(keep, ny, py)
                rx = np.where(keep, nrx, rx)
                ry = np.where(keep, nry, ry)
                ux = np.where(keep, nux, ux)
                uy = np.where(keep, nuy, uy)
                M = np.where(keep[..., None, None], nM, M)
                err = np.minimum(nerr, err)
        fp = 0
        while err.max() > self.tol and fp < 200:
            fp += 1
            px = px - 0.5 * rx
            py = py - 0.5 * ry
            rx, ry, ux, uy, M = self._residual(px, py, X, Y, theta)
            err = np.maximum(np.abs(rx), np.abs(ry))
        if not err.max() <= self.tol:
            raise FlowMapInversionError(float(np.nanmax(err)), it + fp)
        return px, py, np.stack([ux, uy]), M

    def velocity(self, t) -> VectorField:
        _, _, u, _ = self.departure_points(t)
        vx, vy = _rotate(u[0], u[1], t / self.tau)
        return VectorField(ScalarField(self.grid, vx), ScalarField(self.grid, vy))

    def velocity_array(self, t):
        _, _, u, _ = self.departure_points(t)
        return np.stack(_rotate(u[0], u[1], t / self.tau))

    def gradient(self, t):
        """Velocity gradient on the grid via the Riccati formula, shape ``(n, n, 2, 2)``."""
        _, _, _, M0 = self.departure_points(t)
        return gradient_matrix(M0, t, self.tau)


def eulerian_velocity(u0: VectorField, t: float, tau: float) -> VectorField:
    """Pressureless velocity ``u1(t, .)`` on the grid of ``u0``."""
    return PressurelessFlow(u0, tau).velocity(t)


def relative_vorticity(u1: VectorField, tau: float, sign: float = CURL_SIGN) -> ScalarField:
    """``phi = sign * (d u2/dx - d u1/dy) + 1/tau``; transported like a density."""
    g = u1.grid
    curl = g.diff(u1.y.values, 0) - g.diff(u1.x.values, 1)
    return ScalarField(g, sign * curl + 1.0 / tau)


def continuity_defect(flow: PressurelessFlow, t: float, h=None, sign: float = CURL_SIGN) -> float:
    """``max |d_t phi + div(u1 phi)|`` at time ``t``, time derivative by 4th-order differences."""
    g = flow.grid
    h = h if h is not None else 1e-3 * flow.tau

    def phi(s):
        return relative_vorticity(flow.velocity(s), flow.tau, sign).values

    dphi = (-phi(t + 2 * h) + 8 * phi(t + h) - 8 * phi(t - h) + phi(t - 2 * h)) / (12 * h)
    u = flow.velocity_array(t)
    ph = relative_vorticity(VectorField.from_array(g, u), flow.tau, sign).values
    return float(np.max(np.abs(dphi + g.div(u * ph))))


@dataclass(frozen=True)
class PeriodBounds:
    amplitude_norm: float
    sup_grad: float
    sup_sobolev: float
    times: np.ndarray


def period_bounds(u0: VectorField, tau: float, m: float = 3, samples: int = 16) -> PeriodBounds:
    """Sup over one period of ``|grad u1|_inf`` and ``||u1||_m`` at sampled times."""
    from rotlab.spectral import grad_linf_array, sobolev_norm_array

    flow = PressurelessFlow(u0, tau)
    g = u0.grid
    times = np.linspace(0.0, 2 * math.pi * tau, samples, endpoint=False)
    grads, norms = [], []
    for t in times:
        u = flow.velocity_array(t)
        grads.append(grad_linf_array(g, u))
        norms.append(math.hypot(sobolev_norm_array(g, u[0], m), sobolev_norm_array(g, u[1], m)))
    u0n = math.hypot(sobolev_norm_array(g, u0.values[0], m), sobolev_norm_array(g, u0.values[1], m))
    return PeriodBounds(u0n, max(grads), max(norms), times)
