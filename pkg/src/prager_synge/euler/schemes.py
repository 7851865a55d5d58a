"""Explicit update kernels for the scheme roster.

All kernels act on padded arrays ``U[4, ny + 2G, nx + 2G]`` whose ghost layers
have been filled by the caller's boundary operator.  ``step`` returns the new
padded state (ghosts stale) and the time-integrated net mass/momentum/energy
inflow through the domain boundary (zeros for the non-conservative kernels
where that bookkeeping is not tracked).
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .physics import flux_x, flux_y, muscl_hllc_x, primitive, steger_warming

G = 2  # ghost layers


class SchemeId(str, Enum):
    S1 = "S1"
    S2H = "S2H"
    MC = "MC"
    MC1 = "MC1"
    MC2 = "MC2"
    MC4 = "MC4"
    LW = "LW"

    @property
    def mu(self) -> float:
        return {"MC1": 0.01, "MC2": 0.002, "MC4": 0.01, "LW": 0.01}.get(self.value, 0.0)

    @property
    def viscosity_order(self) -> int:
        return {"MC1": 2, "MC2": 2, "MC4": 4, "LW": 2}.get(self.value, 0)

    @property
    def default_cfl(self) -> float:
        return 0.45 if self.value in ("S1", "S2H") else 0.8

    @property
    def conservative_flux(self) -> bool:
        return self.value in ("S1", "S2H", "LW")


ROSTER = tuple(SchemeId)


def interior(U):
    return U[:, G:-G, G:-G]


def _boundary_inflow(Fx, Gy, hx, hy):
    return (Fx[:, :, 0].sum(axis=1) - Fx[:, :, -1].sum(axis=1)) * hy + \
        (Gy[:, 0, :].sum(axis=1) - Gy[:, -1, :].sum(axis=1)) * hx


def _divergence(Fx, Gy, hx, hy):
    return (Fx[:, :, 1:] - Fx[:, :, :-1]) / hx + (Gy[:, 1:, :] - Gy[:, :-1, :]) / hy


def spectral_radii(U, gamma):
    rho, u, v, p = primitive(U, gamma)
    c = np.sqrt(gamma * p / rho)
    return np.abs(u) + c, np.abs(v) + c


# -- face fluxes of the conservative schemes ----------------------------------------

def _faces_s1(U, gamma):
    rho, u, v, p = primitive(U, gamma)
    r = slice(G, -G)
    # x faces between padded columns G-1 .. G+nx
    W = (rho[r], u[r], v[r], p[r])
    Fp = steger_warming(*W, gamma, +1)
    Fm = steger_warming(*W, gamma, -1)
    Fx = Fp[:, :, G - 1:-G] + Fm[:, :, G:-G + 1 or None]
    Wy = tuple(a[:, r] for a in (rho, v, u, p))
    Gp = steger_warming(*Wy, gamma, +1)[[0, 2, 1, 3]]
    Gm = steger_warming(*Wy, gamma, -1)[[0, 2, 1, 3]]
    Gy = Gp[:, G - 1:-G, :] + Gm[:, G:-G + 1 or None, :]
    return Fx, Gy


def _faces_muscl_hllc(U, gamma, limiter):
    W = np.stack(primitive(U, gamma))
    Fx = muscl_hllc_x(W[:, G:-G, :], gamma, limiter)
    # y faces: swap the velocity components and transpose so rows become columns
    Wt = np.ascontiguousarray(W[[0, 2, 1, 3]][:, :, G:-G].transpose(0, 2, 1))
    Gy = muscl_hllc_x(Wt, gamma, limiter)[[0, 2, 1, 3]].transpose(0, 2, 1)
    return Fx, Gy


def _viscous_faces(U, gamma, mu, order):
    """Artificial-viscosity fluxes ``-mu * lambda_face * (jump)`` on x and y
    faces; the fourth-order form uses third differences."""
    lx, ly = spectral_radii(U, gamma)
    r = slice(G, -G)
    if order == 2:
        jx = U[:, r, G:-G + 1 or None] - U[:, r, G - 1:-G]
        jy = U[:, G:-G + 1 or None, r] - U[:, G - 1:-G, r]
    else:
        Ur = U[:, r, :]
        jx = Ur[:, :, 3:] - 3.0 * Ur[:, :, 2:-1] + 3.0 * Ur[:, :, 1:-2] - Ur[:, :, :-3]
        Uc = U[:, :, r]
        jy = Uc[:, 3:, :] - 3.0 * Uc[:, 2:-1, :] + 3.0 * Uc[:, 1:-2, :] - Uc[:, :-3, :]
        jx, jy = -jx, -jy
    lfx = np.maximum(lx[r, G - 1:-G], lx[r, G:-G + 1 or None])
    lfy = np.maximum(ly[G - 1:-G, r], ly[G:-G + 1 or None, r])
    return -mu * lfx * jx, -mu * lfy * jy


# -- schemes -------------------------------------------------------------------------

class Scheme:
    """Base kernel; subclasses provide ``step``."""

    def __init__(self, sid: SchemeId, gamma: float, hx: float, hy: float, limiter: str = "minmod"):
        self.sid = sid
        self.gamma = gamma
        self.hx = hx
        self.hy = hy
        self.limiter = limiter

    def residual(self, U, dt, bc=None):
        """Steady residual: the per-unit-time interior update with no source."""
        Un, _ = self.step(U, dt, None, bc)
        return (interior(Un) - interior(U)) / dt

    def _finish(self, U, dU, dt, source):
        Un = U.copy()
        upd = dt * dU
        if source is not None:
            upd = upd + dt * source
        Un[:, G:-G, G:-G] += upd
        return Un


class FluxScheme(Scheme):
    def faces(self, U):
        raise NotImplementedError

    def residual(self, U, dt=None, bc=None):
        Fx, Gy = self.faces(U)
        return -_divergence(Fx, Gy, self.hx, self.hy)


class S1(FluxScheme):
    """First-order characteristic flux-vector splitting, forward Euler."""

    def faces(self, U):
        return _faces_s1(U, self.gamma)

    def step(self, U, dt, source, bc):
        Fx, Gy = self.faces(U)
        Un = self._finish(U, -_divergence(Fx, Gy, self.hx, self.hy), dt, source)
        return Un, dt * _boundary_inflow(Fx, Gy, self.hx, self.hy)


class S2H(FluxScheme):
    """MUSCL reconstruction of primitive variables + HLLC, SSP-RK2 in time."""

    def faces(self, U):
        return _faces_muscl_hllc(U, self.gamma, self.limiter)

    def step(self, U, dt, source, bc):
        Fx, Gy = self.faces(U)
        U1 = self._finish(U, -_divergence(Fx, Gy, self.hx, self.hy), dt, source)
        if bc is not None:
            bc(U1)
        Fx1, Gy1 = self.faces(U1)
        dU = -0.5 * (_divergence(Fx, Gy, self.hx, self.hy) + _divergence(Fx1, Gy1, self.hx, self.hy))
        Un = self._finish(U, dU, dt, source)
        inflow = 0.5 * dt * (_boundary_inflow(Fx, Gy, self.hx, self.hy) + _boundary_inflow(Fx1, Gy1, self.hx, self.hy))
        return Un, inflow


class MacCormack(Scheme):
    """Unsplit one-sided predictor/corrector with optional 2nd- or
    4th-order artificial viscosity."""

    def _cell_fluxes(self, U):
        W = primitive(U, self.gamma)
        return flux_x(*W, self.gamma), flux_y(*W, self.gamma)

    def step(self, U, dt, source, bc):
        # Predictor: forward in x, backward in y; the corrector reverses both.
        # Same-direction sweeps let the Edney-I shear layer grow unboundedly
        # when no viscosity is present.
        hx, hy = self.hx, self.hy
        r = slice(G, -G)
        fwd = (slice(G + 1, -G + 1), r)
        bwd = (r, slice(G - 1, -G - 1))
        F, Gf = self._cell_fluxes(U)
        d1 = (F[:, r, fwd[0]] - F[:, r, fwd[1]]) / hx + (Gf[:, bwd[0], r] - Gf[:, bwd[1], r]) / hy
        Up = U.copy()
        Up[:, r, r] -= dt * d1
        if bc is not None:
            bc(Up)
        Fp, Gp = self._cell_fluxes(Up)
        d2 = (Fp[:, r, bwd[0]] - Fp[:, r, bwd[1]]) / hx + (Gp[:, fwd[0], r] - Gp[:, fwd[1], r]) / hy
        dU = -0.5 * (d1 + d2)
        if self.sid.mu > 0:
            Vx, Vy = _viscous_faces(U, self.gamma, self.sid.mu, self.sid.viscosity_order)
            dU = dU - _divergence(Vx, Vy, hx, hy)
        return self._finish(U, dU, dt, source), np.zeros(4)


class LaxWendroff(Scheme):
    """Two-step (Richtmyer) Lax-Wendroff: half-step face states with central
    transverse terms, then a conservative flux update; 2nd-order viscosity."""

    def faces(self, U, dt):
        g = self.gamma
        hx, hy = self.hx, self.hy
        W = primitive(U, g)
        F = flux_x(*W, g)
        Gf = flux_y(*W, g)
        r = slice(G, -G)
        # x faces between columns G-1..G+nx, rows interior
        cl, cr = slice(G - 1, -G), slice(G, -G + 1 or None)
        Ux = 0.5 * (U[:, r, cl] + U[:, r, cr]) - 0.5 * dt / hx * (F[:, r, cr] - F[:, r, cl])
        Ux -= 0.125 * dt / hy * ((Gf[:, G + 1:-G + 1, cl] - Gf[:, G - 1:-G - 1, cl])
                                 + (Gf[:, G + 1:-G + 1, cr] - Gf[:, G - 1:-G - 1, cr]))
        rb, rt = slice(G - 1, -G), slice(G, -G + 1 or None)
        Uy = 0.5 * (U[:, rb, r] + U[:, rt, r]) - 0.5 * dt / hy * (Gf[:, rt, r] - Gf[:, rb, r])
        Uy -= 0.125 * dt / hx * ((F[:, rb, G + 1:-G + 1] - F[:, rb, G - 1:-G - 1])
                                 + (F[:, rt, G + 1:-G + 1] - F[:, rt, G - 1:-G - 1]))
        Fx = flux_x(*primitive(Ux, g), g)
        Gy = flux_y(*primitive(Uy, g), g)
        Vx, Vy = _viscous_faces(U, g, self.sid.mu, 2)
        return Fx + Vx, Gy + Vy

    def step(self, U, dt, source, bc):
        Fx, Gy = self.faces(U, dt)
        Un = self._finish(U, -_divergence(Fx, Gy, self.hx, self.hy), dt, source)
        return Un, dt * _boundary_inflow(Fx, Gy, self.hx, self.hy)


def make_scheme(sid: SchemeId, gamma: float, hx: float, hy: float, limiter: str = "minmod") -> Scheme:
    sid = SchemeId(sid)
    cls = {"S1": S1, "S2H": S2H, "LW": LaxWendroff}.get(sid.value, MacCormack)
    return cls(sid, gamma, hx, hy, limiter)
