"""Pointwise Euler kernels on numpy arrays with the component axis first."""
import numba
import numpy as np


def primitive(U, gamma):
    rho = U[0]
    u = U[1] / rho
    v = U[2] / rho
    p = (gamma - 1.0) * (U[3] - 0.5 * rho * (u * u + v * v))
    return rho, u, v, p


def conserved(rho, u, v, p, gamma):
    return np.stack([rho, rho * u, rho * v, p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)])


def flux_x(rho, u, v, p, gamma):
    """Normal flux through a face whose normal is +x; for the y direction call
    with ``(rho, v, u, p)`` and swap the two momentum rows of the result."""
    E = p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    m = rho * u
    return np.stack([m, m * u + p, m * v, u * (E + p)])


def flux_y(rho, u, v, p, gamma):
    return _swap(flux_x(rho, v, u, p, gamma))


def _swap(F):
    return F[[0, 2, 1, 3]]


def steger_warming(rho, u, v, p, gamma, sign):
    """Positive (``sign=+1``) or negative part of the split x-flux, built from
    the upwinded characteristic speeds u - c, u, u + c."""
    c = np.sqrt(gamma * p / rho)
    l1, l2, l3 = u - c, u, u + c
    if sign > 0:
        l1, l2, l3 = np.maximum(l1, 0.0), np.maximum(l2, 0.0), np.maximum(l3, 0.0)
    else:
        l1, l2, l3 = np.minimum(l1, 0.0), np.minimum(l2, 0.0), np.minimum(l3, 0.0)
    g1 = gamma - 1.0
    a = 2.0 * g1 * l2 + l1 + l3
    w = (3.0 - gamma) * (l1 + l3) * c * c / (2.0 * g1)
    k = rho / (2.0 * gamma)
    return k * np.stack([
        a,
        (u - c) * l1 + 2.0 * g1 * u * l2 + (u + c) * l3,
        v * a,
        0.5 * ((u - c) ** 2 + v * v) * l1 + g1 * (u * u + v * v) * l2 + 0.5 * ((u + c) ** 2 + v * v) * l3 + w,
    ])


def hllc_x(rL, uL, vL, pL, rR, uR, vR, pR, gamma):
    """HLLC flux with Davis wave-speed bounds."""
    cL = np.sqrt(gamma * pL / rL)
    cR = np.sqrt(gamma * pR / rR)
    sL = np.minimum(uL - cL, uR - cR)
    sR = np.maximum(uL + cL, uR + cR)
    EL = pL / (gamma - 1.0) + 0.5 * rL * (uL * uL + vL * vL)
    ER = pR / (gamma - 1.0) + 0.5 * rR * (uR * uR + vR * vR)
    dL = rL * (sL - uL)
    dR = rR * (sR - uR)
    s_star = (pR - pL + uL * dL - uR * dR) / (dL - dR)

    FL = np.stack([rL * uL, rL * uL * uL + pL, rL * uL * vL, uL * (EL + pL)])
    FR = np.stack([rR * uR, rR * uR * uR + pR, rR * uR * vR, uR * (ER + pR)])

    def star(r, u, v, p, E, s, d):
        fac = d / (s - s_star)
        return fac * np.stack([np.ones_like(r), s_star, v, E / r + (s_star - u) * (s_star + p / d)])

    UL = np.stack([rL, rL * uL, rL * vL, EL])
    UR = np.stack([rR, rR * uR, rR * vR, ER])
    FsL = FL + sL * (star(rL, uL, vL, pL, EL, sL, dL) - UL)
    FsR = FR + sR * (star(rR, uR, vR, pR, ER, sR, dR) - UR)
    return np.where(sL >= 0.0, FL, np.where(s_star >= 0.0, FsL, np.where(sR > 0.0, FsR, FR)))


@numba.njit(cache=True)
def _hllc_point(r0, u0, v0, p0, r1, u1, v1, p1, gamma):
    g1 = gamma - 1.0
    c0 = np.sqrt(gamma * p0 / r0)
    c1 = np.sqrt(gamma * p1 / r1)
    sL = min(u0 - c0, u1 - c1)
    sR = max(u0 + c0, u1 + c1)
    E0 = p0 / g1 + 0.5 * r0 * (u0 * u0 + v0 * v0)
    E1 = p1 / g1 + 0.5 * r1 * (u1 * u1 + v1 * v1)
    if sL >= 0.0:
        m = r0 * u0
        return m, m * u0 + p0, m * v0, u0 * (E0 + p0)
    d0 = r0 * (sL - u0)
    d1 = r1 * (sR - u1)
    ss = (p1 - p0 + u0 * d0 - u1 * d1) / (d0 - d1)
    if ss >= 0.0:
        r, u, v, p, E, sk, d = r0, u0, v0, p0, E0, sL, d0
    elif sR > 0.0:
        r, u, v, p, E, sk, d = r1, u1, v1, p1, E1, sR, d1
    else:
        m = r1 * u1
        return m, m * u1 + p1, m * v1, u1 * (E1 + p1)
    fac = d / (sk - ss)
    m = r * u
    return (m + sk * (fac - r),
            m * u + p + sk * (fac * ss - m),
            m * v + sk * (fac * v - r * v),
            u * (E + p) + sk * (fac * (E / r + (ss - u) * (ss + p / d)) - E))


@numba.njit(cache=True)
def _hllc_kernel(rL, uL, vL, pL, rR, uR, vR, pR, gamma, out):
    for k in range(rL.size):
        out[0, k], out[1, k], out[2, k], out[3, k] = _hllc_point(
            rL[k], uL[k], vL[k], pL[k], rR[k], uR[k], vR[k], pR[k], gamma)


@numba.njit(cache=True)
def _limit(a, b, kind):
    if a * b <= 0.0:
        return 0.0
    if kind == 0:
        return a if abs(a) < abs(b) else b
    return 2.0 * a * b / (a + b)


@numba.njit(cache=True)
def _muscl_hllc_kernel(W, gamma, kind, out):
    """x-direction faces of the primitive field ``W[4, rows, cols]``: face ``f``
    separates columns ``f + 1`` and ``f + 2``."""
    q = np.empty(8)
    for j in range(W.shape[1]):
        for f in range(out.shape[2]):
            c = f + 1
            for m in range(4):
                a = W[m, j, c] - W[m, j, c - 1]
                b = W[m, j, c + 1] - W[m, j, c]
                e = W[m, j, c + 2] - W[m, j, c + 1]
                q[m] = W[m, j, c] + 0.5 * _limit(a, b, kind)
                q[4 + m] = W[m, j, c + 1] - 0.5 * _limit(b, e, kind)
            out[0, j, f], out[1, j, f], out[2, j, f], out[3, j, f] = _hllc_point(
                q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7], gamma)


def muscl_hllc_x(W, gamma, limiter="minmod"):
    """HLLC fluxes through the x faces between columns ``1 .. cols - 2`` of
    the padded primitive array ``W`` after limited linear reconstruction."""
    kind = {"minmod": 0, "van_leer": 1}[limiter]
    W = np.ascontiguousarray(W, dtype=np.float64)
    out = np.empty((4, W.shape[1], W.shape[2] - 3))
    _muscl_hllc_kernel(W, float(gamma), kind, out)
    return out


def hllc_x_fast(rL, uL, vL, pL, rR, uR, vR, pR, gamma):
    """Compiled equivalent of :func:`hllc_x`."""
    shape = np.shape(rL)
    args = [np.ascontiguousarray(a, dtype=np.float64).ravel() for a in (rL, uL, vL, pL, rR, uR, vR, pR)]
    out = np.empty((4, args[0].size))
    _hllc_kernel(*args, float(gamma), out)
    return out.reshape((4,) + shape)


def minmod(a, b):
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def van_leer(a, b):
    ab = a * b
    return np.where(ab > 0.0, 2.0 * ab / np.where(ab > 0.0, a + b, 1.0), 0.0)


LIMITERS = {"minmod": minmod, "van_leer": van_leer}
