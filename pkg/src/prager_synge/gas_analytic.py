"""Exact perfect-gas building blocks and analytic shock-interaction patterns.

Oblique shocks use the standard theta-beta-M relation with Rankine-Hugoniot
jumps, expansions the Prandtl-Meyer function.  Edney type I (crossing shocks
of opposite families) and type VI (coalescing shocks of the same family) are
assembled as piecewise-constant sectors around the interaction point, with an
isentropic fan for the type VI matching wave when it is an expansion.

Angles are radians measured counter-clockwise from +x.  A positive deflection
turns the flow counter-clockwise.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid_field import Grid, GridFunction


class DetachedShockError(ValueError):
    """Requested deflection exceeds the attached-shock maximum."""


class PatternMatchError(RuntimeError):
    """A wave interaction could not be matched (no root in bracket)."""


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    gas_constant: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")


@dataclass(frozen=True)
class PrimitiveState:
    rho: float
    u: float
    v: float
    p: float

    def __post_init__(self):
        if not (self.rho > 0 and self.p > 0):
            raise ValueError(f"non-physical state {self}")

    @property
    def speed(self) -> float:
        return math.hypot(self.u, self.v)

    @property
    def direction(self) -> float:
        return math.atan2(self.v, self.u)

    def sound_speed(self, gas: GasModel) -> float:
        return math.sqrt(gas.gamma * self.p / self.rho)

    def mach(self, gas: GasModel) -> float:
        return self.speed / self.sound_speed(gas)

    def temperature(self, gas: GasModel) -> float:
        return self.p / (self.rho * gas.gas_constant)

    def conserved(self, gas: GasModel) -> np.ndarray:
        return primitive_to_conserved(self.rho, self.u, self.v, self.p, gas.gamma)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rho, self.u, self.v, self.p)


def freestream_state(mach: float, gas: GasModel, direction: float = 0.0) -> PrimitiveState:
    """Nondimensional freestream: rho = 1, p = 1/gamma, sound speed 1."""
    return PrimitiveState(1.0, mach * math.cos(direction), mach * math.sin(direction), 1.0 / gas.gamma)


def primitive_to_conserved(rho, u, v, p, gamma):
    rho, u, v, p = (np.asarray(a, dtype=np.float64) for a in (rho, u, v, p))
    energy = p / (gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    return np.stack([rho, rho * u, rho * v, energy])


def conserved_to_primitive(U, gamma):
    """``U`` has the component axis first; returns ``(rho, u, v, p)``."""
    rho = U[0]
    u = U[1] / rho
    v = U[2] / rho
    p = (gamma - 1.0) * (U[3] - 0.5 * rho * (u * u + v * v))
    return rho, u, v, p


# -- root finding ---------------------------------------------------------------

def _bisect_newton(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12) -> float:
    """Root of a sign-changing ``f`` on ``[a, b]``: bisection to ``tol``, then a
    guarded secant/Newton polish that never leaves the final bracket."""
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise PatternMatchError(f"no sign change on [{a}, {b}]: f={fa:.3e}, {fb:.3e}")
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if fa * fm < 0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    x = 0.5 * (a + b)
    fx = f(x)
    for _ in range(3):
        h = max(1e-7 * abs(x), 1e-9)
        d = (f(x + h) - f(x - h)) / (2 * h)
        if d == 0.0 or not math.isfinite(d):
            break
        xn = x - fx / d
        if not (a - tol <= xn <= b + tol):
            break
        fn = f(xn)
        if abs(fn) >= abs(fx):
            break
        x, fx = xn, fn
    return x


# -- oblique shocks -------------------------------------------------------------

def theta_from_beta(beta: float, mach: float, gamma: float) -> float:
    """Flow deflection produced by a shock at angle ``beta`` (theta-beta-M)."""
    ms2 = (mach * math.sin(beta)) ** 2
    num = 2.0 * (ms2 - 1.0) / math.tan(beta)
    den = mach * mach * (gamma + math.cos(2.0 * beta)) + 2.0
    return math.atan(num / den)


def beta_at_max_deflection(mach: float, gamma: float) -> float:
    m2 = mach * mach
    s2 = ((gamma + 1) * m2 / 4 - 1
          + math.sqrt((gamma + 1) * (1 + (gamma - 1) * m2 / 2 + (gamma + 1) * m2 * m2 / 16))) / (gamma * m2)
    return math.asin(math.sqrt(s2))


def max_deflection(mach: float, gas: GasModel) -> float:
    if mach <= 1.0:
        return 0.0
    return theta_from_beta(beta_at_max_deflection(mach, gas.gamma), mach, gas.gamma)


def shock_angle(mach: float, deflection: float, gas: GasModel, branch: str = "weak") -> float:
    """Shock angle relative to the upstream flow for an unsigned deflection."""
    if mach <= 1.0:
        raise ValueError(f"oblique shock needs supersonic upstream flow, got M={mach}")
    theta = abs(deflection)
    mu = math.asin(1.0 / mach)
    if theta == 0.0:
        return mu if branch == "weak" else 0.5 * math.pi
    beta_star = beta_at_max_deflection(mach, gas.gamma)
    theta_max = theta_from_beta(beta_star, mach, gas.gamma)
    if theta >= theta_max:
        raise DetachedShockError(
            f"deflection {math.degrees(theta):.4f} deg exceeds detachment limit "
            f"{math.degrees(theta_max):.4f} deg at M={mach:.4f}")
    f = lambda b: theta_from_beta(b, mach, gas.gamma) - theta
    if branch == "weak":
        return _bisect_newton(f, mu, beta_star)
    if branch == "strong":
        return _bisect_newton(f, beta_star, 0.5 * math.pi)
    raise ValueError(f"unknown branch {branch!r}")


def _unit_normal(shock_line: float, side: int) -> tuple[float, float]:
    return (side * math.sin(shock_line), -side * math.cos(shock_line))


def shock_jump(upstream: PrimitiveState, shock_line: float, gas: GasModel) -> PrimitiveState:
    """Rankine-Hugoniot downstream state for a shock along the absolute angle
    ``shock_line``; the normal is oriented along the upstream flow."""
    g = gas.gamma
    nx, ny = math.sin(shock_line), -math.cos(shock_line)
    vn = upstream.u * nx + upstream.v * ny
    if vn < 0:
        nx, ny, vn = -nx, -ny, -vn
    tx, ty = math.cos(shock_line), math.sin(shock_line)
    vt = upstream.u * tx + upstream.v * ty
    c = upstream.sound_speed(gas)
    mn2 = (vn / c) ** 2
    rho_ratio = (g + 1) * mn2 / ((g - 1) * mn2 + 2)
    p2 = upstream.p * (1 + 2 * g / (g + 1) * (mn2 - 1))
    vn2 = vn / rho_ratio
    return PrimitiveState(upstream.rho * rho_ratio, vt * tx + vn2 * nx, vt * ty + vn2 * ny, p2)


def rankine_hugoniot_residual(up: PrimitiveState, down: PrimitiveState, shock_line: float, gas: GasModel) -> float:
    """Largest relative violation of mass, normal/tangential momentum and
    energy conservation across a shock line."""
    g = gas.gamma
    nx, ny = math.sin(shock_line), -math.cos(shock_line)
    tx, ty = math.cos(shock_line), math.sin(shock_line)

    def fluxes(s: PrimitiveState):
        vn = s.u * nx + s.v * ny
        vt = s.u * tx + s.v * ty
        h0 = g / (g - 1) * s.p / s.rho + 0.5 * (vn * vn + vt * vt)
        return (s.rho * vn, s.rho * vn * vn + s.p, s.rho * vn * vt, s.rho * vn * h0)

    fa, fb = fluxes(up), fluxes(down)
    scale = [abs(fa[0]), abs(fa[1]), abs(fa[1]), abs(fa[3])]
    return max(abs(x - y) / max(s, 1e-300) for x, y, s in zip(fa, fb, scale))


@dataclass(frozen=True)
class ObliqueShockSolution:
    beta: float
    downstream: PrimitiveState
    branch: str
    deflection: float
    shock_line: float


def oblique_shock(upstream: PrimitiveState, deflection: float, gas: GasModel,
                  branch: str = "weak") -> ObliqueShockSolution:
    """Attached oblique shock turning ``upstream`` by the signed ``deflection``."""
    mach = upstream.mach(gas)
    if mach <= 1.0:
        raise ValueError(f"subsonic upstream flow (M={mach:.4f})")
    beta = shock_angle(mach, deflection, gas, branch)
    side = 1 if deflection >= 0 else -1
    line = upstream.direction + side * beta
    if deflection == 0.0:
        return ObliqueShockSolution(beta, upstream, branch, 0.0, line)
    return ObliqueShockSolution(beta, shock_jump(upstream, line, gas), branch, deflection, line)


# -- Prandtl-Meyer ----------------------------------------------------------------

def prandtl_meyer(mach: float, gas: GasModel) -> float:
    if mach < 1.0:
        raise ValueError(f"Prandtl-Meyer function needs M >= 1, got {mach}")
    g = gas.gamma
    k = math.sqrt((g + 1) / (g - 1))
    m = math.sqrt(mach * mach - 1.0)
    return k * math.atan(m / k) - math.atan(m)


def max_prandtl_meyer(gas: GasModel) -> float:
    return 0.5 * math.pi * (math.sqrt((gas.gamma + 1) / (gas.gamma - 1)) - 1.0)


def inverse_prandtl_meyer(nu: float, gas: GasModel) -> float:
    if nu < 0 or nu >= max_prandtl_meyer(gas):
        raise ValueError(f"Prandtl-Meyer angle {nu} out of range")
    if nu == 0.0:
        return 1.0
    hi = 2.0
    while prandtl_meyer(hi, gas) < nu:
        hi *= 2.0
    g = gas.gamma
    m = _bisect_newton(lambda M: prandtl_meyer(M, gas) - nu, 1.0, hi, tol=1e-13)
    for _ in range(2):
        d = math.sqrt(m * m - 1) / (m * (1 + 0.5 * (g - 1) * m * m))
        if d <= 0:
            break
        m -= (prandtl_meyer(m, gas) - nu) / d
    return m


def isentropic_turn(state: PrimitiveState, turn: float, gas: GasModel) -> PrimitiveState:
    """Expand ``state`` isentropically, turning the flow by the signed ``turn``.

    A counter-clockwise turn expands a flow through waves running down-right
    of the streamline (and vice versa), so the magnitude of the turn always
    increases the Prandtl-Meyer angle."""
    g = gas.gamma
    m1 = state.mach(gas)
    m2 = inverse_prandtl_meyer(prandtl_meyer(m1, gas) + abs(turn), gas)
    t_ratio = (1 + 0.5 * (g - 1) * m1 * m1) / (1 + 0.5 * (g - 1) * m2 * m2)
    rho = state.rho * t_ratio ** (1 / (g - 1))
    p = state.p * t_ratio ** (g / (g - 1))
    c = math.sqrt(g * p / rho)
    d = state.direction + turn
    return PrimitiveState(rho, m2 * c * math.cos(d), m2 * c * math.sin(d), p)


# -- patterns ------------------------------------------------------------------------

@dataclass(frozen=True)
class Fan:
    """Centred isentropic fan; ``upstream`` is the state on the head ray and
    ``sense`` is the direction (+1 ccw / -1 cw) the flow turns across it."""
    upstream: PrimitiveState
    head: float
    tail: float
    sense: int


@dataclass(frozen=True)
class Wave:
    kind: str  # shock | slipline | expansion_fan
    angles: tuple[float, ...]
    regions: tuple[str, str]
    residual: float = 0.0


@dataclass(frozen=True)
class FlowPattern:
    """Piecewise-constant exact flow made of angular sectors around ``origin``.

    ``sectors`` is a sequence of ``(start_angle, name)`` pairs with increasing
    start angles spanning one full turn; ``name`` refers to ``regions`` or, for
    the single name ``"fan"``, to ``fan``.
    """
    kind: str
    origin: tuple[float, float]
    sectors: tuple[tuple[float, str], ...]
    regions: dict = field(hash=False)
    waves: tuple[Wave, ...] = ()
    fan: Fan | None = None
    params: dict = field(default_factory=dict, hash=False)
    gas: GasModel = GasModel()

    @property
    def freestream(self) -> PrimitiveState:
        return self.regions["freestream"]

    def sector_of(self, angle: float) -> str:
        starts = [s for s, _ in self.sectors]
        a0 = starts[0]
        a = (angle - a0) % (2 * math.pi) + a0
        return self.sectors[bisect_right(starts, a) - 1][1]


def _sectors(pairs) -> tuple[tuple[float, str], ...]:
    pairs = sorted(pairs)
    a0 = pairs[0][0]
    if pairs[-1][0] - a0 >= 2 * math.pi:
        raise PatternMatchError("sectors overlap a full turn")
    return tuple((float(a), n) for a, n in pairs)


def _wrap(angle: float, lo: float) -> float:
    return (angle - lo) % (2 * math.pi) + lo


def build_uniform(freestream: PrimitiveState, gas: GasModel = GasModel()) -> FlowPattern:
    return FlowPattern("freestream", (0.0, 0.5), ((-math.pi, "freestream"),),
                       {"freestream": freestream}, (), None, {}, gas)


def build_single_wedge(freestream: PrimitiveState, deflection: float, gas: GasModel = GasModel(),
                       origin: tuple[float, float] | None = None, branch: str = "weak") -> FlowPattern:
    """One attached oblique shock from ``origin``; a positive deflection
    models a wedge below the flow (shock running up-right)."""
    if origin is None:
        origin = (0.0, 0.2 if deflection >= 0 else 0.8)
    if deflection == 0.0:
        return FlowPattern("single_wedge", origin, ((-math.pi, "freestream"),),
                           {"freestream": freestream}, (), None, {"deflection": 0.0}, gas)
    sh = oblique_shock(freestream, deflection, gas, branch)
    line = sh.shock_line
    if deflection > 0:
        pairs = [(line, "freestream"), (line + math.pi, "shocked")]
    else:
        pairs = [(line, "shocked"), (line + math.pi, "freestream")]
    wave = Wave("shock", (line,), ("freestream", "shocked"),
                rankine_hugoniot_residual(freestream, sh.downstream, line, gas))
    return FlowPattern("single_wedge", origin, _sectors(pairs),
                       {"freestream": freestream, "shocked": sh.downstream}, (wave,), None,
                       {"deflection": deflection, "beta": sh.beta, "shock_line": line}, gas)


def _from_point(point: tuple[float, float], angle: float, x: float = 0.0) -> tuple[float, float]:
    """Intersection of the ray ``point + t(cos, sin)`` (t < 0) with x = ``x``."""
    px, py = point
    return (x, py + (x - px) * math.tan(angle))


def build_edney1(freestream: PrimitiveState, chi_upper: float, chi_lower: float,
                 interaction: tuple[float, float] = (0.4, 0.5), gas: GasModel = GasModel()) -> FlowPattern:
    """Regular crossing of two opposite-family shocks (Edney type I).

    The upper wedge turns the flow clockwise by ``chi_upper``, the lower one
    counter-clockwise by ``chi_lower``; the shocks cross at ``interaction``.
    Behind the two transmitted shocks a slip line carries the common pressure
    and flow direction ``phi`` found by a 1D root solve.
    """
    if chi_upper < 0 or chi_lower < 0:
        raise ValueError("wedge deflections must be non-negative")
    if chi_upper == 0.0 or chi_lower == 0.0:
        defl = chi_lower if chi_upper == 0.0 else -chi_upper
        pat = build_single_wedge(freestream, defl, gas, origin=interaction)
        params = dict(pat.params, chi_upper=chi_upper, chi_lower=chi_lower)
        return FlowPattern("edney1", interaction, pat.sectors, pat.regions, pat.waves, None, params, gas)

    up = oblique_shock(freestream, -chi_upper, gas, "weak")
    lo = oblique_shock(freestream, chi_lower, gas, "weak")
    r2, r3 = up.downstream, lo.downstream
    d2, d3 = r2.direction, r3.direction
    m2, m3 = r2.mach(gas), r3.mach(gas)
    eps = 1e-9
    a = max(d2, d3 - max_deflection(m3, gas)) + eps
    b = min(d3, d2 + max_deflection(m2, gas)) - eps
    if a >= b:
        raise PatternMatchError("edney1: transmitted shocks detach for every slip-line direction")

    def p4(phi):
        return oblique_shock(r2, phi - d2, gas).downstream.p

    def p5(phi):
        return oblique_shock(r3, phi - d3, gas).downstream.p

    try:
        phi = _bisect_newton(lambda f: p4(f) - p5(f), a, b)
    except PatternMatchError as exc:
        raise PatternMatchError(f"edney1 slip-line matching failed: {exc}") from exc
    s4 = oblique_shock(r2, phi - d2, gas)
    s5 = oblique_shock(r3, phi - d3, gas)
    r4, r5 = s4.downstream, s5.downstream

    inc_up = _wrap(up.shock_line + math.pi, 0.0)    # up-left from the crossing
    inc_lo = _wrap(lo.shock_line + math.pi, 0.0)    # down-left
    tr_up = s4.shock_line                           # transmitted into region 2, up-right
    tr_lo = s5.shock_line                           # transmitted into region 3, down-right
    slip = phi
    pairs = [(tr_lo, "r5"), (slip, "r4"), (tr_up, "r2"), (inc_up, "freestream"), (inc_lo, "r3")]
    a0 = tr_lo
    pairs = [(_wrap(t, a0), n) for t, n in pairs]
    regions = {"freestream": freestream, "r2": r2, "r3": r3, "r4": r4, "r5": r5}
    waves = (
        Wave("shock", (up.shock_line,), ("freestream", "r2"),
             rankine_hugoniot_residual(freestream, r2, up.shock_line, gas)),
        Wave("shock", (lo.shock_line,), ("freestream", "r3"),
             rankine_hugoniot_residual(freestream, r3, lo.shock_line, gas)),
        Wave("shock", (tr_up,), ("r2", "r4"), rankine_hugoniot_residual(r2, r4, tr_up, gas)),
        Wave("shock", (tr_lo,), ("r3", "r5"), rankine_hugoniot_residual(r3, r5, tr_lo, gas)),
        Wave("slipline", (slip,), ("r4", "r5"), abs(r4.p - r5.p) / r4.p),
    )
    params = {"chi_upper": chi_upper, "chi_lower": chi_lower, "phi": phi,
              "mach": freestream.mach(gas)}
    return FlowPattern("edney1", interaction, _sectors(pairs), regions, waves, None, params, gas)


def build_edney6(freestream: PrimitiveState, chi1: float, chi2: float,
                 interaction: tuple[float, float] = (0.45, 0.55), gas: GasModel = GasModel()) -> FlowPattern:
    """Coalescence of two same-family shocks from consecutive ramps (Edney VI).

    ``chi1`` is the first ramp angle and ``chi2`` the cumulative angle of the
    second ramp (``chi2 = 0`` means no second ramp).  Beyond the triple point
    a merged shock, a slip line and a matching wave (centred expansion fan or
    weak shock, whichever the pressure mismatch requires) leave the point.
    """
    if chi1 <= 0:
        raise ValueError("first ramp angle must be positive")
    if chi2 == 0.0:
        pat = build_single_wedge(freestream, chi1, gas, origin=interaction)
        return FlowPattern("edney6", interaction, pat.sectors, pat.regions, pat.waves, None,
                           dict(pat.params, chi1=chi1, chi2=0.0, matching="none"), gas)
    if chi2 <= chi1:
        raise ValueError("second ramp angle must exceed the first (compression corner)")
    m_inf = freestream.mach(gas)
    if chi2 >= max_deflection(m_inf, gas):
        raise DetachedShockError(
            f"total deflection {math.degrees(chi2):.3f} deg exceeds detachment limit "
            f"{math.degrees(max_deflection(m_inf, gas)):.3f} deg at M={m_inf:.3f}")
    s1 = oblique_shock(freestream, chi1, gas)
    r1 = s1.downstream
    s2 = oblique_shock(r1, chi2 - chi1, gas)
    r2 = s2.downstream
    if s2.shock_line <= s1.shock_line:
        raise PatternMatchError("edney6: second shock does not overtake the first")
    m2 = r2.mach(gas)
    d2 = r2.direction

    def p_merged(phi):
        return oblique_shock(freestream, phi, gas).downstream.p

    def match(phi):
        if phi >= d2:
            return isentropic_turn(r2, phi - d2, gas)
        return oblique_shock(r2, phi - d2, gas).downstream

    eps = 1e-9
    a = max(0.0, d2 - max_deflection(m2, gas)) + eps
    b = min(max_deflection(m_inf, gas), d2 + max_prandtl_meyer(gas) - prandtl_meyer(m2, gas)) - eps
    try:
        phi = _bisect_newton(lambda f: p_merged(f) - match(f).p, a, b)
    except PatternMatchError as exc:
        raise PatternMatchError(f"edney6 triple-point matching failed: {exc}") from exc
    sm = oblique_shock(freestream, phi, gas)
    r4 = sm.downstream
    r3 = match(phi)
    inc1 = _wrap(s1.shock_line + math.pi, 0.0)
    inc2 = _wrap(s2.shock_line + math.pi, 0.0)
    regions = {"freestream": freestream, "r1": r1, "r2": r2, "r3": r3, "r4": r4}
    waves = [
        Wave("shock", (s1.shock_line,), ("freestream", "r1"),
             rankine_hugoniot_residual(freestream, r1, s1.shock_line, gas)),
        Wave("shock", (s2.shock_line,), ("r1", "r2"), rankine_hugoniot_residual(r1, r2, s2.shock_line, gas)),
        Wave("shock", (sm.shock_line,), ("freestream", "r4"),
             rankine_hugoniot_residual(freestream, r4, sm.shock_line, gas)),
        Wave("slipline", (phi,), ("r3", "r4"), abs(r3.p - r4.p) / r4.p),
    ]
    fan = None
    if phi >= d2:
        matching = "expansion_fan"
        head = d2 - math.asin(1.0 / m2)
        tail = phi - math.asin(1.0 / r3.mach(gas))
        fan = Fan(r2, head, tail, +1)
        pairs = [(head, "fan"), (tail, "r3"), (phi, "r4"), (sm.shock_line, "freestream"),
                 (inc1, "r1"), (inc2, "r2")]
        waves.append(Wave("expansion_fan", (head, tail), ("r2", "r3"), 0.0))
    else:
        matching = "shock"
        rs = oblique_shock(r2, phi - d2, gas)
        pairs = [(rs.shock_line, "r3"), (phi, "r4"), (sm.shock_line, "freestream"),
                 (inc1, "r1"), (inc2, "r2")]
        waves.append(Wave("shock", (rs.shock_line,), ("r2", "r3"),
                          rankine_hugoniot_residual(r2, r3, rs.shock_line, gas)))
    a0 = pairs[0][0]
    pairs = [(_wrap(t, a0), n) for t, n in pairs]
    params = {"chi1": chi1, "chi2": chi2, "phi": phi, "matching": matching, "mach": m_inf}
    return FlowPattern("edney6", interaction, _sectors(pairs), regions, tuple(waves), fan, params, gas)


# -- evaluation -----------------------------------------------------------------------

def _fan_states(fan: Fan, psi: np.ndarray, gas: GasModel):
    """States inside a right-running expansion fan at ray angles ``psi``."""
    g = gas.gamma
    up = fan.upstream
    m1 = up.mach(gas)
    nu1 = prandtl_meyer(m1, gas)
    d1 = up.direction
    k = math.sqrt((g + 1) / (g - 1))

    def nu(m):
        s = np.sqrt(m * m - 1.0)
        return k * np.arctan(s / k) - np.arctan(s)

    def ray(m):
        return d1 + fan.sense * (nu(m) - nu1) - fan.sense * np.arcsin(1.0 / m)

    lo = np.full(psi.shape, m1)
    hi = np.full(psi.shape, m1)
    while True:
        over = fan.sense * (ray(hi) - psi) < 0
        if not over.any():
            break
        hi = np.where(over, hi * 1.5, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = fan.sense * (ray(mid) - psi) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    m = 0.5 * (lo + hi)
    t_ratio = (1 + 0.5 * (g - 1) * m1 * m1) / (1 + 0.5 * (g - 1) * m * m)
    rho = up.rho * t_ratio ** (1 / (g - 1))
    p = up.p * t_ratio ** (g / (g - 1))
    speed = m * np.sqrt(g * p / rho)
    d = d1 + fan.sense * (nu(m) - nu1)
    return rho, speed * np.cos(d), speed * np.sin(d), p


def pattern_primitive(pattern: FlowPattern, x, y):
    """Vectorised pattern evaluation; returns ``(rho, u, v, p)`` arrays."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    shape = np.broadcast(x, y).shape
    x, y = np.broadcast_to(x, shape), np.broadcast_to(y, shape)
    out = [np.empty(shape) for _ in range(4)]
    ox, oy = pattern.origin
    starts = np.array([s for s, _ in pattern.sectors])
    a0 = starts[0]
    ang = np.arctan2(y - oy, x - ox)
    ang = np.mod(ang - a0, 2 * math.pi) + a0
    idx = np.searchsorted(starts, ang, side="right") - 1
    for k, (_, name) in enumerate(pattern.sectors):
        sel = idx == k
        if not sel.any():
            continue
        if name == "fan":
            vals = _fan_states(pattern.fan, ang[sel], pattern.gas)
            for o, v in zip(out, vals):
                o[sel] = v
        else:
            st = pattern.regions[name]
            for o, v in zip(out, st.as_tuple()):
                o[sel] = v
    return tuple(out)


def eval_pattern(pattern: FlowPattern, x: float, y: float) -> PrimitiveState:
    rho, u, v, p = pattern_primitive(pattern, x, y)
    return PrimitiveState(float(rho), float(u), float(v), float(p))


def pattern_conserved(pattern: FlowPattern, x, y, gas: GasModel | None = None) -> np.ndarray:
    """Conserved variables with the component axis first."""
    gas = gas or pattern.gas
    return primitive_to_conserved(*pattern_primitive(pattern, x, y), gas.gamma)


def project_pattern(pattern: FlowPattern, grid: Grid, gas: GasModel | None = None) -> GridFunction:
    """Point-sample the exact solution at cell centres (conserved variables)."""
    X, Y = grid.centers()
    U = pattern_conserved(pattern, X, Y, gas)
    return GridFunction(grid, np.moveaxis(U, 0, -1))


# -- verification & reporting -----------------------------------------------------------

def pattern_residuals(pattern: FlowPattern) -> dict[str, float]:
    """Matching residuals of every wave plus fan-edge continuity checks."""
    gas = pattern.gas
    out = {}
    for k, w in enumerate(pattern.waves):
        key = f"{k}:{w.kind}:{w.regions[0]}->{w.regions[1]}"
        if w.kind == "slipline":
            a, b = (pattern.regions[n] for n in w.regions)
            dir_mis = max(abs(math.sin(a.direction - w.angles[0])), abs(math.sin(b.direction - w.angles[0])))
            out[key] = max(abs(a.p - b.p) / a.p, dir_mis)
        elif w.kind == "shock":
            a, b = (pattern.regions[n] for n in w.regions)
            out[key] = rankine_hugoniot_residual(a, b, w.angles[0], gas)
        else:
            fan = pattern.fan
            head = _fan_states(fan, np.array([fan.head]), gas)
            tail = _fan_states(fan, np.array([fan.tail]), gas)
            a, b = (pattern.regions[n] for n in w.regions)
            out[key] = max(
                max(abs(float(h[0]) - s) / max(abs(s), 1.0) for h, s in zip(head, a.as_tuple())),
                max(abs(float(t[0]) - s) / max(abs(s), 1.0) for t, s in zip(tail, b.as_tuple())),
            )
    starts = [s for s, _ in pattern.sectors]
    if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] - starts[0] >= 2 * math.pi:
        out["sectors"] = float("inf")
    return out


def check_pattern(pattern: FlowPattern, tol: float = 1e-10) -> float:
    res = pattern_residuals(pattern)
    worst = max(res.values(), default=0.0)
    if worst > tol:
        bad = {k: v for k, v in res.items() if v > tol}
        raise PatternMatchError(f"{pattern.kind}: invariant residuals above {tol:g}: {bad}")
    return worst


def pattern_summary(pattern: FlowPattern) -> str:
    lines = [f"pattern {pattern.kind}  origin=({pattern.origin[0]:.6g}, {pattern.origin[1]:.6g})"]
    for k, v in pattern.params.items():
        if isinstance(v, float) and k not in ("mach",):
            lines.append(f"  {k:<12} {v:.12g} rad ({math.degrees(v):.6f} deg)")
        else:
            lines.append(f"  {k:<12} {v}")
    lines.append("regions:")
    for name, st in pattern.regions.items():
        lines.append(f"  {name:<11} rho={st.rho:.12g} u={st.u:.12g} v={st.v:.12g} p={st.p:.12g} "
                     f"M={st.mach(pattern.gas):.9g}")
    lines.append("waves:")
    res = pattern_residuals(pattern)
    for (key, r), w in zip(res.items(), pattern.waves):
        angs = ", ".join(f"{math.degrees(a):.6f}" for a in w.angles)
        lines.append(f"  {w.kind:<14} {w.regions[0]}->{w.regions[1]:<11} angle(deg)=[{angs}] residual={r:.3e}")
    return "\n".join(lines)
