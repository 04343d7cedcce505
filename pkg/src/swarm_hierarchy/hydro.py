"""Finite-volume solvers for isothermal Euler and Navier-Stokes with self-propulsion.

Both models share one Strang-split step

    S(dt/2)  H(dt)  S(dt/2)

where S integrates the relaxation source -(r/a^2)... exactly in every cell
(the source is parallel to u, so only the speed changes and its closed form
is used), and H is the transport part: Rusanov fluxes on MUSCL-reconstructed
primitive variables (monotonized-central limiter, ``order=2``) or on cell
averages (``order=1``), advanced with the two-stage SSP Runge-Kutta method.

The Navier-Stokes terms enter H: the lambda^eps-weighted momentum
convection and the velocity-dependent pressure pi^eps in the fluxes, the
viscous, nonlocal and self-propulsion corrections as explicit central
differences.  For eps = 0 none of them is evaluated, so ``ns_step`` with
eps = 0 and ``euler_step`` execute the same arithmetic.

Grids are periodic, with one (quasi-1D) or two spatial dimensions; the
velocity always has d components.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .coeffs import DerivedCoefficients, relaxation_speed_sq
from .errors import BlowupError, ParameterError, StabilityError, VacuumError

log = logging.getLogger(__name__)

CFL_MAX = 0.45
PARABOLIC_MAX = 0.25


@dataclass(frozen=True)
class Grid:
    cells: tuple
    length: float = 1.0

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        object.__setattr__(self, "cells", cells)
        if len(cells) not in (1, 2) or min(cells) < 4:
            raise ParameterError("grid must have 1 or 2 axes with >= 4 cells each")
        if len(set(cells)) != 1:
            raise ParameterError("only square grids are supported")
        if not self.length > 0:
            raise ParameterError("box length must be > 0")

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        return self.length / self.cells[0]

    @property
    def cell_volume(self) -> float:
        return self.h ** self.ndim

    def centers(self) -> list[np.ndarray]:
        x = (np.arange(self.cells[0]) + 0.5) * self.h
        return np.meshgrid(*([x] * self.ndim), indexing="ij")


@dataclass
class FluidState:
    rho: np.ndarray
    mom: np.ndarray  # (d,) + grid shape
    grid: Grid
    time: float = 0.0

    @property
    def velocity(self) -> np.ndarray:
        return self.mom / self.rho

    @property
    def dim(self) -> int:
        return self.mom.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.rho.sum() * self.grid.cell_volume)

    @property
    def total_momentum(self) -> np.ndarray:
        return self.mom.reshape(self.dim, -1).sum(axis=1) * self.grid.cell_volume

    def copy(self) -> "FluidState":
        return FluidState(self.rho.copy(), self.mom.copy(), self.grid, self.time)


# ---------------------------------------------------------------------------
# model constants


@dataclass(frozen=True)
class _Model:
    temp: float
    a2: float
    dim: int
    conv: float  # lambda^eps
    eps: float
    pi_coeff: float  # lambda / 2
    target_sq: float  # a^2 chi
    rate: float  # prefactor of the source: 1/(tau^eps a^2)
    mu: float
    k_over_sigma: float
    active: bool  # NS corrections present


def _model(coeffs: DerivedCoefficients, eps: float) -> _Model:
    p = coeffs.params
    if eps == 0.0:
        return _Model(coeffs.temp, p.a * p.a, p.dim, 1.0, 0.0, 0.0, coeffs.relax_target_sq,
                      0.0 if math.isinf(p.tau) else coeffs.relax_rate, 0.0, 0.0, False)
    al = eps * coeffs.lam
    if not al * (p.dim + 8) / 2 < 1:
        raise ParameterError(f"eps lambda (d+8)/2 = {al * (p.dim + 8) / 2:.4g} >= 1: tau^eps <= 0")
    return _Model(coeffs.temp, p.a * p.a, p.dim, coeffs.lambda_eps, eps, coeffs.pi_coeff,
                  coeffs.relax_target_sq_eps,
                  0.0 if math.isinf(p.tau) else coeffs.relax_rate_eps,
                  coeffs.mu, coeffs.k_r / p.sigma, True)


# ---------------------------------------------------------------------------
# transport


LIMITERS = ("mc", "vanalbada", "none")


def _slope(q: np.ndarray, axis: int, limiter: str) -> np.ndarray:
    dl = q - np.roll(q, 1, axis)
    dr = np.roll(q, -1, axis) - q
    dc = 0.5 * (dl + dr)
    if limiter == "none":
        return dc
    if limiter == "vanalbada":
        tiny = 1e-30
        return (dl * dr * (dl + dr) + tiny * dc) / (dl * dl + dr * dr + 2 * tiny)
    s = np.sign(dc)
    lim = np.minimum(np.minimum(np.abs(dc), 2 * np.abs(dl)), 2 * np.abs(dr))
    return np.where(dl * dr > 0, s * lim, 0.0)


def _pressure(m: _Model, rho, speed_sq):
    p = m.temp * rho
    if m.active:
        p = p - m.eps * m.pi_coeff * rho * ((m.dim + 2) * m.temp - m.a2 + speed_sq)
    return p


def _signal_speed(m: _Model, u_n, speed_sq):
    if not m.active:
        return np.abs(u_n) + math.sqrt(m.temp)
    extra = m.eps * m.pi_coeff * (abs((m.dim + 2) * m.temp - m.a2) + 3 * speed_sq)
    return np.abs(u_n) * max(1.0, m.conv) + np.sqrt(m.temp + extra)


def _flux(m: _Model, rho, u, axis: int):
    un = u[axis]
    sq = np.sum(u * u, axis=0)
    f_rho = rho * un
    f_mom = m.conv * rho * u * un if m.active else rho * u * un
    f_mom[axis] = f_mom[axis] + _pressure(m, rho, sq)
    return f_rho, f_mom, _signal_speed(m, un, sq)


def _transport_rhs(m: _Model, rho, mom, h: float, order: int, limiter: str = "mc"):
    nd = rho.ndim
    u = mom / rho
    d_rho = np.zeros_like(rho)
    d_mom = np.zeros_like(mom)
    for k in range(nd):
        ax = k  # spatial axis in rho
        if order == 2:
            sr = _slope(rho, ax, limiter)
            su = _slope(u, ax + 1, limiter)
            rho_l = rho + 0.5 * sr
            u_l = u + 0.5 * su
            rho_r = np.roll(rho - 0.5 * sr, -1, ax)
            u_r = np.roll(u - 0.5 * su, -1, ax + 1)
        else:
            rho_l, u_l = rho, u
            rho_r, u_r = np.roll(rho, -1, ax), np.roll(u, -1, ax + 1)
        fl_r, fl_m, sl = _flux(m, rho_l, u_l, k)
        fr_r, fr_m, sr_ = _flux(m, rho_r, u_r, k)
        amax = np.maximum(sl, sr_)
        F_r = 0.5 * (fl_r + fr_r) - 0.5 * amax * (rho_r - rho_l)
        F_m = 0.5 * (fl_m + fr_m) - 0.5 * amax * (rho_r * u_r - rho_l * u_l)
        d_rho -= (F_r - np.roll(F_r, 1, ax)) / h
        d_mom -= (F_m - np.roll(F_m, 1, ax + 1)) / h
    if m.active:
        d_mom += _ns_terms(m, rho, u, h)
    return d_rho, d_mom


def _grad(f: np.ndarray, h: float, nd: int, lead: int = 0) -> list[np.ndarray]:
    """Central differences along the spatial axes of f (spatial axes start at ``lead``)."""
    return [(np.roll(f, -1, lead + k) - np.roll(f, 1, lead + k)) / (2 * h) for k in range(nd)]


def _lap(f: np.ndarray, h: float, nd: int, lead: int = 0) -> np.ndarray:
    out = np.zeros_like(f)
    for k in range(nd):
        ax = lead + k
        out += (np.roll(f, -1, ax) - 2 * f + np.roll(f, 1, ax)) / (h * h)
    return out


def _ns_terms(m: _Model, rho, u, h: float) -> np.ndarray:
    """eps[mu div(rho E(u)) + (k_R/sigma) rho Lap u] + 2 eps (k_R/sigma)(grad rho . grad) u
    + (eps lambda / 2) rho [(div u) u + grad(|u|^2/2) + (u . grad) u]."""
    nd = rho.ndim
    d = u.shape[0]
    gu = _grad(u, h, nd, lead=1)  # gu[k][j] = d_k u_j
    grho = _grad(rho, h, nd)
    out = np.zeros_like(u)
    # viscous: d_k (rho E_kj), E_kj = (d_k u_j + d_j u_k) / 2; d_j = 0 for j >= nd
    for j in range(d):
        for k in range(nd):
            e_kj = 0.5 * gu[k][j]
            if j < nd:
                e_kj = e_kj + 0.5 * gu[j][k]
            flux = rho * e_kj
            out[j] += m.eps * m.mu * (np.roll(flux, -1, k) - np.roll(flux, 1, k)) / (2 * h)
    out += m.eps * m.k_over_sigma * rho * _lap(u, h, nd, lead=1)
    for k in range(nd):
        out += 2 * m.eps * m.k_over_sigma * grho[k] * gu[k]
    div_u = sum(gu[k][k] for k in range(nd))
    half_sq = 0.5 * np.sum(u * u, axis=0)
    g_half = _grad(half_sq, h, nd)
    adv = sum(u[k] * gu[k] for k in range(nd))
    src = div_u * u + adv
    for k in range(nd):
        src[k] = src[k] + g_half[k]
    out += 0.5 * m.eps * (2 * m.pi_coeff) * rho * src
    return out


def _source(m: _Model, mom, rho, dt: float):
    if m.rate == 0.0:
        return mom
    u = mom / rho
    y0 = np.sum(u * u, axis=0)
    y = relaxation_speed_sq(y0, dt, m.target_sq, m.rate)
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(y0 > 0, np.sqrt(y / np.where(y0 > 0, y0, 1.0)), 0.0)
    return mom * fac


def max_stable_dt(state: FluidState, coeffs: DerivedCoefficients, eps: float = 0.0) -> float:
    """Largest dt allowed by the hyperbolic CFL and, for eps > 0, the parabolic limit."""
    m = _model(coeffs, eps)
    u = state.velocity
    sq = np.sum(u * u, axis=0)
    speed = float(np.max(_signal_speed(m, np.sqrt(sq), sq)))
    h = state.grid.h
    dt = CFL_MAX * h / speed
    if m.active:
        nu = eps * (m.mu + m.k_over_sigma)
        if nu > 0:
            dt = min(dt, PARABOLIC_MAX * h * h / nu)
    return dt


def _advance(state: FluidState, m: _Model, dt: float, order: int, check: bool,
             limiter: str = "mc") -> FluidState:
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    if order not in (1, 2):
        raise ParameterError("order must be 1 or 2")
    if limiter not in LIMITERS:
        raise ParameterError(f"limiter must be one of {LIMITERS}")
    rho, mom = state.rho, state.mom
    h = state.grid.h
    if np.any(rho <= 0):
        raise VacuumError(f"density <= 0 on entry at t = {state.time:.4g} (min {rho.min():.3g})")
    if check:
        u = mom / rho
        sq = np.sum(u * u, axis=0)
        cfl = dt * float(np.max(_signal_speed(m, np.sqrt(sq), sq))) / h
        if cfl > CFL_MAX * (1 + 1e-12):
            raise StabilityError(f"CFL number {cfl:.3f} exceeds {CFL_MAX}")
        if m.active:
            par = dt * m.eps * (m.mu + m.k_over_sigma) / (h * h)
            if par > PARABOLIC_MAX * (1 + 1e-12):
                raise StabilityError(f"parabolic number {par:.3f} exceeds {PARABOLIC_MAX}")
    mom = _source(m, mom, rho, 0.5 * dt)
    r1, m1 = _transport_rhs(m, rho, mom, h, order, limiter)
    rho1 = rho + dt * r1
    mom1 = mom + dt * m1
    if np.any(rho1 <= 0):
        raise VacuumError(f"density <= 0 in stage 1 at t = {state.time:.4g}")
    r2, m2 = _transport_rhs(m, rho1, mom1, h, order, limiter)
    rho_n = 0.5 * (rho + rho1 + dt * r2)
    mom_n = 0.5 * (mom + mom1 + dt * m2)
    if np.any(rho_n <= 0):
        raise VacuumError(f"density <= 0 at t = {state.time + dt:.4g} (min {rho_n.min():.3g})")
    mom_n = _source(m, mom_n, rho_n, 0.5 * dt)
    if not (np.all(np.isfinite(rho_n)) and np.all(np.isfinite(mom_n))):
        raise BlowupError(f"non-finite fluid state at t = {state.time + dt:.4g}")
    return FluidState(rho_n, mom_n, state.grid, state.time + dt)


def euler_step(state: FluidState, coeffs: DerivedCoefficients, dt: float, order: int = 2,
               check: bool = True, limiter: str = "mc") -> FluidState:
    """One step of isothermal Euler with the relaxation source (eps ignored)."""
    return _advance(state, _model(coeffs, 0.0), dt, order, check, limiter)


def ns_step(state: FluidState, coeffs: DerivedCoefficients, dt: float, order: int = 2,
            check: bool = True, limiter: str = "mc") -> FluidState:
    """One step of the Navier-Stokes correction system at eps = coeffs.params.eps."""
    return _advance(state, _model(coeffs, coeffs.params.eps), dt, order, check, limiter)


@dataclass
class Snapshot:
    time: float
    rho: np.ndarray
    mom: np.ndarray

    @property
    def velocity(self) -> np.ndarray:
        return self.mom / self.rho


def run(state: FluidState, coeffs: DerivedCoefficients, t_end: float, model: str = "euler",
        dt: Optional[float] = None, dt_max: Optional[float] = None, order: int = 2,
        snapshot_every: Optional[float] = None, cfl_safety: float = 0.9,
        limiter: str = "mc") -> tuple[FluidState, list]:
    """Integrate to ``t_end``; fixed ``dt`` or adaptive CFL with optional cap ``dt_max``.

    Returns the final state and snapshots taken every ``snapshot_every``
    time units (first and last always included when requested).
    """
    if model not in ("euler", "ns"):
        raise ParameterError("model must be 'euler' or 'ns'")
    eps = coeffs.params.eps if model == "ns" else 0.0
    m = _model(coeffs, eps)
    snaps = []
    next_snap = 0.0
    t0 = state.time
    s = state
    while True:
        if snapshot_every is not None and s.time - t0 >= next_snap - 1e-12:
            snaps.append(Snapshot(s.time, s.rho.copy(), s.mom.copy()))
            next_snap += snapshot_every
        remaining = t0 + t_end - s.time
        if remaining <= 1e-12 * max(1.0, t_end):
            break
        if dt is None:
            step = cfl_safety * max_stable_dt(s, coeffs, eps)
            if dt_max is not None:
                step = min(step, dt_max)
        else:
            step = dt
        if snapshot_every is not None:
            step = min(step, t0 + next_snap - s.time) if t0 + next_snap - s.time > 1e-12 else step
        step = min(step, remaining)
        s = _advance(s, m, step, order, True, limiter)
    if snapshot_every is not None and (not snaps or snaps[-1].time < s.time):
        snaps.append(Snapshot(s.time, s.rho.copy(), s.mom.copy()))
    return s, snaps


# ---------------------------------------------------------------------------
# initial conditions


def uniform_state(grid: Grid, rho0: float, u0, dim: int = 2) -> FluidState:
    u0 = np.broadcast_to(np.asarray(u0, float), (dim,))
    rho = np.full(grid.cells, float(rho0))
    mom = np.stack([rho * u0[k] for k in range(dim)])
    return FluidState(rho, mom, grid)


def from_primitive(grid: Grid, rho: np.ndarray, u: np.ndarray) -> FluidState:
    rho = np.asarray(rho, float)
    u = np.asarray(u, float)
    return FluidState(rho.copy(), u * rho, grid)


def initial_condition(kind: str, grid: Grid, dim: int = 2, temp: float = 0.2,
                      speed: float = 0.0, amplitude: float = 0.2, width: float = 0.05) -> FluidState:
    """Selector used by the CLI: uniform | density-pulse | shear | riemann."""
    xs = grid.centers()
    x = xs[0]
    L = grid.length
    u = np.zeros((dim,) + grid.cells)
    if kind == "uniform":
        rho = np.ones(grid.cells)
        u[0] = speed
    elif kind == "density-pulse":
        dxp = np.mod(x - 0.5 * L + 0.5 * L, L) - 0.5 * L
        rho = 1.0 + amplitude * np.exp(-dxp ** 2 / (2 * width ** 2))
        u[0] = speed
    elif kind == "shear":
        rho = np.ones(grid.cells)
        u[0] = speed
        u[1] = amplitude * np.sin(2 * np.pi * x / L)
    elif kind == "riemann":
        rho = np.where(np.abs(x - 0.5 * L) < 0.25 * L, 1.0 + amplitude, 1.0)
        u[0] = speed
    else:
        raise ParameterError(f"unknown initial condition {kind!r}")
    return from_primitive(grid, rho, u)


# ---------------------------------------------------------------------------
# feature tracking


def _select(item, selector) -> np.ndarray:
    if callable(selector):
        return np.asarray(selector(item))
    if selector == "rho":
        return item.rho
    if hasattr(item, "omega"):
        vec = item.omega
    else:
        vec = item.mom / item.rho
    if selector == "theta":
        return np.arctan2(vec[1], vec[0])
    if selector == "speed":
        return np.sqrt(np.sum(vec * vec, axis=0))
    if selector.startswith("u") and selector[1:].isdigit():
        return vec[int(selector[1:])]
    raise ParameterError(f"unknown field selector {selector!r}")


def _profile(field_: np.ndarray) -> np.ndarray:
    """Reduce to a 1-D profile along the first axis (average over the rest)."""
    f = np.asarray(field_, float)
    while f.ndim > 1:
        f = f.mean(axis=-1)
    return f


def _peak_position(prof: np.ndarray, h: float, guess: Optional[float], window: float, length: float,
                   sign: float, method: str) -> float:
    n = prof.size
    x = (np.arange(n) + 0.5) * h
    g = sign * prof
    if guess is None:
        guess = x[int(np.argmax(g))]
    dist = np.mod(x - guess + 0.5 * length, length) - 0.5 * length
    inside = np.abs(dist) <= window
    i = int(np.argmax(np.where(inside, g, -np.inf)))
    if method == "peak":
        f0, f1, f2 = g[(i - 1) % n], g[i], g[(i + 1) % n]
        den = f0 - 2 * f1 + f2
        off = 0.5 * (f0 - f2) / den if den != 0 else 0.0
        return (i + 0.5 + off) * h
    # centroid / level work in coordinates relative to the guess
    base = float(np.min(g[inside]))
    w = np.where(inside, g - base, 0.0)
    if method == "centroid":
        return guess + float(np.sum(w * dist) / np.sum(w))
    if method == "level":
        # leading-edge crossing of the half-maximum level (right of the peak)
        half = 0.5 * float(w[i])
        k = i
        for _ in range(n):
            k1 = (k + 1) % n
            if w[k1] < half or not inside[k1]:
                frac = (w[k] - half) / (w[k] - w[k1]) if w[k] != w[k1] else 0.0
                return guess + float(dist[k]) + frac * h
            k = k1
        raise ParameterError("level crossing not found inside the window")
    raise ParameterError(f"unknown tracking method {method!r}")


def feature_positions(history: Sequence, selector="rho", start: Optional[float] = None,
                      window: Optional[float] = None, sign: float = 1.0,
                      length: Optional[float] = None, method: str = "centroid"
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Unwrapped positions of a tracked feature over the snapshots.

    ``method``: ``peak`` (parabolic vertex), ``centroid`` (first moment of
    the field above its window minimum) or ``level`` (half-maximum crossing
    on the leading edge).  The search window of half-width ``window`` follows
    the feature from ``start`` (default: global extremum of the first
    snapshot).
    """
    if len(history) < 3:
        raise ParameterError("need at least 3 snapshots")
    first = _profile(_select(history[0], selector))
    n = first.size
    if length is None:
        grid = getattr(history[0], "grid", None)
        length = grid.length if grid is not None else 1.0
    h = length / n
    win = window if window is not None else 0.25 * length
    times, pos = [], []
    guess = start
    prev = None
    for item in history:
        prof = _profile(_select(item, selector))
        span = float(prof.max() - prof.min())
        if span <= 1e-12 * max(1.0, float(np.max(np.abs(prof)))):
            raise ParameterError("feature not trackable: field is flat")
        p = _peak_position(prof, h, guess, win, length, sign, method)
        if prev is not None:
            p = prev + (np.mod(p - prev + 0.5 * length, length) - 0.5 * length)
        pos.append(p)
        times.append(item.time)
        prev = p
        guess = float(np.mod(p, length))
    return np.asarray(times), np.asarray(pos)


def measure_front_speed(history: Sequence, selector="rho", start: Optional[float] = None,
                        window: Optional[float] = None, sign: float = 1.0,
                        length: Optional[float] = None, method: str = "centroid") -> float:
    """Least-squares speed of a tracked feature (``sign=-1`` tracks a trough)."""
    t, x = feature_positions(history, selector, start, window, sign, length, method)
    return float(np.polyfit(t, x, 1)[0])


def total_momentum_source(state: FluidState, coeffs: DerivedCoefficients, eps: float = 0.0) -> np.ndarray:
    """Cell-summed momentum source (relaxation + NS corrections) of the continuous model."""
    m = _model(coeffs, eps)
    u = state.velocity
    sq = np.sum(u * u, axis=0)
    src = -m.rate * state.rho * u * (sq - m.target_sq)
    if m.active:
        src = src + _ns_terms(m, state.rho, u, state.grid.h)
    return src.reshape(state.dim, -1).sum(axis=1) * state.grid.cell_volume


def relaxation_stiffness(coeffs: DerivedCoefficients, eps: float = 0.0) -> float:
    """Linear rate of the relaxation source near its stable state.

    2 r c^2 about |u| = c when the target c^2 > 0, r |c^2| about u = 0
    otherwise (r = source prefactor).  Strang splitting biases the
    relaxed flux by a factor (1 + (rate dt)^2 / 12), so limit studies cap
    dt at a fraction of 1/rate.
    """
    m = _model(coeffs, eps)
    if m.rate == 0.0:
        return 0.0
    return 2 * m.rate * m.target_sq if m.target_sq > 0 else m.rate * abs(m.target_sq)
