"""Solvers for the fast-relaxation limit models.

* SOH system for (rho, omega), |omega| = 1::

      d_t rho + div(c1 rho omega) = 0
      d_t omega + c2 (omega . grad) omega + delta P_omega grad ln rho = 0

  with P_omega = Id - omega (x) omega.  The solver only sees the triple
  (c1, c2, delta), so it serves both the plain limit (c, c, T/c) and the
  alpha-limit (c1(alpha), c2(alpha), delta_alpha).

* Heat equation d_t rho = D_diff Lap rho with the reconstructed velocity
  u = -D_diff grad ln rho.

Grids are the periodic ``hydro.Grid`` (one or two axes); omega has two
components.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coeffs import DerivedCoefficients, derive
from .errors import ParameterError, RegimeError, StabilityError, VacuumError
from .hydro import CFL_MAX, FluidState, Grid, _slope

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-12
DIFF_EXPLICIT_MAX = 0.25


@dataclass(frozen=True)
class SOHSpeeds:
    c1: float
    c2: float
    delta: float

    def __iter__(self):
        return iter((self.c1, self.c2, self.delta))


def speeds_from_coeffs(coeffs: DerivedCoefficients, alpha: Optional[float] = None,
                       printed: bool = False) -> SOHSpeeds:
    """(c, c, T/c) for alpha = 0 (or None), else (c1(alpha), c2(alpha), delta_alpha).

    ``printed=True`` uses the printed closed form of T_alpha for delta.
    """
    p = coeffs.params
    if coeffs.temp >= coeffs.temp_crit:
        raise RegimeError(f"SOH needs T < T_c = {coeffs.temp_crit:.4g} (T = {coeffs.temp:.4g})")
    if alpha is None or alpha == 0.0:
        c = coeffs.comfort_speed
        return SOHSpeeds(c, c, coeffs.temp / c)
    dc = derive(p, alpha=alpha)
    if dc.c1_alpha is None:
        raise RegimeError(f"T = {coeffs.temp:.4g} >= T_c(alpha) = {dc.temp_crit_alpha:.4g}")
    ta = dc.temp_alpha_printed if printed else dc.temp_alpha
    if ta < 0:
        log.warning("T_alpha = %.4g < 0: delta is negative and the SOH system loses hyperbolicity", ta)
    return SOHSpeeds(dc.c1_alpha, dc.c2_alpha, ta / dc.c1_alpha)


@dataclass
class SOHState:
    rho: np.ndarray
    omega: np.ndarray  # (2,) + grid shape
    grid: Grid
    speeds: SOHSpeeds
    time: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(self.rho.sum() * self.grid.cell_volume)

    @property
    def norm_defect(self) -> float:
        return float(np.max(np.abs(np.sqrt(np.sum(self.omega ** 2, axis=0)) - 1.0)))

    def copy(self) -> "SOHState":
        return SOHState(self.rho.copy(), self.omega.copy(), self.grid, self.speeds, self.time)


def _normalize(omega: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(omega ** 2, axis=0))
    if np.any(n == 0):
        raise ParameterError("omega vanishes in some cell; direction undefined")
    return omega / n


def from_angle(grid: Grid, rho: np.ndarray, theta: np.ndarray, speeds: SOHSpeeds) -> SOHState:
    om = np.stack([np.cos(theta), np.sin(theta)])
    return SOHState(np.asarray(rho, float).copy(), om, grid, speeds)


def from_fluid(state: FluidState, speeds: SOHSpeeds) -> SOHState:
    """(rho, u/|u|) of a fluid state."""
    if state.dim != 2:
        raise ParameterError("SOH solver needs d = 2 velocities")
    return SOHState(state.rho.copy(), _normalize(state.velocity), state.grid, speeds, state.time)


# ---------------------------------------------------------------------------
# discretization


def _grad_log(rho: np.ndarray, h: float) -> list[np.ndarray]:
    lr = np.log(rho)
    return [(np.roll(lr, -1, k) - np.roll(lr, 1, k)) / (2 * h) for k in range(rho.ndim)]


def _check_rho(rho: np.ndarray, when: float) -> None:
    if not np.all(rho > RHO_FLOOR * abs(float(np.mean(rho)))):
        raise VacuumError(f"density below {RHO_FLOOR:g} * mean at t = {when:.4g}")


def _rhs(rho, om, sp: SOHSpeeds, h: float, order: int, limiter: str):
    nd = rho.ndim
    c1, c2, delta = sp
    d_rho = np.zeros_like(rho)
    d_om = np.zeros_like(om)
    for k in range(nd):
        # mass: upwind flux of q = rho omega_k, direction from the face-averaged omega_k
        q = rho * om[k]
        if order == 2:
            sq = _slope(q, k, limiter)
            so = _slope(om, k + 1, limiter)
            q_l = q + 0.5 * sq
            q_r = np.roll(q - 0.5 * sq, -1, k)
            om_minus = om + 0.5 * so  # left state at face i+1/2
            om_plus = np.roll(om - 0.5 * so, -1, k + 1)  # right state at face i+1/2
        else:
            q_l, q_r = q, np.roll(q, -1, k)
            om_minus, om_plus = om, np.roll(om, -1, k + 1)
        wf = 0.5 * (om[k] + np.roll(om[k], -1, k))
        flux = c1 * np.where(wf >= 0, q_l, q_r)
        d_rho -= (flux - np.roll(flux, 1, k)) / h
        # omega: upwind transport at speed c2 omega_k
        dm = (om_minus - np.roll(om_minus, 1, k + 1)) / h
        dp = (om_plus - np.roll(om_plus, 1, k + 1)) / h
        v = c2 * om[k]
        d_om -= np.maximum(v, 0.0) * dm + np.minimum(v, 0.0) * dp
    g = _grad_log(rho, h)
    om_g = sum(om[k] * g[k] for k in range(nd))
    for j in range(om.shape[0]):
        gj = g[j] if j < nd else 0.0
        d_om[j] -= delta * (gj - om_g * om[j])
    return d_rho, d_om


def soh_speed_bound(state: SOHState) -> float:
    """Signal speed used for the CFL check.

    The larger of max(c1, c2 + |delta| max|grad ln rho| h) and the
    characteristic bound sqrt(max(c1, c2)^2 + c1 |delta|), which dominates
    the eigenvalues of the frozen-coefficient system for every direction.
    """
    c1, c2, delta = state.speeds
    h = state.grid.h
    g = _grad_log(state.rho, h)
    gmax = float(np.max(np.sqrt(sum(gk * gk for gk in g))))
    return max(abs(c1), abs(c2) + abs(delta) * gmax * h,
               math.sqrt(max(abs(c1), abs(c2)) ** 2 + abs(c1 * delta)))


def max_stable_dt(state: SOHState) -> float:
    return CFL_MAX * state.grid.h / soh_speed_bound(state)


def soh_step(state: SOHState, dt: float, order: int = 1, limiter: str = "mc",
             renormalize: bool = True, check: bool = True) -> SOHState:
    """One SSP-RK2 step followed by cellwise renormalization of omega."""
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    if order not in (1, 2):
        raise ParameterError("order must be 1 or 2")
    h = state.grid.h
    if check:
        _check_rho(state.rho, state.time)
        cfl = dt * soh_speed_bound(state) / h
        if cfl > CFL_MAX * (1 + 1e-12):
            raise StabilityError(f"SOH CFL number {cfl:.3f} exceeds {CFL_MAX}")
    rho, om = state.rho, state.omega
    r1, o1 = _rhs(rho, om, state.speeds, h, order, limiter)
    rho1 = rho + dt * r1
    om1 = om + dt * o1
    _check_rho(rho1, state.time)
    r2, o2 = _rhs(rho1, om1, state.speeds, h, order, limiter)
    rho_n = 0.5 * (rho + rho1 + dt * r2)
    om_n = 0.5 * (om + om1 + dt * o2)
    _check_rho(rho_n, state.time + dt)
    if renormalize:
        om_n = _normalize(om_n)
    return SOHState(rho_n, om_n, state.grid, state.speeds, state.time + dt)


def soh_run(state: SOHState, t_end: float, dt: Optional[float] = None, order: int = 1,
            limiter: str = "mc", snapshot_every: Optional[float] = None,
            cfl_safety: float = 0.9) -> tuple[SOHState, list]:
    """Integrate to ``t_end`` (fixed ``dt`` or adaptive CFL); returns (final, snapshots)."""
    snaps: list = []
    t0 = state.time
    next_snap = 0.0
    s = state
    while True:
        if snapshot_every is not None and s.time - t0 >= next_snap - 1e-12:
            snaps.append(s.copy())
            next_snap += snapshot_every
        remaining = t0 + t_end - s.time
        if remaining <= 1e-12 * max(1.0, t_end):
            break
        step = dt if dt is not None else cfl_safety * max_stable_dt(s)
        if snapshot_every is not None and t0 + next_snap - s.time > 1e-12:
            step = min(step, t0 + next_snap - s.time)
        s = soh_step(s, min(step, remaining), order=order, limiter=limiter)
    if snapshot_every is not None and (not snaps or snaps[-1].time < s.time):
        snaps.append(s.copy())
    return s, snaps


def norm_drift_probe(state: SOHState, steps: int, dt: float, order: int = 1) -> float:
    """max ||omega| - 1| after ``steps`` steps with renormalization disabled."""
    s = state.copy()
    s.omega = _normalize(s.omega)
    for _ in range(int(steps)):
        s = soh_step(s, dt, order=order, renormalize=False)
    return s.norm_defect


# ---------------------------------------------------------------------------
# linearization


def _quasilinear_rhs(u: np.ndarray, ux: np.ndarray, sp: SOHSpeeds) -> np.ndarray:
    """Pointwise d_t (rho, theta) for a field depending on x only."""
    rho, th = u
    rx, tx = ux
    c1, c2, delta = sp
    d_rho = -c1 * (rx * math.cos(th) - rho * math.sin(th) * tx)
    # omega_perp . (-delta P grad ln rho) = -delta (-sin th) rho_x / rho
    d_th = -c2 * math.cos(th) * tx + delta * math.sin(th) * rx / rho
    return np.array([d_rho, d_th])


def linear_speeds(rho0: float, theta0: float, speeds: SOHSpeeds, step: float = 1e-7):
    """Eigen-decomposition of the frozen-coefficient Jacobian A in U_t + A U_x = 0.

    A is obtained by central finite differences of the pointwise quasilinear
    right-hand side in U_x; returns (eigenvalues, right eigenvectors) sorted
    by eigenvalue, for U = (rho, theta) with x-dependence only.
    """
    u = np.array([rho0, theta0], float)
    A = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        A[:, j] = -(_quasilinear_rhs(u, e, speeds) - _quasilinear_rhs(u, -e, speeds)) / (2 * step)
    lam, vec = np.linalg.eig(A)
    if np.any(np.abs(lam.imag) > 1e-12):
        raise RegimeError("frozen-coefficient system is not hyperbolic here (delta < 0?)")
    order = np.argsort(lam.real)
    return lam.real[order], vec.real[:, order]


def mode_pulse(grid: Grid, rho0: float, theta0: float, speeds: SOHSpeeds, mode: int,
               amplitude: float = 1e-3, width: float = 0.05, center: float = 0.5) -> SOHState:
    """Small Gaussian pulse along the ``mode``-th right eigenvector of the linearization."""
    lam, vec = linear_speeds(rho0, theta0, speeds)
    x = grid.centers()[0]
    L = grid.length
    dx = np.mod(x - center * L + 0.5 * L, L) - 0.5 * L
    bump = amplitude * np.exp(-dx ** 2 / (2 * width ** 2))
    r = vec[:, mode] / np.max(np.abs(vec[:, mode]))
    return from_angle(grid, rho0 + r[0] * bump, theta0 + r[1] * bump, speeds)


def mode_amplitude(state: SOHState, rho0: float, theta0: float, mode: int) -> np.ndarray:
    """Projection of (rho - rho0, theta - theta0) on the ``mode``-th characteristic field."""
    lam, vec = linear_speeds(rho0, theta0, state.speeds)
    left = np.linalg.inv(vec)
    th = np.arctan2(state.omega[1], state.omega[0])
    dth = np.mod(th - theta0 + np.pi, 2 * np.pi) - np.pi
    return left[mode, 0] * (state.rho - rho0) + left[mode, 1] * dth


# ---------------------------------------------------------------------------
# comparison metrics


def fourier_shift(f: np.ndarray, shift: float, length: float, axis: int = -1) -> np.ndarray:
    """Periodic translation f(x - shift) by spectral interpolation."""
    n = f.shape[axis]
    k = np.fft.fftfreq(n, d=length / n) * 2 * np.pi
    shape = [1] * f.ndim
    shape[axis] = n
    ph = np.exp(-1j * k * shift).reshape(shape)
    return np.real(np.fft.ifft(np.fft.fft(f, axis=axis) * ph, axis=axis))


def l1_relative(rho, omega, rho_ref, omega_ref) -> tuple[float, float]:
    """Relative L^1 distances of rho and of omega (cellwise Euclidean norm)."""
    e_rho = float(np.abs(rho - rho_ref).sum() / np.abs(rho_ref).sum())
    num = np.sqrt(np.sum((omega - omega_ref) ** 2, axis=0)).sum()
    den = np.sqrt(np.sum(omega_ref ** 2, axis=0)).sum()
    return e_rho, float(num / den)


def galilean_defect(c1: float, c2: float, delta: float, cells: int = 256, t_end: float = 0.5,
                    amplitude: float = 1e-4, width: float = 0.05, order: int = 2) -> float:
    """Co-moving-frame defect of a co-located (rho, theta) pulse riding on omega = x_hat.

    The pulse is advected and compared with the initial data translated by
    c1 t (the frame velocity of the density).  Returns the L^1 distance of the
    perturbation relative to the L^1 size of the initial perturbation.  With
    c1 = c2 both components ride with the frame and the defect is at the
    discretization level; with c1 != c2 the omega pulse slips against it.
    """
    grid = Grid((cells,), 1.0)
    x = grid.centers()[0]
    dxp = np.mod(x - 0.5 + 0.5, 1.0) - 0.5
    bump = amplitude * np.exp(-dxp ** 2 / (2 * width ** 2))
    sp = SOHSpeeds(c1, c2, delta)
    s0 = from_angle(grid, 1.0 + bump, bump, sp)
    s1, _ = soh_run(s0, t_end, order=order)
    shift = c1 * t_end
    rho_ref = fourier_shift(s0.rho, shift, 1.0)
    th_ref = fourier_shift(bump, shift, 1.0)
    th = np.arctan2(s1.omega[1], s1.omega[0])
    num = np.abs(s1.rho - rho_ref).sum() + np.abs(th - th_ref).sum()
    den = np.abs(s0.rho - 1.0).sum() + np.abs(bump).sum()
    return float(num / den)


# ---------------------------------------------------------------------------
# initial conditions


def initial_condition(kind: str, grid: Grid, speeds: SOHSpeeds, amplitude: float = 0.2,
                      theta_amplitude: float = 0.3, width: float = 0.05) -> SOHState:
    """Selector used by the CLI: uniform | density-pulse | theta-pulse | split | perturbed."""
    x = grid.centers()[0]
    L = grid.length

    def bump(c):
        d = np.mod(x - c * L + 0.5 * L, L) - 0.5 * L
        return np.exp(-d ** 2 / (2 * width ** 2))

    rho = np.ones(grid.cells)
    th = np.zeros(grid.cells)
    if kind == "uniform":
        pass
    elif kind == "density-pulse":
        rho = rho + amplitude * bump(0.5)
    elif kind == "theta-pulse":
        th = theta_amplitude * bump(0.5)
    elif kind == "split":
        rho = rho + amplitude * bump(0.25)
        th = theta_amplitude * bump(0.6)
    elif kind == "perturbed":
        rho = rho + amplitude * np.sin(2 * np.pi * x / L)
        th = theta_amplitude * np.sin(2 * np.pi * x / L + 1.0)
    else:
        raise ParameterError(f"unknown initial condition {kind!r}")
    return from_angle(grid, rho, th, speeds)


# ---------------------------------------------------------------------------
# diffusion limit


@dataclass
class DiffusionState:
    rho: np.ndarray
    d_diff: float
    grid: Grid
    time: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(self.rho.sum() * self.grid.cell_volume)

    def copy(self) -> "DiffusionState":
        return DiffusionState(self.rho.copy(), self.d_diff, self.grid, self.time)


def diffusion_velocity(rho: np.ndarray, d_diff: float, h: float, strict: bool = False) -> np.ndarray:
    """u = -D_diff grad ln rho (centred), with d = max(ndim, 2) components.

    Cells whose stencil touches a density below ``RHO_FLOOR * mean`` have no
    defined velocity: they are masked, or raise VacuumError with ``strict``.
    """
    if strict:
        _check_rho(rho, float("nan"))
    low = ~(rho > RHO_FLOOR * abs(float(np.mean(rho))))
    g = _grad_log(np.where(low, 1.0, rho), h)
    undefined = low.copy()
    for k in range(rho.ndim):
        undefined |= np.roll(low, -1, k) | np.roll(low, 1, k)
    ncomp = max(rho.ndim, 2)
    u = np.zeros((ncomp,) + rho.shape)
    for k in range(rho.ndim):
        u[k] = np.where(undefined, 0.0, -d_diff * g[k])
    if strict:
        return u
    return np.ma.MaskedArray(u, mask=np.broadcast_to(undefined, u.shape))


def _laplacian_symbol(grid: Grid) -> np.ndarray:
    n = grid.cells[0]
    h = grid.h
    k = 2 * np.pi * np.fft.fftfreq(n)
    s1 = -(4.0 / h ** 2) * np.sin(k / 2) ** 2
    if grid.ndim == 1:
        return s1
    return s1[:, None] + s1[None, :]


def diffusion_step(state: DiffusionState, dt: float, mode: str = "explicit"
                   ) -> tuple[DiffusionState, np.ndarray]:
    """One heat step; returns the new state and u = -D_diff grad ln rho.

    ``explicit``: forward Euler with the (2 ndim + 1)-point Laplacian,
    requires dt D / h^2 <= 1/4.  ``implicit``: trapezoidal (Crank-Nicolson),
    solved exactly in Fourier space on the periodic grid.
    """
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    D = state.d_diff
    h = state.grid.h
    rho = state.rho
    if mode == "explicit":
        if dt * D / h ** 2 > DIFF_EXPLICIT_MAX * (1 + 1e-12):
            raise StabilityError(f"dt D / h^2 = {dt * D / h ** 2:.3f} exceeds {DIFF_EXPLICIT_MAX}")
        lap = np.zeros_like(rho)
        for k in range(rho.ndim):
            lap += np.roll(rho, -1, k) - 2 * rho + np.roll(rho, 1, k)
        new = rho + dt * D * lap / h ** 2
    elif mode == "implicit":
        sym = _laplacian_symbol(state.grid)
        amp = (1 + 0.5 * dt * D * sym) / (1 - 0.5 * dt * D * sym)
        new = np.real(np.fft.ifftn(np.fft.fftn(rho) * amp))
    else:
        raise ParameterError("mode must be 'explicit' or 'implicit'")
    out = DiffusionState(new, D, state.grid, state.time + dt)
    return out, diffusion_velocity(new, D, h)


def diffusion_run(state: DiffusionState, t_end: float, dt: Optional[float] = None,
                  mode: str = "explicit", snapshot_every: Optional[float] = None):
    """Integrate the heat equation to ``t_end``; returns (final, snapshots)."""
    if dt is None:
        dt = 0.9 * DIFF_EXPLICIT_MAX * state.grid.h ** 2 / state.d_diff
    snaps = []
    t0 = state.time
    next_snap = 0.0
    s = state
    while True:
        if snapshot_every is not None and s.time - t0 >= next_snap - 1e-12:
            snaps.append(s.copy())
            next_snap += snapshot_every
        remaining = t0 + t_end - s.time
        if remaining <= 1e-12 * max(1.0, t_end):
            break
        step = dt
        if snapshot_every is not None and t0 + next_snap - s.time > 1e-12:
            step = min(step, t0 + next_snap - s.time)
        s, _ = diffusion_step(s, min(step, remaining), mode)
    if snapshot_every is not None and (not snaps or snaps[-1].time < s.time):
        snaps.append(s.copy())
    return s, snaps


def heat_kernel_periodic(x: np.ndarray, center: float, var0: float, d_diff: float, t: float,
                         length: float = 1.0, images: int = 6) -> np.ndarray:
    """Periodized 1-D Gaussian of variance var0 + 2 D t (unit mass)."""
    var = var0 + 2 * d_diff * t
    out = np.zeros_like(np.asarray(x, float))
    for m in range(-images, images + 1):
        out = out + np.exp(-(x - center - m * length) ** 2 / (2 * var))
    return out / math.sqrt(2 * math.pi * var)
