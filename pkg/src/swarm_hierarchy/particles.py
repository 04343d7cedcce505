"""Noisy Cucker-Smale agents with self-propulsion in a periodic box.

    dx_i = v_i dt
    dv_i = [sigma^{-1}(vbar_i - v_i) + tau^{-1}(1 - |v_i|^2/a^2) v_i] dt + sqrt(2D) dB_i

vbar_i is the indicator-kernel average of the velocities within the
interaction radius, self included.  Euler-Maruyama in time.  Noise for step
k is drawn from a Philox stream keyed by (seed, k), so a trajectory does
not depend on the thread count or on how the run is chunked.

Neighbour search has three paths that all return the same vbar:

``pairs``  all-pairs loop (reference oracle);
``cells``  uniform cell list, candidates summed in index order so the result
           is bit-identical to ``pairs``;
``sweep``  1-D only: sorted positions and prefix sums, O(N log N), for radii
           comparable to the box (agrees with ``pairs`` to round-off).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from .coeffs import ModelParams
from .errors import BlowupError, ParameterError, StabilityError

log = logging.getLogger(__name__)

PAIRS_MAX_N = 512


@dataclass
class ParticleState:
    positions: np.ndarray  # (N, dx) in [0, L)
    velocities: np.ndarray  # (N, d)
    box: float
    time: float = 0.0
    rng_seed: int = 0
    step_index: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.atleast_2d(np.asarray(self.positions, float)))
        self.velocities = np.ascontiguousarray(np.atleast_2d(np.asarray(self.velocities, float)))
        if self.positions.shape[0] != self.velocities.shape[0] or self.positions.shape[0] < 1:
            raise ParameterError("positions and velocities must have the same N >= 1")
        if self.positions.shape[1] not in (1, 2):
            raise ParameterError("spatial dimension must be 1 or 2")
        if self.velocities.shape[1] < self.positions.shape[1]:
            raise ParameterError("velocity dimension must be >= spatial dimension")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "ParticleState":
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy())


def interaction_radius(params: ModelParams) -> float:
    """eps R when eps > 0, else R."""
    return params.radius * params.eps if params.eps > 0 else params.radius


# ---------------------------------------------------------------------------
# neighbour averages


@njit(cache=True, inline="always")
def _min_image(d, box):
    if d > 0.5 * box:
        return d - box
    if d < -0.5 * box:
        return d + box
    return d


@njit(cache=True, parallel=True)
def _vbar_pairs(x, v, box, r2):
    n, dx = x.shape
    dv = v.shape[1]
    out = np.empty_like(v)
    for i in prange(n):
        acc = np.zeros(dv)
        cnt = 0
        for j in range(n):
            s = 0.0
            for k in range(dx):
                d = _min_image(x[j, k] - x[i, k], box)
                s += d * d
            if s <= r2:
                for k in range(dv):
                    acc[k] += v[j, k]
                cnt += 1
        for k in range(dv):
            out[i, k] = acc[k] / cnt
    return out


@njit(cache=True)
def _build_cells(x, box, nc):
    n, dx = x.shape
    ncell = nc ** dx
    cell_of = np.empty(n, np.int64)
    for i in range(n):
        c = 0
        for k in range(dx):
            ck = int(x[i, k] / box * nc)
            if ck >= nc:
                ck = nc - 1
            c = c * nc + ck
        cell_of[i] = c
    counts = np.zeros(ncell + 1, np.int64)
    for i in range(n):
        counts[cell_of[i] + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    order = np.empty(n, np.int64)
    fill = counts[:-1].copy()
    for i in range(n):  # ascending i keeps each cell sorted by index
        c = cell_of[i]
        order[fill[c]] = i
        fill[c] += 1
    return cell_of, counts, order


@njit(cache=True, parallel=True)
def _vbar_cells(x, v, box, r2, nc):
    n, dx = x.shape
    dv = v.shape[1]
    cell_of, start, order = _build_cells(x, box, nc)
    out = np.empty_like(v)
    nstencil = 3 ** dx
    for i in prange(n):
        c = cell_of[i]
        ci = np.empty(dx, np.int64)
        rem = c
        for k in range(dx - 1, -1, -1):
            ci[k] = rem % nc
            rem //= nc
        # gather candidates from the 3^dx neighbouring cells
        total = 0
        for s in range(nstencil):
            t = s
            cc = 0
            for k in range(dx):
                off = t % 3 - 1
                t //= 3
                cc = cc * nc + (ci[k] + off) % nc
            total += start[cc + 1] - start[cc]
        cand = np.empty(total, np.int64)
        m = 0
        for s in range(nstencil):
            t = s
            cc = 0
            for k in range(dx):
                off = t % 3 - 1
                t //= 3
                cc = cc * nc + (ci[k] + off) % nc
            for p in range(start[cc], start[cc + 1]):
                cand[m] = order[p]
                m += 1
        cand.sort()
        acc = np.zeros(dv)
        cnt = 0
        for q in range(total):
            j = cand[q]
            s2 = 0.0
            for k in range(dx):
                d = _min_image(x[j, k] - x[i, k], box)
                s2 += d * d
            if s2 <= r2:
                for k in range(dv):
                    acc[k] += v[j, k]
                cnt += 1
        for k in range(dv):
            out[i, k] = acc[k] / cnt
    return out


@njit(cache=True)
def _vbar_sweep_kernel(xs, v, box, r):
    n = xs.size
    dv = v.shape[1]
    order = np.argsort(xs, kind="mergesort")
    m = 3 * n
    ext_x = np.empty(m)
    pref = np.zeros((m + 1, dv))
    for c in range(3):
        for q in range(n):
            ext_x[c * n + q] = xs[order[q]] + (c - 1) * box
    for p in range(m):
        src = order[p % n]
        for k in range(dv):
            pref[p + 1, k] = pref[p, k] + v[src, k]
    out = np.empty_like(v)
    lo = 0
    hi = 0
    for q in range(n):
        xq = ext_x[n + q]
        while ext_x[lo] < xq - r:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < m and ext_x[hi] <= xq + r:
            hi += 1
        cnt = hi - lo
        i = order[q]
        for k in range(dv):
            out[i, k] = (pref[hi, k] - pref[lo, k]) / cnt
    return out


def _vbar_sweep(x: np.ndarray, v: np.ndarray, box: float, r: float) -> np.ndarray:
    """1-D windowed sums via sorting and prefix sums (periodic), two-pointer sweep."""
    return _vbar_sweep_kernel(np.ascontiguousarray(x[:, 0]), v, box, r)


def _cells_per_axis(box: float, r: float) -> int:
    return int(math.floor(box / r)) if r > 0 else 0


def neighbor_mean_all(state: ParticleState, radius: float, method: str = "auto") -> np.ndarray:
    """vbar_i for every particle."""
    box = state.box
    if not radius < box / 2:
        raise ParameterError(f"radius {radius:.4g} must be < L/2 = {box / 2:.4g}")
    x, v = state.positions, state.velocities
    nc = _cells_per_axis(box, radius)
    if method == "auto":
        if state.n <= PAIRS_MAX_N:
            method = "pairs"
        elif nc >= 3:
            method = "cells"
        elif x.shape[1] == 1:
            method = "sweep"
        else:
            method = "pairs"
    if method == "pairs":
        return _vbar_pairs(x, v, box, radius * radius)
    if method == "cells":
        if nc < 3:
            raise ParameterError("cell list needs at least 3 cells per axis (L >= 3 r)")
        return _vbar_cells(x, v, box, radius * radius, nc)
    if method == "sweep":
        if x.shape[1] != 1:
            raise ParameterError("sweep path is 1-D only")
        return _vbar_sweep(x, v, box, radius)
    raise ParameterError(f"unknown neighbour method {method!r}")


def neighbor_mean_velocity(state: ParticleState, i: int, radius: float) -> np.ndarray:
    """vbar_i for one particle (direct loop, self included)."""
    box = state.box
    if not radius < box / 2:
        raise ParameterError(f"radius {radius:.4g} must be < L/2 = {box / 2:.4g}")
    d = state.positions - state.positions[i]
    d = np.where(d > 0.5 * box, d - box, np.where(d < -0.5 * box, d + box, d))
    mask = np.sum(d * d, axis=1) <= radius * radius
    return state.velocities[mask].mean(axis=0)


# ---------------------------------------------------------------------------
# dynamics


def step_noise(seed: int, step_index: int, shape) -> np.ndarray:
    """Standard normals for one step, keyed by (seed, step).

    The step index sits in a high counter word: the low word is what the
    generator increments while drawing, so putting the step there would make
    consecutive steps overlapping shifts of one stream.
    """
    bitgen = np.random.Philox(key=int(seed) & (2 ** 64 - 1), counter=[0, 0, int(step_index), 0])
    return np.random.Generator(bitgen).standard_normal(shape)


def step(state: ParticleState, params: ModelParams, dt: float, method: str = "auto",
         radius: Optional[float] = None) -> ParticleState:
    """One Euler-Maruyama step."""
    lim = 0.1 * min(params.tau, params.sigma)
    if not 0 < dt <= lim * (1 + 1e-12):
        raise StabilityError(f"dt = {dt:.4g} must lie in (0, 0.1 min(tau, sigma)] = (0, {lim:.4g}]")
    r = interaction_radius(params) if radius is None else radius
    x, v = state.positions, state.velocities
    vbar = neighbor_mean_all(state, r, method)
    drift = (vbar - v) / params.sigma
    if not math.isinf(params.tau):
        sp = np.sum(v * v, axis=1, keepdims=True)
        drift = drift + (1.0 - sp / params.a ** 2) * v / params.tau
    v_new = v + dt * drift
    if params.diff > 0:
        v_new = v_new + math.sqrt(2 * params.diff * dt) * step_noise(state.rng_seed, state.step_index, v.shape)
    if not np.all(np.isfinite(v_new)):
        speeds = np.linalg.norm(np.where(np.isfinite(v_new), v_new, np.inf), axis=1)
        bad = int(np.argmax(speeds))
        vmax = float(np.max(np.linalg.norm(v, axis=1)))
        raise BlowupError(f"non-finite velocity for particle {bad} at t = {state.time:.4g} "
                          f"(max |v| before the step {vmax:.4g})")
    dxs = x.shape[1]
    x_new = x + dt * v[:, :dxs]
    x_new = np.mod(x_new, state.box)
    x_new[x_new >= state.box] -= state.box
    return ParticleState(x_new, v_new, state.box, state.time + dt, state.rng_seed, state.step_index + 1)


def run(state: ParticleState, params: ModelParams, dt: float, steps: int, method: str = "auto",
        every: int = 0, cells: Optional[int] = None, radius: Optional[float] = None):
    """Advance ``steps`` steps; returns (final state, list of ObservableRecord)."""
    records = []
    for k in range(steps):
        if every and k % every == 0:
            records.append(observables(state, cells or 1))
        state = step(state, params, dt, method, radius)
    if every:
        records.append(observables(state, cells or 1))
    return state, records


def set_threads(n: Optional[int]) -> None:
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# initial data


def random_state(n: int, box: float, dx: int = 1, d: int = 2, speed: float = 0.0, temp: float = 0.0,
                 seed: int = 0, direction=None) -> ParticleState:
    """Uniform positions; velocities = speed * direction + Gaussian(temp)."""
    rng = np.random.default_rng(np.random.Philox(key=int(seed) + 7919))
    x = rng.uniform(0, box, (n, dx))
    e = np.zeros(d)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, float) / np.linalg.norm(direction)
    v = speed * e + math.sqrt(temp) * rng.standard_normal((n, d))
    return ParticleState(x, v, box, 0.0, seed)


def sample_from_fields(n: int, box: float, rho, u, temp: float, seed: int = 0) -> ParticleState:
    """Quasi-1D sample of rho(x) M_{u(x)}: rho and u given on a uniform cell grid."""
    rho = np.asarray(rho, float)
    u = np.atleast_2d(np.asarray(u, float))
    if u.shape[0] != rho.size:
        u = u.T
    nc = rho.size
    rng = np.random.default_rng(np.random.Philox(key=int(seed) + 104729))
    p = rho / rho.sum()
    cells = rng.choice(nc, size=n, p=p)
    x = (cells + rng.uniform(0, 1, n)) * box / nc
    v = u[cells] + math.sqrt(temp) * rng.standard_normal((n, u.shape[1]))
    return ParticleState(x[:, None], v, box, 0.0, seed)


# ---------------------------------------------------------------------------
# observables


@dataclass
class ObservableRecord:
    order_parameter: float
    mean_speed: float
    binned_density: np.ndarray
    binned_velocity: np.ma.MaskedArray
    time: float
    fluid_speed: float = 0.0  # |sum v| / N


def _bin_index(x: np.ndarray, box: float, cells: int) -> np.ndarray:
    idx = np.floor(x / box * cells).astype(np.int64)
    return np.clip(idx, 0, cells - 1)


def observables(state: ParticleState, cells: int, deposit: str = "ngp") -> ObservableRecord:
    """phi, mean speed and per-cell moments.

    ``deposit="ngp"`` counts particles per cell (sum rho * vol = N exactly);
    ``deposit="cic"`` uses linear cloud-in-cell weights (1-D positions only).
    Cells without particles have their velocity masked.
    """
    v = state.velocities
    n = state.n
    total = v.sum(axis=0)
    speeds = np.linalg.norm(v, axis=1)
    denom = speeds.sum()
    phi = float(np.linalg.norm(total) / denom) if denom > 0 else 0.0
    dx = state.positions.shape[1]
    vol = (state.box / cells) ** dx
    if deposit == "ngp":
        idx = _bin_index(state.positions, state.box, cells)
        flat = np.ravel_multi_index(tuple(idx.T), (cells,) * dx)
        count = np.bincount(flat, minlength=cells ** dx).astype(float)
        mom = np.stack([np.bincount(flat, weights=v[:, k], minlength=cells ** dx) for k in range(v.shape[1])], axis=1)
    elif deposit == "cic":
        if dx != 1:
            raise ParameterError("cic deposit implemented for 1-D positions")
        s = state.positions[:, 0] / state.box * cells - 0.5
        i0 = np.floor(s).astype(np.int64)
        w1 = s - i0
        i0m = np.mod(i0, cells)
        i1m = np.mod(i0 + 1, cells)
        count = (np.bincount(i0m, weights=1 - w1, minlength=cells)
                 + np.bincount(i1m, weights=w1, minlength=cells))
        mom = np.stack([np.bincount(i0m, weights=(1 - w1) * v[:, k], minlength=cells)
                        + np.bincount(i1m, weights=w1 * v[:, k], minlength=cells)
                        for k in range(v.shape[1])], axis=1)
    else:
        raise ParameterError(f"unknown deposit {deposit!r}")
    empty = count <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        u = mom / np.where(empty, 1.0, count)[:, None]
    mask = np.repeat(empty[:, None], v.shape[1], axis=1)
    shape = (cells,) * dx
    return ObservableRecord(
        order_parameter=min(phi, 1.0),
        mean_speed=float(speeds.mean()),
        binned_density=(count / vol).reshape(shape),
        binned_velocity=np.ma.MaskedArray(u, mask=mask).reshape(shape + (v.shape[1],)),
        time=state.time,
        fluid_speed=float(np.linalg.norm(total) / n),
    )
