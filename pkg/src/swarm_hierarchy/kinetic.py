"""Spatially homogeneous velocity-space solver for the Fokker-Planck alignment operator.

Q(f) = div_v[ sigma^{-1} (v - u_f) f + D grad_v f ] on a cell-centred box
[-v_max, v_max]^d (d = 1 or 2) with zero flux through the box boundary.
Face fluxes use arithmetic averages for f and central differences for
grad f, so the discrete operator is in divergence form and conserves mass
to round-off.

Three time integrators are offered:

``explicit``        forward Euler, guarded by the parabolic and drift limits;
``semi-implicit``   backward Euler for the D term (factored once), explicit drift;
``implicit``        backward Euler for the whole operator, with the drift centre
                    iterated to the mean velocity of the new state; the only
                    choice for stiff eps^{-1} Q.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .coeffs import ModelParams
from .errors import ParameterError, StabilityError, VacuumError

log = logging.getLogger(__name__)

MODES = ("explicit", "semi-implicit", "implicit")
_IMPLICIT_ITERS = 30


@dataclass(frozen=True)
class VelocityGrid:
    v_max: float
    n: int
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError("velocity grids support d = 1 or 2 only")
        if self.n < 4 or not self.v_max > 0:
            raise ParameterError("need n >= 4 and v_max > 0")

    @property
    def spacing(self) -> float:
        return 2.0 * self.v_max / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def axis(self) -> np.ndarray:
        h = self.spacing
        return -self.v_max + h * (np.arange(self.n) + 0.5)

    @property
    def faces(self) -> np.ndarray:
        """Interior face coordinates (n - 1 of them)."""
        h = self.spacing
        return -self.v_max + h * np.arange(1, self.n)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def check_budget(self, u, temp: float) -> None:
        need = float(np.max(np.abs(u))) + 6.0 * math.sqrt(temp)
        if self.v_max < need:
            raise ParameterError(
                f"v_max = {self.v_max:.4g} below the tail budget |u| + 6 sqrt(T) = {need:.4g}")


@dataclass
class DistributionFunction:
    values: np.ndarray
    grid: VelocityGrid

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    @property
    def momentum(self) -> np.ndarray:
        return np.array([(self.values * m).sum() for m in self.grid.mesh()]) * self.grid.cell_volume

    @property
    def mean_velocity(self) -> np.ndarray:
        m = self.mass
        if not m > 0:
            raise VacuumError("distribution has zero mass; u_f undefined")
        return self.momentum / m

    def copy(self) -> "DistributionFunction":
        return DistributionFunction(self.values.copy(), self.grid)


def maxwellian(grid: VelocityGrid, u, temp: float, rho: float = 1.0) -> DistributionFunction:
    """rho M_u sampled at the cell centres."""
    u = np.broadcast_to(np.asarray(u, float), (grid.dim,))
    r2 = sum((m - uk) ** 2 for m, uk in zip(grid.mesh(), u))
    vals = rho * (2 * math.pi * temp) ** (-grid.dim / 2) * np.exp(-r2 / (2 * temp))
    return DistributionFunction(vals, grid)


def bimaxwellian(grid: VelocityGrid, u1, u2, temp: float, m1: float = 0.5,
                 m2: float = 0.5) -> DistributionFunction:
    f = maxwellian(grid, u1, temp, m1)
    f.values += maxwellian(grid, u2, temp, m2).values
    return f


def uniform_box(grid: VelocityGrid, half_width: float, center=0.0) -> DistributionFunction:
    c = np.broadcast_to(np.asarray(center, float), (grid.dim,))
    inside = np.ones(grid.shape, bool)
    for m, ck in zip(grid.mesh(), c):
        inside &= np.abs(m - ck) <= half_width
    vals = inside / (2 * half_width) ** grid.dim
    return DistributionFunction(vals.astype(float), grid)


def initial_condition(kind: str, grid: VelocityGrid, temp: float, u=None) -> DistributionFunction:
    """Selector used by the CLI: maxwellian | bimaxwellian | uniform-box."""
    u = np.zeros(grid.dim) if u is None else np.broadcast_to(np.asarray(u, float), (grid.dim,))
    if kind == "maxwellian":
        return maxwellian(grid, u, temp)
    if kind == "bimaxwellian":
        shift = np.zeros(grid.dim)
        shift[0] = 1.5 * math.sqrt(temp)
        return bimaxwellian(grid, u + shift, u - shift, temp, 0.7, 0.3)
    if kind == "uniform-box":
        return uniform_box(grid, 2.0 * math.sqrt(temp), u)
    raise ParameterError(f"unknown initial condition {kind!r}")


# ---------------------------------------------------------------------------
# operator


def _face_avg(f, axis):
    lo = [slice(None)] * f.ndim
    hi = [slice(None)] * f.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return f[tuple(lo)], f[tuple(hi)]


def _divergence(flux, axis, h):
    """(F_{i+1/2} - F_{i-1/2}) / h with zero flux at both boundary faces."""
    pad = [(0, 0)] * flux.ndim
    pad[axis] = (1, 1)
    fp = np.pad(flux, pad)
    lo, hi = _face_avg(fp, axis)
    return (hi - lo) / h


def _face_coord(grid: VelocityGrid, axis: int) -> np.ndarray:
    shape = [1] * grid.dim
    shape[axis] = grid.n - 1
    return grid.faces.reshape(shape)


def _center_coord(grid: VelocityGrid, axis: int) -> np.ndarray:
    shape = [1] * grid.dim
    shape[axis] = grid.n
    return grid.axis.reshape(shape)


def q_values(f: np.ndarray, grid: VelocityGrid, sigma: float, diff: float, u_f) -> np.ndarray:
    h = grid.spacing
    out = np.zeros_like(f)
    for k in range(grid.dim):
        fl, fr = _face_avg(f, k)
        flux = (_face_coord(grid, k) - u_f[k]) * 0.5 * (fl + fr) / sigma + diff * (fr - fl) / h
        out += _divergence(flux, k, h)
    return out


def apply_q(f: DistributionFunction, params: ModelParams) -> DistributionFunction:
    """Discrete Q(f), with u_f from midpoint quadrature of f."""
    u_f = f.mean_velocity
    return DistributionFunction(q_values(f.values, f.grid, params.sigma, params.diff, u_f), f.grid)


def _propulsion_field(grid: VelocityGrid, axis: int, a: float) -> np.ndarray:
    """k-th component of (1 - |v|^2/a^2) v on the faces normal to axis k."""
    coords = [_center_coord(grid, j) if j != axis else _face_coord(grid, j) for j in range(grid.dim)]
    r2 = sum(c * c for c in coords)
    return (1.0 - r2 / (a * a)) * coords[axis]


def propulsion_values(f: np.ndarray, grid: VelocityGrid, tau: float, a: float) -> np.ndarray:
    """-tau^{-1} div_v((1 - |v|^2/a^2) v f), first-order upwind, zero boundary flux."""
    if math.isinf(tau):
        return np.zeros_like(f)
    h = grid.spacing
    out = np.zeros_like(f)
    for k in range(grid.dim):
        fl, fr = _face_avg(f, k)
        A = _propulsion_field(grid, k, a)
        flux = np.where(A > 0, A * fl, A * fr)
        out -= _divergence(flux, k, h) / tau
    return out


def discrete_log_equilibrium(grid: VelocityGrid, u, temp: float) -> np.ndarray:
    """log of the normalized stationary state of the discrete Q with u_f = u frozen.

    Zero face flux gives f_{i+1} / f_i = (1 - r) / (1 + r) with
    r = (v_{i+1/2} - u) h / (2 T); the d-dimensional state is the product of
    the 1-D ones.  Needs the cell Peclet number |r| < 1.
    """
    h = grid.spacing
    logs = []
    for k in range(grid.dim):
        r = (grid.faces - u[k]) * h / (2 * temp)
        if np.any(np.abs(r) >= 1):
            raise ParameterError("cell Peclet number >= 1: refine the velocity grid")
        lg = np.concatenate([[0.0], np.cumsum(np.log1p(-r) - np.log1p(r))])
        top = lg.max()
        lg -= top + math.log(np.exp(lg - top).sum() * h)
        logs.append(lg)
    return sum(np.meshgrid(*logs, indexing="ij"))


def free_energy(f: DistributionFunction, temp: float, reference: str = "discrete") -> float:
    """H[f] = sum f ln(f / M_{u_f}) h^d (cells with f <= 0 contribute nothing).

    ``reference="continuous"`` uses the sampled Gaussian M_{u_f};
    ``reference="discrete"`` uses the stationary state of the discrete
    operator, which is an O(h^2) perturbation of it and the quantity the
    scheme actually dissipates.
    """
    g = f.grid
    u = f.mean_velocity
    vals = f.values
    pos = vals > 0
    if reference == "discrete":
        log_m = discrete_log_equilibrium(g, u, temp)
    elif reference == "continuous":
        r2 = sum((m - uk) ** 2 for m, uk in zip(g.mesh(), u))
        log_m = -0.5 * g.dim * math.log(2 * math.pi * temp) - r2 / (2 * temp)
    else:
        raise ParameterError(f"unknown reference {reference!r}")
    integrand = np.where(pos, vals * (np.log(np.where(pos, vals, 1.0)) - log_m), 0.0)
    return float(integrand.sum() * g.cell_volume)


# sparse assembly for the implicit modes


def _tridiag_1d(lower, diag, upper) -> sparse.csr_matrix:
    return sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def _axis_operator(grid: VelocityGrid, axis: int, face_coeff_lo, face_coeff_hi) -> sparse.csr_matrix:
    """Lift the 1-D face stencil on ``axis`` to the full grid.

    ``face_coeff_lo/hi`` are (n-1,) or broadcastable arrays c_L, c_R with
    F_{i+1/2} = c_L f_i + c_R f_{i+1}.  Only face coefficients independent of
    the other axes are supported (true for Q); the propulsion operator is
    assembled separately.
    """
    n = grid.n
    h = grid.spacing
    cl = np.asarray(face_coeff_lo, float)
    cr = np.asarray(face_coeff_hi, float)
    # (Qf)_i = (F_{i+1/2} - F_{i-1/2}) / h
    diag = np.zeros(n)
    diag[:-1] += cl / h
    diag[1:] -= cr / h
    upper = cr / h
    lower = -cl / h
    a1 = _tridiag_1d(lower, diag, upper)
    eye = sparse.identity(n, format="csr")
    mats = [eye] * grid.dim
    mats[axis] = a1
    out = mats[0]
    for m in mats[1:]:
        out = sparse.kron(out, m, format="csr")
    return out


def q_matrix(grid: VelocityGrid, sigma: float, diff: float, u_f, drift: bool = True,
             diffusion: bool = True) -> sparse.csr_matrix:
    """Sparse matrix of the discrete Q with u_f frozen (C-order flattening)."""
    h = grid.spacing
    out = sparse.csr_matrix((grid.n ** grid.dim,) * 2)
    for k in range(grid.dim):
        cl = np.zeros(grid.n - 1)
        cr = np.zeros(grid.n - 1)
        if drift:
            c = (grid.faces - u_f[k]) * 0.5 / sigma
            cl += c
            cr += c
        if diffusion:
            cl -= diff / h
            cr += diff / h
        out = out + _axis_operator(grid, k, cl, cr)
    return out.tocsc()


def propulsion_matrix(grid: VelocityGrid, tau: float, a: float) -> sparse.csr_matrix:
    """Sparse matrix of :func:`propulsion_values` (built column by column of the stencil)."""
    N = grid.n ** grid.dim
    if math.isinf(tau):
        return sparse.csr_matrix((N, N))
    h = grid.spacing
    idx = np.arange(N).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for k in range(grid.dim):
        A = np.broadcast_to(_propulsion_field(grid, k, a),
                            tuple(grid.n - 1 if j == k else grid.n for j in range(grid.dim)))
        il, ir = _face_avg(idx, k)
        up = np.where(A > 0, il, ir)
        # flux F = A f_up is the right face of il and the left face of ir
        for tgt, sgn in ((il, -1.0), (ir, 1.0)):
            rows.append(tgt.ravel())
            cols.append(up.ravel())
            vals.append((sgn * A / (h * tau)).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))


# ---------------------------------------------------------------------------
# time integration


@dataclass
class RelaxRecord:
    times: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    speed: np.ndarray
    free_energy: np.ndarray
    free_energy_continuous: np.ndarray


def explicit_dt_limits(grid: VelocityGrid, params: ModelParams, eps: float = 1.0,
                       mode: str = "explicit", propulsion: bool = False) -> dict:
    """Step-size limits of the explicit parts: drift, diffusion (explicit mode), propulsion."""
    h = grid.spacing
    D = params.diff / eps
    lim_diff = h * h / (2 * grid.dim * D) if D > 0 else math.inf
    lim_drift = eps * params.sigma * h / (2 * grid.v_max)
    lims = {"drift": lim_drift}
    if mode == "explicit":
        lims["diffusion"] = lim_diff
    if propulsion and not math.isinf(params.tau):
        amax = max(float(np.max(np.abs(_propulsion_field(grid, k, params.a)))) for k in range(grid.dim))
        lims["propulsion"] = params.tau * h / (grid.dim * amax)
    return lims


def max_explicit_dt(grid: VelocityGrid, params: ModelParams, eps: float = 1.0,
                    mode: str = "explicit", propulsion: bool = False) -> float:
    return min(explicit_dt_limits(grid, params, eps, mode, propulsion).values())


def _check_explicit_dt(grid: VelocityGrid, params: ModelParams, dt: float, eps: float,
                       mode: str, propulsion: bool) -> None:
    lims = explicit_dt_limits(grid, params, eps, mode, propulsion)
    name, lim = min(lims.items(), key=lambda kv: kv[1])
    if dt > lim:
        raise StabilityError(f"dt = {dt:.3g} exceeds the {name} limit {lim:.3g} in {mode} mode")


def _integrate(f0: DistributionFunction, params: ModelParams, t_end: float, dt: float,
               eps: float, propulsion: bool, mode: str,
               callback: Optional[Callable[[float, DistributionFunction], None]]) -> DistributionFunction:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    if not dt > 0 or not t_end >= 0:
        raise ParameterError("need dt > 0 and t_end >= 0")
    if not eps > 0:
        raise ParameterError("eps must be > 0")
    grid = f0.grid
    if mode != "implicit":
        _check_explicit_dt(grid, params, dt, eps, mode, propulsion)
    f = f0.copy()
    m0 = f.mass
    if not m0 > 0:
        raise VacuumError("initial distribution has zero mass")
    n_steps = int(math.ceil(t_end / dt - 1e-12))
    shape = grid.shape
    sig, D = params.sigma, params.diff
    use_prop = propulsion and not math.isinf(params.tau)
    lu_diff = None
    prop_mat = None
    if mode == "semi-implicit":
        qd = q_matrix(grid, sig, D, np.zeros(grid.dim), drift=False) / eps
        lu_diff = splinalg.splu((sparse.identity(qd.shape[0], format="csc") - dt * qd).tocsc())
    if mode == "implicit" and use_prop:
        prop_mat = propulsion_matrix(grid, params.tau, params.a)
    eye = sparse.identity(grid.n ** grid.dim, format="csc")
    t = 0.0
    if callback:
        callback(t, f)
    for _ in range(n_steps):
        h_dt = min(dt, t_end - t)
        u_f = f.mean_velocity
        vals = f.values
        if mode == "explicit":
            rhs = q_values(vals, grid, sig, D, u_f) / eps
            if use_prop:
                rhs = rhs + propulsion_values(vals, grid, params.tau, params.a)
            new = vals + h_dt * rhs
        elif mode == "semi-implicit":
            drift = q_values(vals, grid, sig, 0.0, u_f) / eps
            if use_prop:
                drift = drift + propulsion_values(vals, grid, params.tau, params.a)
            if h_dt != dt:
                qd = q_matrix(grid, sig, D, np.zeros(grid.dim), drift=False) / eps
                step_lu = splinalg.splu((eye - h_dt * qd).tocsc())
            else:
                step_lu = lu_diff
            new = step_lu.solve((vals + h_dt * drift).ravel()).reshape(shape)
        else:
            # backward Euler with the drift centred on u*, where u* is solved so that
            # u* equals the mean velocity of the new state; freezing u* at the old mean
            # would add a spurious drag of size dt/(eps sigma) on every momentum change
            gain = 1.0 + h_dt / (eps * sig)
            u_star = u_f
            for _ in range(_IMPLICIT_ITERS):
                mat = q_matrix(grid, sig, D, u_star) / eps
                if prop_mat is not None:
                    mat = mat + prop_mat
                new = splinalg.spsolve((eye - h_dt * mat).tocsc(), vals.ravel()).reshape(shape)
                resid = DistributionFunction(new, grid).mean_velocity - u_star
                if np.max(np.abs(resid)) <= 1e-13 * (1.0 + np.max(np.abs(u_star))):
                    break
                u_star = u_star + gain * resid
        if not np.all(np.isfinite(new)):
            raise StabilityError(f"non-finite distribution at t = {t:.4g}")
        if mode != "explicit":
            # the linear solve conserves mass only up to its own round-off
            new *= m0 / (new.sum() * grid.cell_volume)
        f = DistributionFunction(new, grid)
        t += h_dt
        if callback:
            callback(t, f)
    drift_m = abs(f.mass - m0) / m0
    if drift_m > 1e-12:
        log.warning("relative mass drift %.2e exceeds 1e-12", drift_m)
    return f


def relax(f0: DistributionFunction, params: ModelParams, t_end: float, dt: float,
          mode: str = "explicit",
          callback: Optional[Callable[[float, DistributionFunction], None]] = None) -> DistributionFunction:
    """Integrate df/dt = Q(f) to ``t_end``."""
    return _integrate(f0, params, t_end, dt, 1.0, False, mode, callback)


def relax_with_propulsion(f0: DistributionFunction, params: ModelParams, eps: float, t_end: float,
                          dt: float, mode: str = "implicit",
                          callback: Optional[Callable[[float, DistributionFunction], None]] = None
                          ) -> DistributionFunction:
    """Integrate df/dt = Q(f)/eps - tau^{-1} div_v((1 - |v|^2/a^2) v f)."""
    return _integrate(f0, params, t_end, dt, eps, True, mode, callback)


def record_relaxation(f0: DistributionFunction, params: ModelParams, t_end: float, dt: float,
                      eps: Optional[float] = None, mode: str = "explicit",
                      every: int = 1) -> tuple[DistributionFunction, RelaxRecord]:
    """Run relax (or relax_with_propulsion when ``eps`` is given) and log diagnostics."""
    rows = []
    count = [0]

    def cb(t, f):
        if count[0] % every == 0:
            m = f.mass
            p = f.momentum
            try:
                h_disc = free_energy(f, params.temp)
            except ParameterError:
                h_disc = math.nan
            rows.append((t, m, p, float(np.linalg.norm(p / m)), h_disc,
                         free_energy(f, params.temp, "continuous")))
        count[0] += 1

    if eps is None:
        f = relax(f0, params, t_end, dt, mode, cb)
    else:
        f = relax_with_propulsion(f0, params, eps, t_end, dt, mode, cb)
    rec = RelaxRecord(
        times=np.array([r[0] for r in rows]),
        mass=np.array([r[1] for r in rows]),
        momentum=np.array([r[2] for r in rows]),
        speed=np.array([r[3] for r in rows]),
        free_energy=np.array([r[4] for r in rows]),
        free_energy_continuous=np.array([r[5] for r in rows]),
    )
    return f, rec


def kerq_residual(params: ModelParams, n: int, v_max: float, u, rho: float = 1.0) -> float:
    """||Q(rho M_u)||_inf / ||rho M_u||_inf on an n^d grid."""
    grid = VelocityGrid(v_max, n, params.dim)
    f = maxwellian(grid, u, params.temp, rho)
    return float(np.max(np.abs(apply_q(f, params).values)) / np.max(f.values))
