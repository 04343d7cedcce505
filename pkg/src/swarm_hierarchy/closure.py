"""Quadrature oracle for the Chapman-Enskog closure.

Checks, free of any velocity discretization:

* solvability of the five closure functions h, b, c, e, g against M_u;
* the pseudo-inverse identities L_u[Phi M_u] = -phi M_u, with L_u applied
  analytically to polynomial times Gaussian;
* the moment formulas for B1 (self-propulsion moment of f1) and for the
  stress tensor U feeding B3;
* the collision-invariant identities for Q on polynomial times Gaussian;
* the fourth-order remainder of the nonlocal kernel average.

Closure functions are written once, generically in the velocity components,
so the same code evaluates them on quadrature nodes (numpy arrays) and
builds them as exact polynomials (:class:`~swarm_hierarchy._poly.Poly`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import _poly
from .coeffs import ModelParams, derive, nu_coefficient

NAMES = ("h", "b", "c", "e", "g")


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Hermite rule for integrals against M_0 with variance T.

    Exact for polynomials of degree <= 2 n_q - 1 in each variable.
    """

    nodes: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,), sums to 1
    n_q: int
    temp: float

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]


def quadrature_rule(temp: float, dim: int, n_q: int = 12) -> QuadratureRule:
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    x, wt = np.polynomial.hermite.hermgauss(n_q)
    x = x * math.sqrt(2.0 * temp)
    wt = wt / math.sqrt(math.pi)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(wt, repeat=dim))), axis=1)
    return QuadratureRule(nodes=nodes, weights=weights, n_q=n_q, temp=temp)


def gaussian_moment(func: Callable[[np.ndarray], np.ndarray], temp: float, dim: int,
                    n_q: int = 12):
    """int func(w) M_0(w) dw, M_0 the centred Maxwellian of temperature T.

    ``func`` maps nodes of shape (n, d) to values of shape (n, ...).
    """
    rule = quadrature_rule(temp, dim, n_q)
    vals = np.asarray(func(rule.nodes))
    return np.tensordot(rule.weights, vals, axes=(0, 0))


def maxwellian(w: np.ndarray, temp: float) -> np.ndarray:
    """Centred Maxwellian M_0(w) evaluated at points of shape (n, d)."""
    d = w.shape[-1]
    return (2 * math.pi * temp) ** (-d / 2) * np.exp(-np.sum(w * w, axis=-1) / (2 * temp))


# ---------------------------------------------------------------------------
# closure functions, generic in the component type


def _sq(ws):
    out = ws[0] * ws[0]
    for x in ws[1:]:
        out = out + x * x
    return out


def _fn_h(ws, T):
    d = len(ws)
    return [[(1.0 if i == j else 0.0) - ws[i] * ws[j] / T for j in range(d)] for i in range(d)]


def _fn_b(ws, T):
    d = len(ws)
    s = _sq(ws)
    return s / T * (1.0 - s / ((d + 2) * T))


def _fn_c(ws, T):
    d = len(ws)
    return 1.0 - _sq(ws) / (d * T)


def _fn_e(ws, T):
    d = len(ws)
    s = _sq(ws)
    fac = 1.0 - s / ((d + 2) * T)
    return [[(fac if i == j else 0.0) - 2.0 * ws[i] * ws[j] / ((d + 2) * T) for j in range(d)]
            for i in range(d)]


def _fn_g(ws, T):
    d = len(ws)
    fac = (1.0 - _sq(ws) / ((d + 2) * T)) / math.sqrt(T)
    return [fac * ws[i] for i in range(d)]


_SMALL = {"h": _fn_h, "b": _fn_b, "c": _fn_c, "e": _fn_e, "g": _fn_g}


def _scale(obj, s):
    if isinstance(obj, list):
        return [_scale(o, s) for o in obj]
    return obj * s


@dataclass(frozen=True)
class ClosureFunctionSet:
    """The closure functions h, b, c, e, g and their pseudo-inverse images.

    ``small(name, ws)`` returns phi, ``big(name, ws)`` returns Phi with
    Phi M_u = -L_u^{-1}(phi M_u) as claimed in closed form:
    H = -sigma h / 2, B = -sigma d (c + b/d) / 4, C = -sigma c / 2,
    E = -sigma e / 2, G = -sigma g / 3.  ``ws`` is a list of d components,
    either arrays or polynomials.  ``scale_override`` replaces the claimed
    prefactor of a big function (used to show the check detects errors).
    """

    temp: float
    sigma: float
    dim: int
    scale_override: dict = field(default_factory=dict)

    def small(self, name: str, ws):
        return _SMALL[name](ws, self.temp)

    def big(self, name: str, ws):
        s, d = self.sigma, len(ws)
        if name in self.scale_override:
            return _scale(self.small(name, ws), self.scale_override[name])
        if name == "b":
            c = self.small("c", ws)
            b = self.small("b", ws)
            return -s * d / 4.0 * (c + b / d)
        fac = {"h": -s / 2, "c": -s / 2, "e": -s / 2, "g": -s / 3}[name]
        return _scale(self.small(name, ws), fac)

    def evaluate(self, name: str, w: np.ndarray, big: bool = False) -> np.ndarray:
        """Numeric values at points ``w`` (n, d): shape (n,), (n, d) or (n, d, d)."""
        ws = [w[:, i] for i in range(w.shape[1])]
        val = np.asarray(self.big(name, ws) if big else self.small(name, ws))
        return np.moveaxis(val, -1, 0)

    def polys(self, name: str, big: bool = False):
        ws = _poly.coords(self.dim)
        return self.big(name, ws) if big else self.small(name, ws)


def _flatten(obj) -> list:
    if isinstance(obj, list):
        return [x for o in obj for x in _flatten(o)]
    return [obj]


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckRow:
    identity: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)


@dataclass
class CheckReport:
    rows: list = field(default_factory=list)

    def add(self, identity: str, residual: float, tolerance: float) -> None:
        self.rows.append(CheckRow(identity, float(residual), float(tolerance)))

    def extend(self, other: "CheckReport") -> "CheckReport":
        self.rows.extend(other.rows)
        return self

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_residual(self) -> float:
        return max((r.residual for r in self.rows), default=0.0)

    def residual(self, identity: str) -> float:
        for r in self.rows:
            if r.identity == identity:
                return r.residual
        raise KeyError(identity)

    def to_csv(self) -> str:
        lines = ["identity,residual,tolerance,passed"]
        for r in self.rows:
            lines.append(f"{r.identity},{r.residual:.3e},{r.tolerance:.1e},{int(r.passed)}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# solvability


def check_solvability(fset: ClosureFunctionSet, n_q: int = 8, u: Optional[np.ndarray] = None,
                      tol: float = 1e-12) -> CheckReport:
    """Residuals of int phi M_u dv and int phi v M_u dv for the five functions."""
    rule = quadrature_rule(fset.temp, fset.dim, n_q)
    w = rule.nodes
    uu = np.zeros(fset.dim) if u is None else np.asarray(u, float)
    v = w + uu
    rep = CheckReport()
    for name in NAMES:
        phi = fset.evaluate(name, w)
        m0 = np.tensordot(rule.weights, phi, axes=(0, 0))
        m1 = np.tensordot(rule.weights, phi[..., None] * v.reshape((len(w),) + (1,) * (phi.ndim - 1) + (fset.dim,)),
                          axes=(0, 0))
        rep.add(f"solv_{name}_mass", np.max(np.abs(m0)), tol)
        rep.add(f"solv_{name}_momentum", np.max(np.abs(m1)), tol)
    return rep


# ---------------------------------------------------------------------------
# pseudo-inverse


def apply_l_u(poly: _poly.Poly, w: np.ndarray, temp: float, diff: float) -> np.ndarray:
    """L_u[Phi M_u] at points w = v - u for polynomial Phi, analytically.

    L_u f = -D div(M grad(f / M)) gives -D M (Lap Phi - w . grad Phi / T).
    """
    lap = _poly.laplacian(poly)(w)
    adv = _poly.euler_op(poly)(w)
    return -diff * maxwellian(w, temp) * (lap - adv / temp)


def default_velocity_points(temp: float, dim: int, n: int = 24, width: float = 6.0) -> np.ndarray:
    """Tensor grid of cell centres covering |w_i| <= width sqrt(T)."""
    h = 2 * width * math.sqrt(temp) / n
    x = -width * math.sqrt(temp) + h * (np.arange(n) + 0.5)
    return np.array(list(itertools.product(x, repeat=dim)))


def check_pseudo_inverse(fset: ClosureFunctionSet, points: Optional[np.ndarray] = None,
                         tol: float = 1e-12) -> CheckReport:
    """max |L_u[Phi M_u] + phi M_u| / max |phi M_u| for the five pairs.

    ``points`` are velocity offsets w = v - u; anything with a ``points()``
    method (a kinetic velocity grid) is accepted as well.
    """
    if points is None:
        points = default_velocity_points(fset.temp, fset.dim)
    elif hasattr(points, "points"):
        points = points.points()
    w = np.asarray(points, float)
    diff = fset.temp / fset.sigma
    m = maxwellian(w, fset.temp)
    rep = CheckReport()
    for name in NAMES:
        big = _flatten(fset.polys(name, big=True))
        small = _flatten(fset.polys(name, big=False))
        num = 0.0
        den = 0.0
        for pb, ps in zip(big, small):
            phim = ps(w) * m
            res = apply_l_u(pb, w, fset.temp, diff) + phim
            num = max(num, float(np.max(np.abs(res))))
            den = max(den, float(np.max(np.abs(phim))))
        rep.add(f"pinv_{name.upper()}{name}", num / den, tol)
    return rep


# ---------------------------------------------------------------------------
# f1 and the moments B1, U, B3


def f1_weight(params: ModelParams, rho, u, grad_u, w: np.ndarray) -> np.ndarray:
    """f1 / M_u at offsets w, from the explicit first-order correction.

    ``grad_u[i, j]`` is d_i u_j.  Complex ``rho``/``u`` are allowed.
    """
    p = params
    T, s, a2, d = p.temp, p.sigma, p.a ** 2, p.dim
    fs = ClosureFunctionSet(T, s, d)
    h = fs.evaluate("h", w)
    b = fs.evaluate("b", w)
    c = fs.evaluate("c", w)
    e = fs.evaluate("e", w)
    g = fs.evaluate("g", w)
    uu = np.outer(u, u)
    bracket = ((d + 2) * T / 4 * b + d / 2 * ((d + 2) * T / 2 - a2) * c
               + (d + 2) / 2 * np.einsum("nij,ij->n", e, uu)
               + math.sqrt(T) * (d + 2) * (g @ u))
    return s * rho * (0.5 * np.einsum("nij,ij->n", h, grad_u) + bracket / (p.tau * a2))


@dataclass
class MomentSet:
    b1: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    j3: np.ndarray
    stress: np.ndarray  # U


def moments_by_quadrature(params: ModelParams, rho, u, grad_u, n_q: int = 12) -> MomentSet:
    p = params
    rule = quadrature_rule(p.temp, p.dim, n_q)
    w = rule.nodes
    u = np.asarray(u)
    f1 = rule.weights * f1_weight(p, rho, u, np.asarray(grad_u), w)
    pref = -1.0 / (p.tau * p.a ** 2)
    ww = np.sum(w * w, axis=1)
    j1 = pref * np.einsum("n,n,ni->i", f1, ww, w)
    j2 = pref * np.sum(f1 * ww) * u
    j3 = pref * 2 * np.einsum("n,ni,nj,j->i", f1, w, w, u)
    stress = np.einsum("n,ni,nj->ij", f1, w, w)
    return MomentSet(b1=j1 + j2 + j3, j1=j1, j2=j2, j3=j3, stress=stress)


def moments_closed_form(params: ModelParams, rho, u, grad_u) -> MomentSet:
    """J1, J2, J3, their sum and U as stated in closed form."""
    p = params
    T, s, a2, d, tau = p.temp, p.sigma, p.a ** 2, p.dim, p.tau
    u = np.asarray(u)
    grad_u = np.asarray(grad_u)
    u2 = u @ u
    div_u = np.trace(grad_u)
    bracket = (d + 2) * T / a2 - 1
    j1 = 2 * T * T * s * (d + 2) / (tau ** 2 * a2 ** 2) * rho * u
    j2 = (T * s / (tau * a2) * div_u * rho * u
          + d * s * T / (tau ** 2 * a2) * bracket * rho * u
          + (d + 2) * s * T / (tau ** 2 * a2 ** 2) * rho * u2 * u)
    j3 = (T * s / (tau * a2) * rho * (grad_u @ u + grad_u.T @ u)
          + 2 * s * T / (tau ** 2 * a2) * bracket * rho * u
          + 6 * s * T / (tau ** 2 * a2 ** 2) * rho * u2 * u)
    eye = np.eye(d)
    stress = (-0.5 * s * T * rho * (grad_u + grad_u.T)
              - rho * s * T / tau * bracket * eye
              - s * T / (tau * a2) * rho * (u2 * eye + 2 * np.outer(u, u)))
    return MomentSet(b1=j1 + j2 + j3, j1=j1, j2=j2, j3=j3, stress=stress)


def b1_lemma_form(params: ModelParams, rho, u, grad_u) -> np.ndarray:
    """B1 in the grouped form (lambda/2) rho {[...] + (d+8)/tau u (|u|^2/a^2 - nu)}."""
    p = params
    co = derive(p)
    u = np.asarray(u)
    grad_u = np.asarray(grad_u)
    nu = nu_coefficient(p.temp, p.a, p.dim)
    conv = np.trace(grad_u) * u + grad_u @ u + u @ grad_u
    relax = (p.dim + 8) / p.tau * u * (u @ u / p.a ** 2 - nu)
    return 0.5 * co.lam * rho * (conv + relax)


def b3_closed_form(params: ModelParams, rho, grad_rho, u, grad_u) -> np.ndarray:
    """mu div(rho E(u)) + grad pi(rho, u) + lambda div(rho u (x) u) for affine fields."""
    p = params
    co = derive(p)
    u = np.asarray(u)
    grad_u = np.asarray(grad_u)
    grad_rho = np.asarray(grad_rho)
    strain = 0.5 * (grad_u + grad_u.T)
    visc = co.mu * (grad_rho @ strain)
    grad_u2 = 2 * grad_u @ u
    pres = 0.5 * co.lam * (((p.dim + 2) * p.temp - p.a ** 2 + u @ u) * grad_rho + rho * grad_u2)
    conv = co.lam * ((grad_rho @ u) * u + rho * np.trace(grad_u) * u + rho * (u @ grad_u))
    return visc + pres + conv


def b3_by_quadrature(params: ModelParams, rho, grad_rho, u, grad_u, n_q: int = 12,
                     step: float = 1e-30) -> np.ndarray:
    """-div U at x = 0 for affine rho, u, by complex-step differentiation."""
    d = params.dim
    u = np.asarray(u, float)
    grad_u = np.asarray(grad_u, float)
    out = np.zeros(d)
    for k in range(d):
        # x = i step e_k
        rho_k = rho + 1j * step * grad_rho[k]
        u_k = u + 1j * step * grad_u[k]
        stress = moments_by_quadrature(params, rho_k, u_k, grad_u, n_q).stress
        out -= stress[k].imag / step
    return out


def _rel(a, b) -> float:
    den = float(np.max(np.abs(b)))
    num = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    return num if den == 0 else num / den


def check_b1_b3(params: ModelParams, u, grad_u, grad_rho, rho: float = 1.0, n_q: int = 12,
                tol: float = 1e-8) -> CheckReport:
    """Quadrature versus closed forms for B1, J1..J3, U and B3.

    Errors are max-norm differences relative to the max-norm of the closed
    form (absolute when the closed form vanishes).
    """
    q = moments_by_quadrature(params, rho, u, grad_u, n_q)
    c = moments_closed_form(params, rho, u, grad_u)
    rep = CheckReport()
    rep.add("B1_sum_J", _rel(q.b1, c.b1), tol)
    rep.add("B1_grouped", _rel(q.b1, b1_lemma_form(params, rho, u, grad_u)), tol)
    rep.add("J1", _rel(q.j1, c.j1), tol)
    rep.add("J2", _rel(q.j2, c.j2), tol)
    rep.add("J3", _rel(q.j3, c.j3), tol)
    rep.add("U", _rel(q.stress, c.stress), tol)
    b3q = b3_by_quadrature(params, rho, np.asarray(grad_rho, float), u, grad_u, n_q)
    rep.add("B3", _rel(b3q, b3_closed_form(params, rho, grad_rho, u, grad_u)), tol)
    return rep


# ---------------------------------------------------------------------------
# collision invariants


def check_collision_invariants(params: ModelParams, poly: _poly.Poly, u, n_q: int = 8,
                               tol: float = 1e-12) -> CheckReport:
    """int Q(p M_u) dv and int Q(p M_u) v dv for a polynomial p, by exact quadrature.

    With F = D grad p - (u_f - u) p / sigma, Q(p M_u) = (div F - F . w / T) M_u
    where u_f is the mean velocity of p M_u.  Both moments must vanish.
    """
    p = params
    d = p.dim
    T = p.temp
    if poly.dim != d:
        raise ValueError("polynomial dimension must match params.dim")
    rule = quadrature_rule(T, d, n_q)
    w = rule.nodes
    u = np.asarray(u, float)
    pv = poly(w).real
    mass = rule.weights @ pv
    if abs(mass) < 1e-14:
        raise ValueError("p M_u has zero mass; mean velocity undefined")
    u_f = (rule.weights @ (pv[:, None] * (w + u))) / mass
    shift = u_f - u
    ws = _poly.coords(d)
    flux = [p.diff * poly.diff(i) - poly * (shift[i] / p.sigma) for i in range(d)]
    q = _poly.Poly.const(d, 0.0)
    for i in range(d):
        q = q + flux[i].diff(i) - flux[i] * ws[i] / T
    qv = q(w).real
    scale = max(1.0, float(np.max(np.abs(pv))))
    rep = CheckReport()
    rep.add("CI_mass", abs(rule.weights @ qv) / scale, tol)
    rep.add("CI_momentum", np.max(np.abs(rule.weights @ (qv[:, None] * (w + u)))) / scale, tol)
    return rep


def random_poly(dim: int, degree: int, rng: np.random.Generator, amp: float = 0.3) -> _poly.Poly:
    """1 + small random polynomial of total degree <= ``degree``."""
    terms = {}
    for e in itertools.product(range(degree + 1), repeat=dim):
        if 0 < sum(e) <= degree:
            terms[e] = amp * rng.standard_normal()
    terms[(0,) * dim] = 1.0
    return _poly.Poly(dim, terms)


# ---------------------------------------------------------------------------
# kernel expansion


@dataclass
class KernelExpansionReport:
    eps: np.ndarray
    remainder: np.ndarray
    orders: np.ndarray

    @property
    def observed_order(self) -> float:
        return float(np.min(self.orders)) if len(self.orders) else float("nan")


def _ball_multiplier(kh: np.ndarray, dim: int) -> np.ndarray:
    """Fourier symbol of the unit-mass ball average of radius h at |kappa| h."""
    out = np.ones_like(kh)
    nz = kh > 0
    if dim == 1:
        out[nz] = np.sin(kh[nz]) / kh[nz]
    elif dim == 2:
        out[nz] = 2 * special.j1(kh[nz]) / kh[nz]
    elif dim == 3:
        x = kh[nz]
        out[nz] = 3 * (np.sin(x) - x * np.cos(x)) / x ** 3
    else:
        raise ValueError("dim must be 1, 2 or 3")
    return out


def _wavenumbers(shape, length):
    ks = [2 * np.pi * np.fft.fftfreq(n, d=length / n) for n in shape]
    return np.meshgrid(*ks, indexing="ij")


def nonlocal_average(rho: np.ndarray, j: np.ndarray, h: float, length: float = 1.0) -> np.ndarray:
    """Exact ball-averaged velocity (K*j)/(K*rho) of radius h on a periodic grid.

    ``rho`` has the spatial shape, ``j`` has an extra leading component axis.
    Exact for band-limited fields.
    """
    dim = rho.ndim
    kk = _wavenumbers(rho.shape, length)
    kmag = np.sqrt(sum(k * k for k in kk))
    m = _ball_multiplier(kmag * h, dim)
    den = np.fft.ifftn(m * np.fft.fftn(rho)).real
    num = np.stack([np.fft.ifftn(m * np.fft.fftn(jc)).real for jc in j])
    return num / den


def first_correction(rho: np.ndarray, j: np.ndarray, k_r: float, length: float = 1.0) -> np.ndarray:
    """u1 = (k_R / rho^2)(rho Lap j - j Lap rho), spectral Laplacian."""
    kk = _wavenumbers(rho.shape, length)
    k2 = sum(k * k for k in kk)

    def lap(f):
        return np.fft.ifftn(-k2 * np.fft.fftn(f)).real

    lr = lap(rho)
    return np.stack([k_r / rho ** 2 * (rho * lap(jc) - jc * lr) for jc in j])


def default_fields(n: int = 64, dim: int = 1, length: float = 1.0):
    """Smooth band-limited rho, j used by the expansion check."""
    x = (np.arange(n) + 0.0) * length / n
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    kx = 2 * np.pi / length
    rho = 1.0 + 0.1 * np.sin(kx * grids[0])
    jx = 0.5 + 0.2 * np.cos(kx * grids[0])
    jy = 0.3 * np.sin(kx * grids[0] + 0.4)
    for g in grids[1:]:
        rho = rho + 0.05 * np.cos(kx * g)
        jx = jx + 0.1 * np.sin(2 * kx * g)
    return rho, np.stack([jx, jy])


def check_kernel_expansion(k: float, rho: Optional[np.ndarray] = None, j: Optional[np.ndarray] = None,
                           eps_values: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
                           radius: float = 1.0, length: float = 1.0,
                           dim: int = 1) -> KernelExpansionReport:
    """Remainder max|vbar - u - eps^2 u1| under eps halving, and its observed orders.

    ``k`` is the kernel moment entering k_R = k R^2.  For the unit-mass
    ball average this is 1/(2(d+2)); any other value leaves an eps^2
    remainder and the observed order drops to 2.
    """
    if rho is None or j is None:
        rho, j = default_fields(dim=dim, length=length)
    u = j / rho
    u1 = first_correction(rho, j, k * radius ** 2, length)
    eps = np.asarray(eps_values, float)
    rem = np.array([
        np.max(np.abs(nonlocal_average(rho, j, e * radius, length) - u - e * e * u1)) for e in eps
    ])
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(rem[:-1] / rem[1:]) / np.log(eps[:-1] / eps[1:])
    return KernelExpansionReport(eps=eps, remainder=rem, orders=orders)


def verify_all(params: ModelParams, n_q: int = 12, seed: int = 0, n_random: int = 20) -> CheckReport:
    """Run every closure identity for ``params`` (and d in {2, 3} for B1/B3)."""
    fset = ClosureFunctionSet(params.temp, params.sigma, params.dim)
    rep = CheckReport()
    rep.extend(check_solvability(fset, n_q=max(8, min(n_q, 8))))
    rep.extend(check_pseudo_inverse(fset))
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for i in range(n_random):
        d = 2 + i % 2
        p = params.replace(dim=d)
        u = rng.uniform(-0.7, 0.7, d)
        gu = rng.uniform(-1, 1, (d, d))
        gr = rng.uniform(-1, 1, d)
        sub = check_b1_b3(p, u, gu, gr, rho=rng.uniform(0.5, 2.0), n_q=n_q)
        for r in sub.rows:
            worst[r.identity] = max(worst.get(r.identity, 0.0), r.residual)
    for name, val in worst.items():
        rep.add(f"{name}_max_over_{n_random}", val, 1e-8)
    ci = check_collision_invariants(params, random_poly(params.dim, 3, rng), rng.uniform(-0.5, 0.5, params.dim))
    rep.extend(ci)
    kex = check_kernel_expansion(1.0 / (2 * 3), dim=1)
    rep.add("kernel_expansion_order_deficit", max(0.0, 3.5 - kex.observed_order), 0.0)
    return rep
