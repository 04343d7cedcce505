"""Model parameters and every derived coefficient of the swarm hierarchy.

All other modules read their constants from here.  Quantities that only
exist on one side of the critical temperature (the comfort fluid speed,
the diffusion coefficient, ...) are ``None`` when they are undefined
rather than NaN.

Vectorized helpers (``chi``, ``c1_alpha``, ...) accept arrays of ``alpha``
for the fast-relaxation limit, where ``alpha`` is a free parameter; in the
Euler/Navier-Stokes context ``alpha = eps * lambda`` is derived from the
parameters by :func:`derive`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ParameterError, RegimeError

log = logging.getLogger(__name__)


def ball_volume(dim: int) -> float:
    """Volume of the unit ball in ``dim`` dimensions."""
    _check_dim(dim)
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def sphere_area(dim: int) -> float:
    """Measure of the unit sphere S^{dim-1}."""
    return dim * ball_volume(dim)


def kernel_moment(dim: int, normalized: bool = False) -> float:
    """Second moment k of the unit-ball indicator, ``1/2 int K xi xi = k Id``.

    With ``normalized=False`` this is |S^{d-1}| / (2 d (d+2)), the moment
    of the indicator itself (pi/8 in 2-D, 2 pi/15 in 3-D).  The expansion of
    the nonlocal average is a ratio of two kernel integrals, so the
    coefficient that actually appears there is the moment of the kernel
    scaled to unit mass, ``normalized=True``, which equals 1/(2(d+2)).
    """
    _check_dim(dim)
    k = sphere_area(dim) / (2 * dim * (dim + 2))
    if normalized:
        return k / ball_volume(dim)
    return k


def _check_dim(dim) -> None:
    if dim not in (1, 2, 3):
        raise ParameterError(f"dimension must be 1, 2 or 3, got {dim!r}")


def alpha_max(dim: int) -> float:
    """Upper end 2/(d+8) of the admissible alpha interval."""
    return 2.0 / (dim + 8)


def _check_alpha(alpha, dim: int) -> np.ndarray:
    al = np.asarray(alpha, dtype=float)
    top = alpha_max(dim)
    if np.any(al < 0) or np.any(al > top * (1 + 1e-14)):
        raise ParameterError(
            f"alpha must lie in [0, 2/(d+8)] = [0, {top:.6g}] for d={dim}; got "
            f"{np.min(al):.6g}..{np.max(al):.6g}"
        )
    return al


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the swarm model.

    ``diff`` is the velocity diffusion D; the temperature is T = sigma * D.
    ``tau`` may be ``math.inf`` to switch self-propulsion off.
    ``k`` overrides the kernel moment for non-indicator isotropic kernels.
    """

    a: float = 1.0
    tau: float = 1.0
    sigma: float = 1.0
    diff: float = 0.2
    radius: float = 1.0
    eps: float = 0.0
    dim: int = 2
    k: Optional[float] = None

    def __post_init__(self):
        _check_dim(self.dim)
        for name in ("a", "tau", "sigma", "radius"):
            val = getattr(self, name)
            if not val > 0:
                raise ParameterError(f"{name} must be > 0, got {val!r}")
        if not self.diff >= 0 or not math.isfinite(self.diff):
            raise ParameterError(f"diff must be finite and >= 0, got {self.diff!r}")
        if not self.eps >= 0 or not math.isfinite(self.eps):
            raise ParameterError(f"eps must be finite and >= 0, got {self.eps!r}")
        if self.k is not None and not self.k > 0:
            raise ParameterError(f"kernel moment must be > 0, got {self.k!r}")

    @property
    def temp(self) -> float:
        return self.sigma * self.diff

    @classmethod
    def from_temperature(cls, temp: float, **kw) -> "ModelParams":
        """Build parameters from T instead of D (D = T / sigma)."""
        sigma = kw.get("sigma", cls.sigma)
        return cls(diff=temp / sigma, **kw)

    def with_alpha(self, alpha: float) -> "ModelParams":
        """Return a copy with eps tied to tau through eps = kappa_alpha * tau."""
        if not math.isfinite(self.tau):
            raise ParameterError("alpha coupling needs a finite tau")
        _check_alpha(alpha, self.dim)
        if self.temp <= 0:
            raise ParameterError("alpha coupling needs T > 0")
        return replace(self, eps=kappa_alpha(alpha, self.a, self.sigma, self.temp) * self.tau)

    def replace(self, **kw) -> "ModelParams":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# scalar / vectorized formulas


def temp_crit(a: float, dim: int) -> float:
    return a * a / (dim + 2)


def xi_alpha(alpha, dim: int):
    return 1.0 - 0.5 * (dim + 8) * np.asarray(alpha, dtype=float)


def kappa_alpha(alpha, a: float, sigma: float, temp: float):
    return np.asarray(alpha, dtype=float) * a * a / (2.0 * sigma * temp)


def temp_crit_alpha(alpha, a: float, dim: int):
    """Alpha-dependent critical temperature, increasing from Tc to 1.5 Tc."""
    al = _check_alpha(alpha, dim)
    out = temp_crit(a, dim) * (1 - 0.5 * (dim + 2) * al) / (1 - 0.5 * (dim + 4) * al)
    return out if out.ndim else float(out)


def chi(alpha, temp: float, a: float, dim: int):
    """Relaxation target chi (bulk comfort speed squared over a^2).

    Infinite at the right end of the alpha interval where xi_alpha = 0.
    """
    al = np.asarray(alpha, dtype=float)
    if al.ndim == 0 and al == 0:
        return 1.0 - (dim + 2) * temp / (a * a)
    num = 1 - 0.5 * al * (dim + 2) - (dim + 2) * temp / (a * a) * (1 - 0.5 * al * (dim + 4))
    den = xi_alpha(al, dim)
    with np.errstate(divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf * np.sign(num))
    return out if out.ndim else float(out)


def c1_alpha(alpha, temp: float, a: float, dim: int):
    """Density convection speed c1(alpha) = a sqrt(chi) of the alpha-SOH model."""
    al = _check_alpha(alpha, dim)
    tca = temp_crit_alpha(al, a, dim)
    bad = temp >= np.asarray(tca)
    if np.any(bad):
        first = float(np.atleast_1d(al)[np.argmax(np.atleast_1d(bad))])
        raise RegimeError(
            f"T = {temp:.6g} is not below Tc(alpha) = "
            f"{float(temp_crit_alpha(first, a, dim)):.6g} at alpha = {first:.6g}"
        )
    out = a * np.sqrt(np.asarray(chi(al, temp, a, dim)))
    return out if out.ndim else float(out)


def c2_alpha(alpha, temp: float, a: float, dim: int):
    """Orientation convection speed c2 = (1 - 3 alpha / 2) c1."""
    al = np.asarray(alpha, dtype=float)
    out = (1 - 1.5 * al) * np.asarray(c1_alpha(al, temp, a, dim))
    return out if out.ndim else float(out)


def temp_alpha(alpha, temp: float, a: float, dim: int):
    """Effective temperature of the limit pressure, pi_alpha(rho, c1) / rho."""
    al = np.asarray(alpha, dtype=float)
    c1sq = a * a * np.asarray(chi(al, temp, a, dim))
    out = temp - 0.5 * al * ((dim + 2) * temp - a * a + c1sq)
    if al.ndim == 0 and al == 0:
        return float(temp)
    return out if out.ndim else float(out)


def temp_alpha_printed(alpha, temp: float, a: float, dim: int):
    """The closed form for T_alpha as printed alongside the alpha-SOH model.

    Kept for comparison only; see :func:`temp_alpha`.
    """
    al = np.asarray(alpha, dtype=float)
    out = ((1 + 0.5 * (dim - 4) * al) * temp - 1.5 * al * a * a) / xi_alpha(al, dim)
    return out if out.ndim else float(out)


def delta_alpha(alpha, temp: float, a: float, dim: int, printed: bool = False):
    ta = (temp_alpha_printed if printed else temp_alpha)(alpha, temp, a, dim)
    out = np.asarray(ta) / np.asarray(c1_alpha(alpha, temp, a, dim))
    return out if out.ndim else float(out)


def nu_coefficient(temp: float, a: float, dim: int) -> float:
    return (dim + 2) / (dim + 8) * (1 - (dim + 4) * temp / (a * a))


def relaxation_speed_sq(u0_sq, t, c_sq: float, rate: float):
    """Closed-form |u(t)|^2 for du/dt = -rate * u (|u|^2 - c_sq).

    Valid for either sign of ``c_sq`` (c_sq = -s^2 above the critical
    temperature) and for c_sq = 0.  ``rate`` is 1/(tau a^2) for the Euler
    relaxation and xi/(tau a^2) for the Navier-Stokes one.
    """
    y0 = np.asarray(u0_sq, dtype=float)
    x = 2.0 * rate * c_sq * np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        decay = np.exp(-x)
        # (1 - exp(-x)) / c_sq, written to stay finite as c_sq -> 0
        if c_sq == 0.0:
            growth = 2.0 * rate * np.asarray(t, dtype=float) * np.ones_like(x)
        else:
            growth = -np.expm1(-x) / c_sq
        out = y0 / (decay + y0 * growth)
        out = np.where(y0 == 0, 0.0, out)
        out = np.where(np.isfinite(decay), out, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# derived table


@dataclass(frozen=True)
class DerivedCoefficients:
    params: ModelParams
    temp: float
    temp_crit: float
    comfort_speed: Optional[float]
    s_sq: Optional[float]
    d_diff: Optional[float]
    lam: float
    lambda_eps: float
    mu: float
    kernel_moment: float
    k_r: float
    pi_coeff: float
    chi_eps: float
    tau_eps: float
    alpha: float
    xi_alpha: float
    kappa_alpha: Optional[float]
    temp_crit_alpha: float
    c1_alpha: Optional[float]
    c2_alpha: Optional[float]
    delta_alpha: Optional[float]
    temp_alpha: Optional[float]
    temp_alpha_printed: Optional[float]
    nu: float
    alpha_is_free: bool = field(default=False)

    @property
    def eps(self) -> float:
        return self.params.eps

    @property
    def relax_target_sq(self) -> float:
        """a^2 chi^0 = a^2 - (d+2) T, the Euler relaxation target (any sign)."""
        p = self.params
        return p.a * p.a * chi(0.0, self.temp, p.a, p.dim)

    @property
    def relax_target_sq_eps(self) -> float:
        """a^2 chi^eps, the Navier-Stokes relaxation target."""
        p = self.params
        return p.a * p.a * self.chi_eps

    @property
    def relax_rate(self) -> float:
        """1/(tau a^2): prefactor of the Euler relaxation source."""
        p = self.params
        return 1.0 / (p.tau * p.a * p.a)

    @property
    def relax_rate_eps(self) -> float:
        """1/(tau^eps a^2)."""
        p = self.params
        return 1.0 / (self.tau_eps * p.a * p.a)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("params")
        return out


def derive(params: ModelParams, alpha: Optional[float] = None) -> DerivedCoefficients:
    """Evaluate every derived coefficient for ``params``.

    By default alpha = eps * lambda (Euler/Navier-Stokes context).  Passing
    ``alpha`` explicitly evaluates the alpha-limit quantities at that value
    instead (fast-relaxation context); the eps-dependent fields still use
    ``params.eps``.
    """
    p = params
    d = p.dim
    T = p.temp
    a2 = p.a * p.a
    tc = temp_crit(p.a, d)

    comfort = math.sqrt(a2 - (d + 2) * T) if T < tc else None
    s_sq = (d + 2) * (T - tc) if T > tc else None
    d_diff = T * tc / (T - tc) if T > tc else None

    lam = 2 * p.sigma * T / (p.tau * a2)
    al_eps = p.eps * lam
    if not al_eps < alpha_max(d):
        raise ParameterError(
            f"eps * lambda = {al_eps:.6g} must be < 2/(d+8) = {alpha_max(d):.6g}; "
            "xi_alpha would vanish and tau^eps would not be positive"
        )
    free = alpha is not None
    al = float(alpha) if free else al_eps
    _check_alpha(al, d)
    xi = float(xi_alpha(al, d))
    if not xi > 0:
        raise ParameterError(
            f"alpha = {al:.6g} sits on the boundary 2/(d+8): xi_alpha = 0, "
            "relaxation time tau_alpha is infinite"
        )

    k = p.k if p.k is not None else kernel_moment(d)
    tca = float(temp_crit_alpha(al, p.a, d))
    if T < tca:
        c1 = float(c1_alpha(al, T, p.a, d))
        c2 = (1 - 1.5 * al) * c1
        ta = float(temp_alpha(al, T, p.a, d))
        ta_pr = float(temp_alpha_printed(al, T, p.a, d))
        delta = ta / c1 if c1 > 0 else None
        if ta < 0:
            log.warning("T_alpha = %.4g < 0 at alpha = %.4g: SOH pressure is negative", ta, al)
    else:
        c1 = c2 = ta = ta_pr = delta = None

    if free or al_eps > 0:
        chi_eps = float(chi(al_eps, T, p.a, d))
    else:
        chi_eps = float(chi(0.0, T, p.a, d))
    xi_eps = float(xi_alpha(al_eps, d))
    tau_eps = p.tau / xi_eps

    return DerivedCoefficients(
        params=p,
        temp=T,
        temp_crit=tc,
        comfort_speed=comfort,
        s_sq=s_sq,
        d_diff=d_diff,
        lam=lam,
        lambda_eps=1.0 - al_eps,
        mu=p.sigma * T,
        kernel_moment=k,
        k_r=k * p.radius ** 2,
        pi_coeff=0.5 * lam,
        chi_eps=chi_eps,
        tau_eps=tau_eps,
        alpha=al,
        xi_alpha=xi,
        kappa_alpha=float(kappa_alpha(al, p.a, p.sigma, T)) if T > 0 else None,
        temp_crit_alpha=tca,
        c1_alpha=c1,
        c2_alpha=c2,
        delta_alpha=delta,
        temp_alpha=ta,
        temp_alpha_printed=ta_pr,
        nu=nu_coefficient(T, p.a, d),
        alpha_is_free=free,
    )


def pressure_correction(coeffs: DerivedCoefficients, rho, speed_sq):
    """pi(rho, |u|) = (lambda / 2) rho ((d+2) T - a^2 + |u|^2)."""
    p = coeffs.params
    return coeffs.pi_coeff * rho * ((p.dim + 2) * coeffs.temp - p.a * p.a + speed_sq)


def c1_increasing_check(params: ModelParams, alphas) -> bool:
    """True iff c1(alpha) is strictly increasing across the (sorted) grid."""
    al = np.sort(np.atleast_1d(np.asarray(alphas, dtype=float)))
    c1 = np.atleast_1d(c1_alpha(al, params.temp, params.a, params.dim))
    log.debug("c1(alpha) on grid: %s", dict(zip(al.tolist(), c1.tolist())))
    return bool(np.all(np.diff(c1) > 0))


_TABLE_FIELDS = (
    "temp", "temp_crit", "comfort_speed", "s_sq", "d_diff", "lam", "lambda_eps",
    "mu", "kernel_moment", "k_r", "pi_coeff", "chi_eps", "tau_eps", "alpha",
    "xi_alpha", "kappa_alpha", "temp_crit_alpha", "c1_alpha", "c2_alpha",
    "delta_alpha", "temp_alpha", "temp_alpha_printed", "nu",
)


def coefficient_table(coeffs: DerivedCoefficients) -> list[tuple[str, Optional[float], bool]]:
    """Rows (name, value, valid) for the CSV dump; undefined values have valid=False."""
    rows = []
    for name in _TABLE_FIELDS:
        val = getattr(coeffs, name)
        ok = val is not None and math.isfinite(val)
        rows.append((name, val, ok))
    return rows
