"""Minimal sparse multivariate polynomials with exact differentiation.

Only what the closure checks need: sums, products, partial derivatives and
vectorized evaluation.  Coefficients may be complex so that complex-step
derivatives pass straight through.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, Tuple

import numpy as np

Exponent = Tuple[int, ...]


class Poly:
    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Dict[Exponent, complex] | None = None):
        self.dim = dim
        self.terms: Dict[Exponent, complex] = {}
        for e, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(e)] = c

    @classmethod
    def const(cls, dim: int, c) -> "Poly":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def var(cls, dim: int, i: int) -> "Poly":
        e = [0] * dim
        e[i] = 1
        return cls(dim, {tuple(e): 1.0})

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return Poly.const(self.dim, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = defaultdict(float, self.terms)
        for e, c in other.terms.items():
            out[e] += c
        return Poly(self.dim, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly(self.dim, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        out: Dict[Exponent, complex] = defaultdict(float)
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out[tuple(a + b for a, b in zip(e1, e2))] += c1 * c2
        return Poly(self.dim, out)

    __rmul__ = __mul__

    def __truediv__(self, s) -> "Poly":
        return self * (1.0 / s)

    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i] > 0:
                ne = list(e)
                ne[i] -= 1
                out[tuple(ne)] = c * e[i]
        return Poly(self.dim, out)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (n, dim)."""
        pts = np.asarray(pts)
        n = pts.shape[0]
        if not self.terms:
            return np.zeros(n)
        dtype = np.result_type(pts.dtype, *[np.asarray(c).dtype for c in self.terms.values()])
        out = np.zeros(n, dtype=dtype)
        for e, c in self.terms.items():
            term = np.full(n, c, dtype=dtype)
            for i, k in enumerate(e):
                if k:
                    term = term * pts[:, i] ** k
            out += term
        return out


def coords(dim: int) -> list[Poly]:
    return [Poly.var(dim, i) for i in range(dim)]


def sq_norm(xs: list[Poly]) -> Poly:
    out = Poly.const(xs[0].dim, 0.0)
    for x in xs:
        out = out + x * x
    return out


def laplacian(p: Poly) -> Poly:
    out = Poly.const(p.dim, 0.0)
    for i in range(p.dim):
        out = out + p.diff(i).diff(i)
    return out


def euler_op(p: Poly) -> Poly:
    """w . grad p."""
    out = Poly.const(p.dim, 0.0)
    for i in range(p.dim):
        out = out + Poly.var(p.dim, i) * p.diff(i)
    return out
