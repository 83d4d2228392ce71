"""Closed-form oracles: Bessel functions, roots of J_n', dispersion relations.

Bessel functions are evaluated here rather than taken from a library so
that the reference values do not depend on anything they are used to test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConvergenceFailure, DomainError

__all__ = [
    "BoxPoint",
    "DispersionPoint",
    "bessel_j",
    "bessel_jp",
    "bessel_jp_root",
    "box_dispersion",
    "box_fundamental",
    "cylinder_dispersion",
    "cylinder_mode_shape",
    "cylinder_spectrum",
]

_SERIES_LIMIT = 8.0


def _series(n, x):
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) <= 1e-17 * max(abs(total), 1e-300) or k > 300:
            return total


def _miller(n, x):
    """Backward recurrence normalised by J_0 + 2 sum J_2k = 1."""
    start = 2 * ((max(n, int(x)) + 20 + int(math.sqrt(40 * max(n, x)))) // 2)
    j_next, j_cur = 0.0, 1e-30
    result = 0.0
    norm = 0.0
    for k in range(start, 0, -1):
        j_prev = 2.0 * k / x * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if abs(j_cur) > 1e250:
            j_next *= 1e-250
            j_cur *= 1e-250
            result *= 1e-250
            norm *= 1e-250
        if k - 1 == n:
            result = j_cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j_cur
    norm += j_cur  # J_0 term
    if n == 0:
        result = j_cur
    return result / norm


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind ``J_n(x)`` for integer ``n >= 0``."""
    if n < 0 or int(n) != n:
        raise DomainError(f"order must be a non-negative integer, got {n}")
    n = int(n)
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("argument must be finite")
    if x < 0:
        return (-1) ** n * bessel_j(n, -x)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x <= _SERIES_LIMIT:
        return _series(n, x)
    return _miller(n, x)


def bessel_jp(n: int, x: float) -> float:
    """Derivative ``J_n'(x)``."""
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


def _bessel_jpp(n, x):
    # from Bessel's equation: x^2 J'' + x J' + (x^2 - n^2) J = 0
    return -bessel_jp(n, x) / x - (1.0 - n * n / (x * x)) * bessel_j(n, x)


def bessel_jp_root(n: int, m: int, tol: float = 1e-12) -> float:
    """``m``-th positive root of ``J_n'``; the root at zero is never counted.

    The first root of ``J_n'`` exceeds ``n`` for ``n >= 1`` and consecutive
    roots are more than one unit apart, so a scan with step 1/2 starting at
    ``n`` brackets them one by one.
    """
    if n < 0 or m < 1:
        raise DomainError(f"invalid indices n={n}, m={m}")
    step = 0.5
    x = max(float(n), 0.5)
    f = bessel_jp(n, x)
    found = 0
    for _ in range(100000):
        x2 = x + step
        f2 = bessel_jp(n, x2)
        if f == 0.0 or f * f2 < 0:
            found += 1
            if found == m:
                root = x if f == 0.0 else _refine_root(n, x, x2, f, tol)
                return root
        x, f = x2, f2
    raise ConvergenceFailure(f"could not bracket root {m} of J_{n}'")


def _refine_root(n, lo, hi, flo, tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = bessel_jp(n, mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-10:
            break
    x = 0.5 * (lo + hi)
    for _ in range(20):
        fx = bessel_jp(n, x)
        if abs(fx) <= 0.1 * tol:
            break
        x_new = x - fx / _bessel_jpp(n, x)
        if not lo - 1e-8 <= x_new <= hi + 1e-8:
            break
        if x_new == x:
            break
        x = x_new
    if abs(bessel_jp(n, x)) > tol:
        raise ConvergenceFailure(f"root of J_{n}' did not converge: residual {bessel_jp(n, x):.3e}")
    return x


@dataclass(frozen=True)
class DispersionPoint:
    n: int
    m: int
    z_nm: float
    h_over_a: float
    Bo: float
    lambda_sq: float
    omega_sq: float

    @property
    def omega(self):
        return math.sqrt(self.omega_sq)

    @property
    def multiplicity(self):
        return 1 if self.n == 0 else 2


def _capillary_factor(k, Bo):
    return 1.0 if math.isinf(Bo) else 1.0 + k * k / Bo


def cylinder_dispersion(n: int, m: int, h_over_a: float, Bo=math.inf) -> DispersionPoint:
    """Eigenvalue of the ``(n, m)`` mode of a flat-bottomed circular cylinder."""
    if not h_over_a > 0:
        raise DomainError("h_over_a must be positive")
    Bo = float(Bo)
    z = bessel_jp_root(n, m)
    lam = z * math.tanh(z * h_over_a)
    omega_sq = lam if math.isinf(Bo) else lam * _capillary_factor(z, Bo)
    return DispersionPoint(n, m, z, float(h_over_a), Bo, lam, omega_sq)


def cylinder_mode_shape(n: int, m: int, xy, radius=1.0, phase=0.0):
    """Free-surface shape ``J_n(z r / a) cos(n theta - phase)`` at points ``xy``."""
    z = bessel_jp_root(n, m)
    out = []
    for x, y in xy:
        r = math.hypot(x, y) / radius
        out.append(bessel_j(n, z * r) * math.cos(n * math.atan2(y, x) - phase))
    return out


def cylinder_spectrum(count: int, h_over_a: float, Bo=math.inf, n_max=12, m_max=6):
    """The ``count`` lowest cylinder eigenvalues, degenerate pairs listed twice."""
    pts = [cylinder_dispersion(n, m, h_over_a, Bo) for n in range(n_max + 1) for m in range(1, m_max + 1)]
    pts.sort(key=lambda p: p.omega_sq)
    out = []
    for p in pts:
        out.extend([p] * p.multiplicity)
    return out[:count]


@dataclass(frozen=True)
class BoxPoint:
    """Separable mode ``cos(p pi x / Lx) cos(q pi y / Ly) cosh(k (z + h))``."""

    p: int
    q: int
    k: float
    depth: float
    Bo: float
    lambda_sq: float
    omega_sq: float

    @property
    def omega(self):
        return math.sqrt(self.omega_sq)


def box_dispersion(p: int, q: int, Lx: float, Ly: float, h: float, Bo=math.inf) -> BoxPoint:
    """Rectangular-box analogue of the cylinder relation (derived in-repo)."""
    if p < 0 or q < 0 or (p == 0 and q == 0):
        raise DomainError("(p, q) must be non-negative and not both zero")
    k = math.pi * math.hypot(p / Lx, q / Ly)
    lam = k * math.tanh(k * h)
    Bo = float(Bo)
    omega_sq = lam if math.isinf(Bo) else lam * _capillary_factor(k, Bo)
    return BoxPoint(p, q, k, float(h), Bo, lam, omega_sq)


def box_fundamental(Lx, Ly, h, Bo=math.inf) -> BoxPoint:
    cands = [box_dispersion(1, 0, Lx, Ly, h, Bo), box_dispersion(0, 1, Lx, Ly, h, Bo)]
    return min(cands, key=lambda b: b.omega_sq)
