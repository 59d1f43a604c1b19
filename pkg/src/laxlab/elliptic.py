"""Elliptic toolkit over the complex numbers.

Everything is parametrised by ``ksq`` (the square of the modulus) since the
curve ``w^2 = (1 - x^2)(1 - ksq x^2)`` and the functions sn, cn, dn only
depend on it. Complex moduli, including ``|k| > 1``, are supported.

Sheet convention: every Abel integral starts at ``x = 0`` on the sheet with
``w(0) = +1`` and continues ``w`` along the integration path.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModulus, NomeOutOfRange, PathThroughBranchPoint

__all__ = [
    "default_path",
    "carlson_rf",
    "complete_K",
    "complete_Kprime",
    "nome",
    "theta1",
    "jacobi_ellipj",
    "jacobi_sn",
    "jacobi_cn",
    "jacobi_dn",
    "AbelValue",
    "abel_u",
    "abel_point",
    "branch_points_of",
    "curve_w2",
    "lattice_distance",
    "reduce_mod_lattice",
]

_RF_TOL = 1e-16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def carlson_rf(x, y, z):
    """Carlson's symmetric integral R_F(x, y, z) by the duplication algorithm.

    Principal square roots are used throughout; at most one argument may be
    zero.
    """
    x, y, z = complex(x), complex(y), complex(z)
    if sum(v == 0 for v in (x, y, z)) > 1:
        raise DegenerateModulus("R_F diverges with two zero arguments")
    A0 = (x + y + z) / 3
    Q = (3 * _RF_TOL) ** (-1 / 6) * max(abs(A0 - x), abs(A0 - y), abs(A0 - z))
    A = A0
    scale = 1.0
    for _ in range(100):
        if scale * Q < abs(A):
            break
        sx, sy, sz = cmath.sqrt(x), cmath.sqrt(y), cmath.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        x, y, z, A = (x + lam) / 4, (y + lam) / 4, (z + lam) / 4, (A + lam) / 4
        scale /= 4
    X = (A - x) / A
    Y = (A - y) / A
    Z = -(X + Y)
    E2 = X * Y - Z * Z
    E3 = X * Y * Z
    return (1 - E2 / 10 + E3 / 14 + E2 * E2 / 24 - 3 * E2 * E3 / 44) / cmath.sqrt(A)


def complete_K(ksq):
    """Complete elliptic integral of the first kind K(k) with k^2 = ksq."""
    ksq = complex(ksq)
    if ksq == 1:
        raise DegenerateModulus("K diverges at ksq = 1")
    return carlson_rf(0, 1 - ksq, 1)


def complete_Kprime(ksq):
    """Complementary integral K'(k) = K(sqrt(1 - k^2))."""
    ksq = complex(ksq)
    if ksq == 0:
        raise DegenerateModulus("K' diverges at ksq = 0")
    return complete_K(1 - ksq)


def nome(ksq):
    """Nome q = exp(i pi tau) with tau = i K'/K."""
    K = complete_K(ksq)
    Kp = complete_Kprime(ksq)
    q = cmath.exp(-math.pi * Kp / K)
    if not 0 < abs(q) < 1:
        raise NomeOutOfRange(f"|q| = {abs(q)} for ksq = {ksq}")
    return q


def theta1(u, q, max_terms=400):
    """Jacobi theta function theta_1(u, q).

    ``2 sum_n (-1)^n q^((n+1/2)^2) sin((2n+1)u)`` with the fractional powers
    taken from the principal logarithm of ``q``. Summation stops once a term
    falls below 1e-18 of the largest term seen, past the peak of the terms.
    """
    q = complex(q)
    if not 0 < abs(q) < 1:
        raise NomeOutOfRange(f"|q| = {abs(q)} must lie in (0, 1)")
    u = complex(u)
    lq = cmath.log(q)
    decay = -lq.real
    n_peak = abs(u.imag) / decay
    total = 0j
    running_max = 0.0
    for n in range(max_terms):
        term = cmath.exp((n + 0.5) ** 2 * lq) * cmath.sin((2 * n + 1) * u)
        if n % 2:
            term = -term
        total += term
        mag = abs(term)
        running_max = max(running_max, mag)
        if n > n_peak and mag <= 1e-18 * running_max:
            break
    return 2 * total


def _landen_chain(ksq):
    m = complex(ksq)
    chain = []
    while abs(m) > 1e-16 and len(chain) < 12:
        kp = cmath.sqrt(1 - m)
        k1 = m / (1 + kp) ** 2
        chain.append(k1)
        m = k1 * k1
    return chain, m


def jacobi_ellipj(u, ksq):
    """Jacobi sn, cn, dn by descending Landen (Gauss) transformations.

    Works elementwise on arrays. The modulus sequence is reduced until
    ``|m| < 1e-16`` (at most 12 levels) and closed with first-order
    trigonometric approximations.
    """
    ksq = complex(ksq)
    if ksq == 1:
        raise DegenerateModulus("sn degenerates to tanh at ksq = 1")
    chain, m = _landen_chain(ksq)
    u = np.asarray(u, dtype=complex)
    v = u
    for k1 in chain:
        v = v / (1 + k1)
    sv, cv = np.sin(v), np.cos(v)
    corr = (m / 4) * (v - sv * cv)
    s = sv - corr * cv
    c = cv + corr * sv
    d = 1 - (m / 2) * sv * sv
    for k1 in reversed(chain):
        s2 = s * s
        den = 1 + k1 * s2
        s, c, d = (1 + k1) * s / den, c * d / den, (1 - k1 * s2) / den
    if s.ndim == 0:
        return complex(s), complex(c), complex(d)
    return s, c, d


def jacobi_sn(u, ksq):
    return jacobi_ellipj(u, ksq)[0]


def jacobi_cn(u, ksq):
    return jacobi_ellipj(u, ksq)[1]


def jacobi_dn(u, ksq):
    return jacobi_ellipj(u, ksq)[2]


def curve_w2(x, ksq):
    x = np.asarray(x, dtype=complex)
    return (1 - x * x) * (1 - ksq * x * x)


def branch_points_of(ksq):
    ksq = complex(ksq)
    pts = [1, -1]
    if ksq != 0:
        r = 1 / cmath.sqrt(ksq)
        pts += [r, -r]
    return np.array(pts, dtype=complex)


def _basis_coords(d, periods):
    w1, w2 = periods
    M = np.array([[w1.real, w2.real], [w1.imag, w2.imag]])
    return np.linalg.solve(M, [d.real, d.imag])


def lattice_distance(d, periods):
    """Distance from ``d`` to the lattice spanned by ``periods``."""
    d = complex(d)
    w1, w2 = periods
    a, b = _basis_coords(d, periods)
    best = math.inf
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            best = min(best, abs(d - (round(a) + i) * w1 - (round(b) + j) * w2))
    return best


def reduce_mod_lattice(d, periods):
    """Representative of ``d`` closest to the origin modulo ``periods``."""
    d = complex(d)
    w1, w2 = periods
    a, b = _basis_coords(d, periods)
    cands = [d - (round(a) + i) * w1 - (round(b) + j) * w2 for i in (-1, 0, 1) for j in (-1, 0, 1)]
    return min(cands, key=abs)


@dataclass(frozen=True)
class AbelValue:
    """Value of the Abel map together with its period lattice.

    ``w`` is the value of the square root at the endpoint, which fixes the
    sheet of the endpoint.
    """

    u: complex
    periods: tuple
    w: complex = 1 + 0j

    def equivalent(self, other, tol=1e-10):
        other_u = other.u if isinstance(other, AbelValue) else complex(other)
        return lattice_distance(self.u - other_u, self.periods) < tol


def _periods(ksq):
    return (4 * complete_K(ksq), 2j * complete_Kprime(ksq))


def _segment_nodes(p, q, bps):
    """Split [p, q] into parameter intervals shrinking towards branch points.

    Each piece is at most a fifth of its distance to the nearest branch
    point, so the integrand is analytic well beyond it.
    """
    L = abs(q - p)
    out = []
    s = 0.0
    while s < 1.0:
        z = p + s * (q - p)
        d = float(np.min(np.abs(bps - z)))
        h = min(1.0 - s, 0.2 * d / L)
        out.append((s, s + h))
        s += h
    return out


def _dist_to_segment(pts, a, b):
    if len(pts) == 0:
        return math.inf
    ab = b - a
    if ab == 0:
        return float(np.min(np.abs(pts - a)))
    t = np.clip(((pts - a) * np.conj(ab)).real / abs(ab) ** 2, 0, 1)
    return float(np.min(np.abs(pts - (a + t * ab))))


def abel_u(xtilde, ksq, path_hint=None, tol=1e-12, start=0j, w_start=1 + 0j):
    """Abel integral of ``dx / w`` from ``start`` to ``xtilde``.

    The path is the polyline ``start -> *path_hint -> xtilde`` (straight by
    default); ``w`` is continued along it from ``w_start``. Quadrature is
    16-point Gauss-Legendre on subsegments shrinking geometrically near the
    branch points ``+-1, +-1/k``.
    """
    ksq = complex(ksq)
    bps = branch_points_of(ksq)
    verts = [complex(start)] + [complex(v) for v in (path_hint or [])] + [complex(xtilde)]
    if _dist_to_segment(bps, verts[0], verts[0]) < tol:
        raise PathThroughBranchPoint("path starts at a branch point")
    for p, q in zip(verts[:-1], verts[1:]):
        if _dist_to_segment(bps, p, q) < tol:
            raise PathThroughBranchPoint(f"segment {p} -> {q} passes through a branch point")

    xs = [verts[0]]
    wts = [0j]
    for p, q in zip(verts[:-1], verts[1:]):
        if p == q:
            continue
        for s0, s1 in _segment_nodes(p, q, bps):
            half = (s1 - s0) / 2
            mid = (s1 + s0) / 2
            ss = mid + half * _GL_NODES
            xs.extend(p + ss * (q - p))
            wts.extend(half * _GL_WEIGHTS * (q - p))
            xs.append(p + s1 * (q - p))
            wts.append(0j)
    xs = np.array(xs)
    wts = np.array(wts)
    r = np.sqrt(curve_w2(xs, ksq))
    # continuity of w between consecutive nodes fixes the sign
    flips = np.ones(len(r))
    if len(r) > 1:
        flips[1:] = np.where((r[1:] * np.conj(r[:-1])).real >= 0, 1.0, -1.0)
    signs = np.cumprod(flips)
    w_first = r[0] * signs[0]
    if (w_first * np.conj(complex(w_start))).real < 0:
        signs = -signs
    w = r * signs
    u = complex(np.sum(wts / w))
    return AbelValue(u, _periods(ksq), complex(w[-1]))


def _detour_paths(x):
    """Candidate waypoint lists from 0 to ``x``: straight first, then arcs."""
    yield []
    for off in (0.5j, -0.5j, 1j, -1j, 0.25j, -0.25j):
        yield [x * (0.5 + off)]


def default_path(x, ksq):
    """Waypoints of the first candidate path from 0 to ``x`` that stays clear
    of the branch points (``None`` when every candidate passes too close).

    A path is clear when it keeps a fixed margin from every branch point, or
    at least half the distance between ``x`` itself and the nearest one.
    """
    x = complex(x)
    bps = branch_points_of(complex(ksq))
    for hint in _detour_paths(x):
        verts = [0j] + hint + [x]
        clearance = min(_dist_to_segment(bps, p, q) for p, q in zip(verts[:-1], verts[1:]))
        own = float(np.min(np.abs(bps - x)))
        if clearance > min(0.05 * min(1.0, float(np.min(np.abs(bps)))), 0.5 * own):
            return hint
    return None


def abel_point(x, w_target, ksq, tol=1e-9):
    """Abel image ``u`` of the curve point ``(x, w_target)``.

    Returns an :class:`AbelValue` with ``sn(u) = x`` and ``sn'(u) = w_target``.
    A path from 0 avoiding branch points is chosen automatically; if it
    lands on the opposite sheet the value is reflected through ``u -> 2K - u``.
    """
    x = complex(x)
    w_target = complex(w_target)
    ksq = complex(ksq)
    scale = max(1.0, abs(x))
    hint = default_path(x, ksq)
    if hint is None:
        raise PathThroughBranchPoint(f"no clear path from 0 to {x}")
    val = abel_u(x, ksq, path_hint=hint)
    if abs(val.w - w_target) <= tol * max(1.0, abs(w_target)) * scale:
        return val
    if abs(val.w + w_target) <= tol * max(1.0, abs(w_target)) * scale:
        K = complete_K(ksq)
        return AbelValue(2 * K - val.u, val.periods, -val.w)
    raise ValueError(f"({x}, {w_target}) is not on the curve ksq = {ksq}")
