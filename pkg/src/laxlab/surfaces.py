"""Geometry of the classical curve and the spectral curve of the example.

Sigma  : w^2 = (1 - x^2)(1 - k^2 x^2),      k  = x1 / x2
Sigma1 : mu^2 = (1 - lam^2)(1 - k1^2 lam^2), k1 = lam1 / lam2 = (1 - k)/(1 + k)

Both are written in normalised coordinates; ``x = X / x1`` and
``lam = Lambda / lam1`` relative to the unnormalised dynamical variables.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .elliptic import abel_u, branch_points_of, default_path
from .errors import BranchPointInput, DegenerateCurve
from .laxcore import build_L0

__all__ = [
    "BranchData",
    "CurvePoint",
    "branch_points",
    "spectral_curve",
    "spectral_residual",
    "q1",
    "q2",
    "phi_map",
    "pullback_residual",
    "sigma1_sheet_signs",
]

_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class BranchData:
    """Branch points and moduli of Sigma and Sigma1 for one configuration.

    ``sqrtB`` is the principal square root used in ``x1^2 = A + 2 a sqrtB``.
    ``mu_signs`` records, for each zero ``lhat_i`` of q1, the sign ``s_i``
    such that ``s_i * mu(lhat_i / lam1) = z0 / (a lam1 lam2)`` where ``mu`` is
    continued from ``mu(0) = +1`` along the default path.
    """

    x1: complex
    x2: complex
    lambda1: complex
    lambda2: complex
    k: complex
    k1: complex
    lhat1: complex
    lhat2: complex
    sqrtB: complex
    mu_signs: tuple = (1, 1)

    @property
    def ksq(self):
        return self.k * self.k

    @property
    def k1sq(self):
        return self.k1 * self.k1

    def to_json(self):
        out = {}
        for name in ("x1", "x2", "lambda1", "lambda2", "k", "k1", "lhat1", "lhat2", "sqrtB"):
            z = complex(getattr(self, name))
            out[name] = [z.real, z.imag]
        out["mu_signs"] = list(self.mu_signs)
        return out


@dataclass(frozen=True)
class CurvePoint:
    """A point ``(first, second)`` on ``sigma`` or ``sigma1``.

    Points at infinity carry ``label`` ('inf1', 'inf2' or 'inf') and
    ``first = inf``.
    """

    curve: str
    first: complex
    second: complex
    label: str | None = None

    def residual(self, ksq):
        x, w = self.first, self.second
        return abs(w * w - (1 - x * x) * (1 - ksq * x * x))


def q1(config, lam):
    return config.a * lam * lam + config.x0 * lam + config.y0


def q2(config, lam):
    return config.a * lam * lam - config.x0 * lam + config.y0


def branch_points(config):
    """Branch data of both curves from the invariants of ``config``.

    lam1 and lam2 are taken from the pairing ``(x2 - x1)/2a, (x1 + x2)/2a``;
    the alternative square-root pairing breaks ``k1 = (1 - k)/(1 + k)``.
    """
    a, A, B = config.a, config.A, config.B
    if abs(B) < _DEGENERATE_TOL:
        raise DegenerateCurve("B = 0: x1 = x2")
    if abs(A * A - 4 * a * a * B) < _DEGENERATE_TOL * max(1.0, abs(A) ** 2):
        raise DegenerateCurve("A^2 = 4 a^2 B: k1 = 0")
    sqrtB = cmath.sqrt(B)
    x1 = cmath.sqrt(A + 2 * a * sqrtB)
    x2 = cmath.sqrt(A - 2 * a * sqrtB)
    k = x1 / x2
    if abs(k + 1) < _DEGENERATE_TOL:
        raise DegenerateCurve("k = -1: lam2 = 0")
    lam1 = (x2 - x1) / (2 * a)
    lam2 = (x1 + x2) / (2 * a)
    k1 = lam1 / lam2
    disc = cmath.sqrt(config.x0 ** 2 - 4 * a * config.y0)
    lhat1 = (-config.x0 + disc) / (2 * a)
    lhat2 = (-config.x0 - disc) / (2 * a)
    data = BranchData(x1, x2, lam1, lam2, k, k1, lhat1, lhat2, sqrtB)
    return BranchData(**{**data.__dict__, "mu_signs": sigma1_sheet_signs(config, data)})


def _default_endpoint_w(x, ksq):
    """Endpoint value of ``w`` continued from ``w(0) = 1`` on the default path."""
    hint = default_path(x, ksq)
    if hint is None:
        raise BranchPointInput(f"{x} sits on a branch point")
    return abel_u(x, ksq, path_hint=hint).w


def sigma1_sheet_signs(config, data):
    if config.z0 == 0:
        return (1, 1)
    target = config.z0 / (config.a * data.lambda1 * data.lambda2)
    signs = []
    for lh in (data.lhat1, data.lhat2):
        s = lh / data.lambda1
        try:
            w = _default_endpoint_w(s, data.k1sq)
        except BranchPointInput:
            signs.append(1)
            continue
        signs.append(1 if abs(w - target) <= abs(w + target) else -1)
    return tuple(signs)


def spectral_curve(config):
    """Nonzero coefficients ``(a^2, -A, B)`` of p1(lam) = a^2 lam^4 - A lam^2 + B."""
    return (config.a ** 2, -config.A, config.B)


def spectral_residual(config, lams):
    """Max of ``|lam^2 nu^2 - p1(lam)|`` where ``nu^2 = -det L0(lam)``."""
    lams = np.asarray(lams, dtype=complex)
    L = build_L0(config)(lams)
    nu2 = -(L[..., 0, 0] * L[..., 1, 1] - L[..., 0, 1] * L[..., 1, 0])
    c4, c2, c0 = spectral_curve(config)
    p1 = c4 * lams ** 4 + c2 * lams ** 2 + c0
    return float(np.max(np.abs(lams ** 2 * nu2 - p1)))


def phi_map(p, k, limit=False, tol=1e-12):
    """Degree-two map Sigma -> Sigma1.

    (x, w) -> (i (1 + k) x / w, (k^2 x^4 - 1) / w^2).  Points with ``w = 0``
    are only accepted with ``limit=True`` and then go to the points at
    infinity of Sigma1 ('inf1' for x = +-1, 'inf2' for x = +-1/k).
    """
    x, w = complex(p.first), complex(p.second)
    if p.label is not None and p.label.startswith("inf"):
        return CurvePoint("sigma1", 0j, 1 + 0j)
    if abs(w) < tol:
        if not limit:
            raise BranchPointInput(f"w = 0 at x = {x}")
        label = "inf1" if min(abs(x - 1), abs(x + 1)) <= min(abs(k * x - 1), abs(k * x + 1)) else "inf2"
        return CurvePoint("sigma1", complex("inf"), complex("inf"), label)
    lam = 1j * (1 + k) * x / w
    mu = (k * k * x ** 4 - 1) / (w * w)
    return CurvePoint("sigma1", lam, mu)


def pullback_residual(p, k, h=1e-5, clearance=1e-3):
    """Relative mismatch between phi^*(dlam / mu) and -i (1 + k) dx / w at ``p``.

    dlam/dx is taken by a central difference of ``phi_map`` along ``x``, with
    ``w`` continued analytically to the neighbouring points.
    """
    x, w = complex(p.first), complex(p.second)
    ksq = k * k
    k1 = (1 - k) / (1 + k)
    if np.min(np.abs(branch_points_of(ksq) - x)) < clearance:
        raise BranchPointInput(f"x = {x} is within {clearance} of a branch point of Sigma")
    image = phi_map(p, k)
    if np.min(np.abs(branch_points_of(k1 * k1) - image.first)) < clearance:
        raise BranchPointInput(f"phi({x}) is within {clearance} of a branch point of Sigma1")

    def shifted(dx):
        xs = x + dx
        ws = cmath.sqrt((1 - xs * xs) * (1 - ksq * xs * xs))
        if abs(ws - w) > abs(ws + w):
            ws = -ws
        return phi_map(CurvePoint("sigma", xs, ws), k).first

    dlam_dx = (shifted(h) - shifted(-h)) / (2 * h)
    lhs = dlam_dx / image.second
    rhs = -1j * (1 + k) / w
    return abs(lhs - rhs) / abs(rhs)
