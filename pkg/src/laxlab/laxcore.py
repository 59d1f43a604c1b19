"""Matrix Laurent polynomials, the example Lax system and its invariants.

The Lax matrices handled here have the form

    L(lam) = sum_{k=-m}^{1} L^(k) lam^k

and the flow is dL/dt = [L^+ + A0, L] with A0 = P0(L) a constant matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "LaurentMatrixPoly",
    "LaxConfig",
    "build_L0",
    "split_plus",
    "split_minus",
    "apply_P0",
    "rhs_ode",
    "invariants",
    "lax_matrix",
    "REF",
    "complex_to_json",
    "complex_from_json",
]


@dataclass(frozen=True)
class LaurentMatrixPoly:
    """Matrix Laurent polynomial with exponents in ``[-m, 1]``.

    ``coeffs`` maps an exponent to an ``n x n`` complex matrix. Missing
    exponents are zero.
    """

    n: int
    m: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("matrix dimension must be positive")
        if self.m < 0:
            raise ValueError("negative-degree bound must be non-negative")
        clean = {}
        for k, c in self.coeffs.items():
            k = int(k)
            if not -self.m <= k <= 1:
                raise ValueError(f"exponent {k} outside [-{self.m}, 1]")
            c = np.array(c, dtype=complex)
            if c.shape != (self.n, self.n):
                raise ValueError(f"coefficient {k} has shape {c.shape}")
            c.setflags(write=False)
            clean[k] = c
        object.__setattr__(self, "coeffs", clean)

    @property
    def exponents(self):
        return range(-self.m, 2)

    def coeff(self, k):
        c = self.coeffs.get(k)
        if c is None:
            return np.zeros((self.n, self.n), dtype=complex)
        return c

    def __call__(self, lam):
        """Evaluate at a scalar or an array of ``lam`` values.

        An array input of shape ``s`` returns shape ``s + (n, n)``.
        """
        lam = np.asarray(lam, dtype=complex)
        out = np.zeros(lam.shape + (self.n, self.n), dtype=complex)
        for k, c in self.coeffs.items():
            out += (lam ** k)[..., None, None] * c
        return out

    evaluate = __call__

    def _combine(self, other, alpha, beta):
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        m = max(self.m, other.m)
        keys = set(self.coeffs) | set(other.coeffs)
        return LaurentMatrixPoly(
            self.n, m, {k: alpha * self.coeff(k) + beta * other.coeff(k) for k in keys}
        )

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, scalar):
        return LaurentMatrixPoly(self.n, self.m, {k: scalar * c for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def as_array(self):
        """Coefficients stacked as ``(m + 2, n, n)``, lowest exponent first."""
        return np.stack([self.coeff(k) for k in self.exponents])

    @classmethod
    def from_array(cls, arr, m):
        arr = np.asarray(arr, dtype=complex)
        return cls(arr.shape[-1], m, {k: arr[i] for i, k in enumerate(range(-m, 2))})


def complex_to_json(z):
    z = complex(z)
    return [z.real, z.imag]


def complex_from_json(value, name="value"):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(value[0], value[1])
    raise ConfigError(f"{name}: expected a number or a [re, im] pair, got {value!r}", field=name)


@dataclass(frozen=True)
class LaxConfig:
    """Problem instance: coupling ``a`` and initial data ``(x0, y0, z0)``.

    The invariants ``A = x0^2 - 2 a y0`` and ``B = y0^2 + z0^2`` are derived
    at construction. ``p0_weights`` maps an exponent to a 2x2 weight matrix
    defining the constant-term functional P0 (``None`` or empty means A0 = 0).
    """

    a: complex
    x0: complex
    y0: complex
    z0: complex
    p0_weights: dict | None = None
    tol: float = 1e-9
    A: complex = field(init=False)
    B: complex = field(init=False)

    def __post_init__(self):
        for name in ("a", "x0", "y0", "z0"):
            value = getattr(self, name)
            try:
                value = complex(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a complex number", field=name) from None
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite", field=name)
            object.__setattr__(self, name, value)
        if self.a == 0:
            raise ConfigError("a = 0 collapses the spectral curve", field="a")
        if not self.tol > 0:
            raise ConfigError("tol must be positive", field="tol")
        if self.p0_weights:
            weights = {}
            for k, c in self.p0_weights.items():
                c = np.array(c, dtype=complex)
                if c.shape != (2, 2):
                    raise ConfigError(f"p0_weights[{k}] must be 2x2", field="p0_weights")
                if not -1 <= int(k) <= 1:
                    raise ConfigError(f"p0_weights exponent {k} outside [-1, 1]", field="p0_weights")
                weights[int(k)] = c
            object.__setattr__(self, "p0_weights", weights)
        else:
            object.__setattr__(self, "p0_weights", None)
        A, B = invariants(self.x0, self.y0, self.z0, self.a)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def state0(self):
        return (self.x0, self.y0, self.z0)

    def replace(self, **changes):
        values = dict(a=self.a, x0=self.x0, y0=self.y0, z0=self.z0,
                      p0_weights=self.p0_weights, tol=self.tol)
        values.update(changes)
        return LaxConfig(**values)

    def to_json(self):
        out = {name: complex_to_json(getattr(self, name)) for name in ("a", "x0", "y0", "z0")}
        if self.p0_weights:
            out["p0_weights"] = {
                str(k): [[complex_to_json(v) for v in row] for row in c]
                for k, c in sorted(self.p0_weights.items())
            }
        out["tol"] = self.tol
        return out

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        if not isinstance(obj, dict):
            raise ConfigError("lax config must be a JSON object", field="lax")
        missing = [k for k in ("a", "x0", "y0", "z0") if k not in obj]
        if missing:
            raise ConfigError(f"missing field {missing[0]}", field=missing[0])
        unknown = set(obj) - {"a", "x0", "y0", "z0", "p0_weights", "tol"}
        if unknown:
            name = sorted(unknown)[0]
            raise ConfigError(f"unknown field {name}", field=name)
        kwargs = {k: complex_from_json(obj[k], k) for k in ("a", "x0", "y0", "z0")}
        weights = obj.get("p0_weights")
        if weights is not None:
            if not isinstance(weights, dict):
                raise ConfigError("p0_weights must map exponents to 2x2 matrices", field="p0_weights")
            parsed = {}
            for k, rows in weights.items():
                try:
                    parsed[int(k)] = [[complex_from_json(v, "p0_weights") for v in row] for row in rows]
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"p0_weights[{k}]: {exc}", field="p0_weights") from None
            kwargs["p0_weights"] = parsed
        if "tol" in obj:
            tol = obj["tol"]
            if not isinstance(tol, (int, float)) or isinstance(tol, bool):
                raise ConfigError("tol must be a number", field="tol")
            kwargs["tol"] = float(tol)
        return cls(**kwargs)


def build_L0(config):
    """Lax matrix of the example at t = 0.

    L(lam) = [[v, u], [w, -v]] with v = z/lam, u = a lam + y/lam + x and
    w = a lam + y/lam - x.
    """
    return lax_matrix(config.x0, config.y0, config.z0, config.a)


def lax_matrix(x, y, z, a):
    """Lax matrix for an arbitrary state ``(x, y, z)``."""
    return LaurentMatrixPoly(2, 1, {
        1: [[0, a], [a, 0]],
        0: [[0, x], [-x, 0]],
        -1: [[z, y], [y, -z]],
    })


def split_plus(L):
    return LaurentMatrixPoly(L.n, L.m, {k: c for k, c in L.coeffs.items() if k >= 0})


def split_minus(L):
    return LaurentMatrixPoly(L.n, L.m, {k: c for k, c in L.coeffs.items() if k < 0})


def apply_P0(L, weights):
    """Constant matrix ``sum_k C_k * L^(k)`` (entrywise products).

    Any linear functional from the finite coefficient space to constant
    matrices that acts entrywise has this form; empty weights give zero.
    """
    out = np.zeros((L.n, L.n), dtype=complex)
    if not weights:
        return out
    for k, c in weights.items():
        out += np.asarray(c, dtype=complex) * L.coeff(int(k))
    return out


def rhs_ode(x, y, z, a):
    return (-2 * a * z, -2 * x * z, 2 * x * y)


def invariants(x, y, z, a):
    return (x * x - 2 * a * y, y * y + z * z)


REF = LaxConfig(a=1, x0=3, y0=1, z0=1)
