"""Integration of the example system and of the coupled Lax/factor flows along
polylines in the complex time plane.

Every segment ``t = a + s (b - a)``, ``s in [0, 1]`` is integrated in the real
parameter ``s`` with an embedded 8(5,3) Runge-Kutta pair on the complex state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUp, ConfigError, NoBlowUp, SingularFactor, StepCollapse
from .laxcore import LaurentMatrixPoly, apply_P0, build_L0, invariants, rhs_ode

__all__ = [
    "PathSpec",
    "FlowSample",
    "MatrixBundle",
    "BLOWUP_NORM",
    "FIT_WINDOW",
    "integrate_system",
    "detect_blowup",
    "fit_pole",
    "integrate_lax_triple",
    "check_normalizer",
    "equispaced_lambdas",
    "write_trajectory_csv",
]

BLOWUP_NORM = 1e8
FIT_WINDOW = 20
TRAJECTORY_HEADER = ["t_re", "t_im", "x_re", "x_im", "y_re", "y_im", "z_re", "z_im", "A_drift", "B_drift"]


@dataclass(frozen=True)
class PathSpec:
    """Polyline in the complex t plane.

    The initial data are attached to the first vertex. Unless
    ``prepend_origin`` is false, a path not starting at 0 is extended by
    prepending 0.
    """

    vertices: tuple
    max_step: float = math.inf
    tol: float = 1e-10
    prepend_origin: bool = True

    def __post_init__(self):
        verts = [complex(v) for v in self.vertices]
        if not verts:
            raise ConfigError("a path needs at least one vertex", field="vertices")
        if self.prepend_origin and verts[0] != 0:
            verts.insert(0, 0j)
        if any(a == b for a, b in zip(verts[:-1], verts[1:])):
            raise ConfigError("consecutive path vertices must differ", field="vertices")
        if not self.max_step > 0:
            raise ConfigError("max_step must be positive", field="max_step")
        if not self.tol > 0:
            raise ConfigError("tol must be positive", field="tol")
        object.__setattr__(self, "vertices", tuple(verts))

    @classmethod
    def ray(cls, direction, radius, **kw):
        return cls((0j, complex(direction) * radius), **kw)

    @property
    def segments(self):
        return list(zip(self.vertices[:-1], self.vertices[1:]))


@dataclass
class MatrixBundle:
    """Lax matrix coefficients and factor values at a fixed set of ``lam``."""

    L: LaurentMatrixPoly
    lam: np.ndarray
    Gp: np.ndarray
    Gm: np.ndarray


@dataclass
class FlowSample:
    t: complex
    state: object
    drift: tuple | None = None


def equispaced_lambdas(count=16):
    if count < 8:
        raise ConfigError("at least 8 lambda samples are required", field="lambda_samples")
    return np.exp(2j * np.pi * np.arange(count) / count)


# ----------------------------------------------------------------------------
# generic polyline driver


def _integrate_path(f, y0, path, norm):
    """Integrate ``dy/dt = f(t, y)`` along ``path``.

    Returns ``(ts, ys)`` of accepted steps. Raises ``_Escape`` carrying the
    accepted history when ``norm(y)`` reaches :data:`BLOWUP_NORM`.
    """
    ts, ys = [path.vertices[0]], [np.asarray(y0, dtype=complex)]
    for a, b in path.segments:
        d = b - a
        rhs = lambda s, y, a=a, d=d: d * f(a + s * d, y)
        event = lambda s, y: norm(y) - BLOWUP_NORM
        event.terminal = True
        event.direction = 1
        max_step = min(1.0, path.max_step / abs(d))
        sol = solve_ivp(
            rhs, (0.0, 1.0), ys[-1], method="DOP853", rtol=path.tol, atol=path.tol * 1e-2,
            max_step=max_step, events=event,
        )
        seg_t = list(a + sol.t[1:] * d)
        if sol.status == 0 and seg_t:
            seg_t[-1] = b  # land exactly on the vertex
        seg_y = list(sol.y.T[1:])
        ts.extend(seg_t)
        ys.extend(seg_y)
        if sol.status == 1:
            raise _Escape(ts, ys)
        if sol.status == -1:
            grown = norm(ys[-1]) > 1e3 * max(1.0, norm(ys[0]))
            if grown:
                raise _Escape(ts, ys)
            raise StepCollapse(f"step size underflow near t = {ts[-1]}: {sol.message}")
    return ts, ys


class _Escape(Exception):
    def __init__(self, ts, ys):
        super().__init__("norm escape")
        self.ts, self.ys = ts, ys


# ----------------------------------------------------------------------------
# scalar system


def _system_rhs(a):
    def f(t, s):
        x, y, z = s
        return np.array(rhs_ode(x, y, z, a))

    return f


def _sup(y):
    return float(np.max(np.abs(y)))


def fit_pole(ts, xs, dxs, window=FIT_WINDOW):
    """Fit ``x ~ c (t - t*)^(-p)`` to the last ``window`` samples.

    ``t*`` comes from a linear least-squares fit of ``x / x' = -(t - t*) / p``;
    ``p`` is then re-estimated by least squares on ``log|x|`` against
    ``log|t - t*|``.
    """
    ts = np.asarray(ts[-window:], dtype=complex)
    xs = np.asarray(xs[-window:], dtype=complex)
    dxs = np.asarray(dxs[-window:], dtype=complex)
    g = xs / dxs
    design = np.column_stack([ts, np.ones_like(ts)])
    (alpha, beta), *_ = np.linalg.lstsq(design, g, rcond=None)
    t_star = -beta / alpha
    r = np.abs(ts - t_star)
    keep = r > 0
    slope = np.polyfit(np.log(r[keep]), np.log(np.abs(xs[keep])), 1)[0]
    return complex(t_star), float(-slope)


def integrate_system(config, path):
    """Samples of ``(x, y, z)`` at every accepted step along ``path``.

    Each sample carries the drift of the invariants ``(A, B)`` from their
    initial values. Raises :class:`BlowUp` with a fitted pole estimate when
    the state norm reaches :data:`BLOWUP_NORM`.
    """
    A0, B0 = config.A, config.B
    a = config.a

    def sample(t, y):
        A, B = invariants(y[0], y[1], y[2], a)
        return FlowSample(complex(t), tuple(complex(v) for v in y), (abs(A - A0), abs(B - B0)))

    try:
        ts, ys = _integrate_path(_system_rhs(a), config.state0, path, _sup)
    except _Escape as esc:
        samples = [sample(t, y) for t, y in zip(esc.ts, esc.ys)]
        xs = [y[0] for y in esc.ys]
        dxs = [-2 * a * y[2] for y in esc.ys]
        if len(xs) < 4:
            raise BlowUp(complex(esc.ts[-1]), None, samples) from None
        t_star, p = fit_pole(esc.ts, xs, dxs)
        raise BlowUp(t_star, p, samples) from None
    return [sample(t, y) for t, y in zip(ts, ys)]


def detect_blowup(config, ray_direction, max_radius, tol=1e-10):
    """Integrate along ``t = r * ray_direction``, ``0 <= r <= max_radius``.

    Returns ``{"t_star", "exponent", "samples"}`` for the first pole met.
    Raises :class:`NoBlowUp` when the ray ends with a bounded solution.
    """
    d = complex(ray_direction)
    if abs(abs(d) - 1) > 1e-12:
        raise ConfigError("ray_direction must have unit modulus", field="ray_direction")
    try:
        samples = integrate_system(config, PathSpec.ray(d, max_radius, tol=tol))
    except BlowUp as exc:
        return {"t_star": exc.t_est, "exponent": exc.exponent, "samples": exc.samples}
    raise NoBlowUp(
        f"no blow-up up to radius {max_radius}; final |state| = {_sup(np.array(samples[-1].state)):.3g}"
    )


def write_trajectory_csv(samples, fh):
    w = csv.writer(fh)
    w.writerow(TRAJECTORY_HEADER)
    for s in samples:
        row = [s.t.real, s.t.imag]
        for v in s.state:
            row += [v.real, v.imag]
        row += list(s.drift)
        w.writerow(["%.17g" % v for v in row])


# ----------------------------------------------------------------------------
# Lax matrix and factor flows


class _Layout:
    """Packing of (L coefficients, G+ samples, G- samples) into one vector."""

    def __init__(self, n, m, count):
        self.n, self.m, self.count = n, m, count
        self.nc = (m + 2) * n * n
        self.ng = count * n * n

    def pack(self, C, Gp, Gm):
        return np.concatenate([C.ravel(), Gp.ravel(), Gm.ravel()])

    def unpack(self, v):
        n, m, c = self.n, self.m, self.count
        C = v[: self.nc].reshape(m + 2, n, n)
        Gp = v[self.nc: self.nc + self.ng].reshape(c, n, n)
        Gm = v[self.nc + self.ng:].reshape(c, n, n)
        return C, Gp, Gm


def _lax_rhs(layout, lam, weights):
    m = layout.m
    powers = lam[None, :] ** np.arange(-m, 2)[:, None]  # (m+2, count)

    def f(t, v):
        C, Gp, Gm = layout.unpack(v)
        L = LaurentMatrixPoly.from_array(C, m)
        A0 = apply_P0(L, weights)
        # M = L^+ + A0 has exponents 0 and 1; index e + m holds exponent e
        M0 = C[m] + A0
        M1 = C[m + 1]
        dC = np.zeros_like(C)
        for idx in range(m + 2):
            acc = M0 @ C[idx] - C[idx] @ M0
            if idx >= 1:
                acc += M1 @ C[idx - 1] - C[idx - 1] @ M1
            dC[idx] = acc
        Lplus = np.einsum("k,ab->kab", powers[m], C[m]) + np.einsum("k,ab->kab", powers[m + 1], C[m + 1])
        Lminus = np.einsum("ek,eab->kab", powers[:m], C[:m])
        dGp = (Lplus + A0) @ Gp
        dGm = Gm @ (Lminus - A0)
        return layout.pack(dC, dGp, dGm)

    return f


def integrate_lax_triple(config, path, lambda_samples=None):
    """Co-integrate ``L_t`` with the factors ``G+~`` and ``G-~`` at fixed ``lam``.

    dL/dt = [L^+ + A0, L], dG+/dt = (L^+ + A0) G+, dG-/dt = G- (L^- - A0),
    with ``A0 = P0(L_t)`` from ``config.p0_weights`` and initial values
    ``L0, I, I``. Returns :class:`FlowSample` objects whose ``state`` is a
    :class:`MatrixBundle`.
    """
    lam = equispaced_lambdas() if lambda_samples is None else np.asarray(lambda_samples, dtype=complex)
    if lam.size < 8:
        raise ConfigError("at least 8 lambda samples are required", field="lambda_samples")
    if np.max(np.abs(np.abs(lam) - 1)) > 1e-12:
        raise ConfigError("lambda samples must lie on the unit circle", field="lambda_samples")
    if len(np.unique(np.round(lam, 12))) != lam.size:
        raise ConfigError("lambda samples must be distinct", field="lambda_samples")
    L0 = build_L0(config)
    n, m = L0.n, L0.m
    layout = _Layout(n, m, lam.size)
    eye = np.broadcast_to(np.eye(n, dtype=complex), (lam.size, n, n))
    y0 = layout.pack(L0.as_array(), eye, eye)
    f = _lax_rhs(layout, lam, config.p0_weights)

    def sample(t, v):
        C, Gp, Gm = layout.unpack(np.array(v))
        return FlowSample(complex(t), MatrixBundle(LaurentMatrixPoly.from_array(C, m), lam, Gp, Gm))

    try:
        ts, ys = _integrate_path(f, y0, path, _sup)
    except _Escape as esc:
        raise BlowUp(complex(esc.ts[-1]), None, [sample(t, y) for t, y in zip(esc.ts, esc.ys)]) from None
    return [sample(t, y) for t, y in zip(ts, ys)]


def _pairwise_spread(F):
    diff = F[:, None] - F[None, :]
    return float(np.max(np.linalg.norm(diff, ord=2, axis=(-1, -2))))


def _samples_at(samples, times):
    by_t = {}
    for s in samples:
        by_t[s.t] = s
    return [by_t[t] for t in times]


def check_normalizer(config, path, lambda_samples=None, h=2e-4, cond_limit=1e12):
    """Compare the flow with A0 = P0(L_t) against the flow with A0 = 0.

    Forms ``F = G+~ G+^-1`` (and the mirrored ``G+^-1 G+~``) at every vertex of
    ``path`` and at finite-difference stencils ``c +- h d`` around each
    segment midpoint ``c`` (``d`` the unit direction of the segment). Reports
    the largest spread of ``F`` over the ``lam`` samples and the residual of
    ``dF/dt = A0 F`` for steps ``h`` and ``h/2``.
    """
    verts = list(path.vertices)
    centres = []
    new_verts = [verts[0]]
    for a, b in path.segments:
        d = (b - a) / abs(b - a)
        c = 0.5 * (a + b)
        stencil = [c - h * d, c - 0.5 * h * d, c, c + 0.5 * h * d, c + h * d]
        centres.append((c, d))
        new_verts.extend(stencil + [b])
    dense = PathSpec(tuple(new_verts), path.max_step, path.tol, prepend_origin=False)
    tilde = integrate_lax_triple(config, dense, lambda_samples)
    hat = integrate_lax_triple(config.replace(p0_weights=None), dense, lambda_samples)
    times = list(dense.vertices)
    st, sh = _samples_at(tilde, times), _samples_at(hat, times)

    F_left, F_right = {}, {}
    for t, a, b in zip(times, st, sh):
        Gt, Gh = a.state.Gp, b.state.Gp
        if np.max(np.linalg.cond(Gh)) > cond_limit:
            raise SingularFactor(f"G+ is numerically singular at t = {t}")
        F_left[t] = np.linalg.solve(np.swapaxes(Gh, -1, -2), np.swapaxes(Gt, -1, -2)).swapaxes(-1, -2)
        F_right[t] = np.linalg.solve(Gh, Gt)
    spread_left = max(_pairwise_spread(F) for F in F_left.values())
    spread_right = max(_pairwise_spread(F) for F in F_right.values())
    reading = "G+~ G+^-1" if spread_left <= spread_right else "G+^-1 G+~"
    F_use = F_left if spread_left <= spread_right else F_right

    tilde_at = dict(zip(times, st))
    residuals = {}
    for step in (h, 0.5 * h):
        worst = 0.0
        for c, d in centres:
            Fp, Fm = F_use[c + step * d].mean(axis=0), F_use[c - step * d].mean(axis=0)
            dF = (Fp - Fm) / (2 * step * d)
            A0 = apply_P0(tilde_at[c].state.L, config.p0_weights)
            worst = max(worst, float(np.linalg.norm(dF - A0 @ F_use[c].mean(axis=0), 2)))
        residuals[step] = worst
    return {
        "reading": reading,
        "lambda_independence_residual": min(spread_left, spread_right),
        "spread_left": spread_left,
        "spread_right": spread_right,
        "ode_residual": residuals[0.5 * h],
        "ode_residual_coarse": residuals[h],
        "F": {t: F_use[t].mean(axis=0) for t in path.vertices},
    }
