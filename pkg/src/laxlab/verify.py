"""Property suites run by ``laxlab verify``.

Each check measures a residual and compares it with a fixed bound. The suites
are self-contained and deterministic (fixed seeds), and sized to finish in
well under a minute for the reference configuration.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import elliptic as ell
from .errors import LaxLabError, NoBlowUp
from .flowint import PathSpec, check_normalizer, detect_blowup, integrate_lax_triple, integrate_system
from .laxcore import build_L0
from .singlattice import W, classical_lattice, compare_lattices, period_relations, rh_lattice, xi0
from .surfaces import CurvePoint, branch_points, phi_map, pullback_residual, spectral_residual
from .toeplitz import (
    assemble_truncation,
    default_grid_size,
    expm_batch,
    refine_singularity,
    sigma_min,
    symbol_exp_tL0,
    winding_number,
)

__all__ = ["Check", "run_suites", "SUITES", "format_table", "eigenvalue_set_distance"]

NONTRIVIAL_WEIGHTS = {0: np.ones((2, 2))}


@dataclass
class Check:
    suite: str
    name: str
    residual: float
    bound: float
    passed: bool | None = None
    note: str = ""

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(np.isfinite(self.residual) and self.residual < self.bound)

    def to_json(self):
        return {"suite": self.suite, "check": self.name, "residual": self.residual,
                "bound": self.bound, "passed": self.passed, "note": self.note}


def eigenvalue_set_distance(A, B):
    """Largest distance between the eigenvalue pairs of two stacks of 2x2 matrices,
    minimised over the two ways of pairing them."""
    ea, eb = np.linalg.eigvals(A), np.linalg.eigvals(B)
    straight = np.max(np.abs(ea - eb), axis=-1)
    swapped = np.max(np.abs(ea - eb[..., ::-1]), axis=-1)
    return float(np.max(np.minimum(straight, swapped)))


def _rand_complex(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def suite_laxcore(config):
    rng = np.random.default_rng(1)
    lam = np.exp(2j * np.pi * rng.random(10))
    L = build_L0(config)(lam)
    trace = float(np.max(np.abs(L[:, 0, 0] + L[:, 1, 1])))
    return [
        Check("laxcore", "trace L0 on the circle", trace, 1e-14),
        Check("laxcore", "spectral curve det(nu - L0) = p1", spectral_residual(config, _rand_complex(rng, 10)), 1e-10),
    ]


def suite_elliptic(config):
    rng = np.random.default_rng(2)
    ksq = 0.3 + 0.2j
    u, v = _rand_complex(rng, 100, 0.5), _rand_complex(rng, 100, 0.5)
    su, cu, du = ell.jacobi_ellipj(u, ksq)
    sv, cv, dv = ell.jacobi_ellipj(v, ksq)
    lhs = ell.jacobi_sn(u + v, ksq)
    rhs = (su * cv * dv + sv * cu * du) / (1 - ksq * su ** 2 * sv ** 2)
    add = float(np.max(np.abs(lhs - rhs)))

    kerr = 0.0
    for m in rng.uniform(0.01, 0.95, 20):
        ref = integrate.quad(lambda th: 1 / math.sqrt(1 - m * math.sin(th) ** 2), 0, math.pi / 2,
                             epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        kerr = max(kerr, abs(ell.complete_K(m) - ref))

    rt = 0.0
    for x in _rand_complex(rng, 50, 0.4):
        val = ell.abel_u(x, ksq)
        rt = max(rt, abs(ell.jacobi_sn(val.u, ksq) - x))

    q = ell.nome(ksq)
    tau = cmath.log(q) / (1j * math.pi)
    odd = per = quasi = 0.0
    for z in _rand_complex(rng, 10, 0.3):
        t = ell.theta1(z, q)
        odd = max(odd, abs(ell.theta1(-z, q) + t))
        per = max(per, abs(ell.theta1(z + math.pi, q) + t))
        quasi = max(quasi, abs(ell.theta1(z + math.pi * tau, q) + cmath.exp(-2j * z) / q * t))
    return [
        Check("elliptic", "sn addition formula (100 pairs)", add, 1e-12),
        Check("elliptic", "K vs quadrature (20 moduli)", kerr, 1e-10),
        Check("elliptic", "sn(u(x)) = x (50 points)", rt, 1e-10),
        Check("elliptic", "theta1 odd", odd, 1e-12),
        Check("elliptic", "theta1(u + pi) = -theta1(u)", per, 1e-12),
        Check("elliptic", "theta1 quasi-periodicity in pi tau", quasi, 1e-12),
    ]


def suite_surfaces(config):
    rng = np.random.default_rng(3)
    b = branch_points(config)
    k, k1 = b.k, b.k1
    img = pull = 0.0
    for x in _rand_complex(rng, 50, 0.6):
        w = cmath.sqrt(complex(ell.curve_w2(x, b.ksq)))
        p = phi_map(CurvePoint("sigma", x, w), k)
        img = max(img, p.residual(b.k1sq) / max(1.0, abs(p.second) ** 2))
        try:
            pull = max(pull, pullback_residual(CurvePoint("sigma", x, w), k))
        except LaxLabError:
            pass
    pr = period_relations(b)
    return [
        Check("surfaces", "phi image on Sigma1 (50 points)", img, 1e-10),
        Check("surfaces", "pullback of dlam/mu", pull, 1e-7),
        Check("surfaces", "k1 = (1-k)/(1+k)", abs(k1 - (1 - k) / (1 + k)), 1e-12),
        Check("surfaces", "period relation for K", pr["residual_K"], 1e-9, note=f"eps = {pr['eps_K']}"),
        Check("surfaces", "period relation for K'", pr["residual_Kp"], 1e-9, note=f"eps = {pr['eps_Kp']}"),
    ]


def suite_singlattice(config, window=W):
    c = classical_lattice(config, window)
    r = rh_lattice(config, window)
    m = compare_lattices(c, r, tol=1e-6)
    res = xi0(config)
    return [
        Check("singlattice", "classical vs factorization lattice", m.max_distance if m.bijection else math.inf,
              1e-6, note=f"{len(c.points)} points"),
        Check("singlattice", "xi0 collapse", res["collapse_residual"], 1e-10),
        Check("singlattice", "u(xi0) two ways", r.extra["two_way_residual"], 1e-9),
    ]


def suite_flowint(config):
    traj = integrate_system(config, PathSpec((0, 1)))
    drift = max(max(s.drift) for s in traj)
    out = [Check("flowint", "(A, B) drift to t = 1", drift, 1e-8)]
    try:
        detect_blowup(config, 1, 4)
        out.append(Check("flowint", "no real-axis blow-up to |t| = 4", 1.0, 0.5, passed=False))
    except NoBlowUp:
        out.append(Check("flowint", "no real-axis blow-up to |t| = 4", 0.0, 0.5))
    path = PathSpec((0, 0.25 + 0.2j, 0.5))
    for label, weights in (("A0 = 0", None), ("A0 = P0(L)", NONTRIVIAL_WEIGHTS)):
        cfg = config.replace(p0_weights=weights)
        samples = integrate_lax_triple(cfg, path)
        prod = iso = 0.0
        L0 = build_L0(config)
        for s in samples[1:]:
            bnd = s.state
            Lam = L0(bnd.lam)
            G = expm_batch(s.t * Lam)
            prod = max(prod, float(np.max(np.abs(bnd.Gm @ bnd.Gp - G))))
            iso = max(iso, eigenvalue_set_distance(Lam, bnd.L(bnd.lam)))
        out.append(Check("flowint", f"G-~ G+~ = exp(t L0), {label}", prod, 1e-8))
        out.append(Check("flowint", f"isospectrality, {label}", iso, 1e-8))
    rep = check_normalizer(config.replace(p0_weights=NONTRIVIAL_WEIGHTS), PathSpec((0, 0.3), tol=1e-12))
    out.append(Check("flowint", "normalizer lambda-independence", rep["lambda_independence_residual"], 1e-7,
                     note=rep["reading"]))
    out.append(Check("flowint", "normalizer dF/dt = A0 F", rep["ode_residual"], 1e-6))
    return out


def suite_toeplitz(config):
    N = 16
    grid = default_grid_size(N)
    # G = exp(0 L0) is the identity symbol
    s0 = symbol_exp_tL0(config, 0, grid)
    sig_id = sigma_min(assemble_truncation(s0, N))
    t = 0.3 + 0.7j
    s = symbol_exp_tL0(config, t, grid)
    sc = symbol_exp_tL0(config, t.conjugate(), grid)
    sym = abs(sigma_min(assemble_truncation(s, N)) - sigma_min(assemble_truncation(sc, N)))
    lat = classical_lattice(config)
    t0 = min(lat.t, key=abs)
    refined = refine_singularity(config, t0 + 0.05)
    ctrl = sigma_min(assemble_truncation(symbol_exp_tL0(config, t0 + 0.5, grid), N))
    return [
        Check("toeplitz", "sigma_min of the identity symbol", abs(sig_id - 1), 1e-12),
        Check("toeplitz", "winding number of det G", abs(winding_number(s)), 0.5),
        Check("toeplitz", "sigma_min(conj t) = sigma_min(t)", sym, 1e-10),
        Check("toeplitz", "refined pole vs lattice", abs(refined.t - t0), 1e-5),
        Check("toeplitz", "off-lattice control sigma_min", 1e-2 / ctrl, 1.0, note=f"sigma = {ctrl:.3g}"),
    ]


SUITES = {
    "laxcore": suite_laxcore,
    "elliptic": suite_elliptic,
    "surfaces": suite_surfaces,
    "singlattice": suite_singlattice,
    "flowint": suite_flowint,
    "toeplitz": suite_toeplitz,
}


def run_suites(config, names=None):
    checks = []
    for name in names or SUITES:
        try:
            checks.extend(SUITES[name](config))
        except LaxLabError as exc:
            checks.append(Check(name, f"suite raised {type(exc).__name__}", math.inf, 0.0, False, str(exc)))
    return checks


def format_table(checks):
    rows = [("suite", "check", "residual", "bound", "result")]
    for c in checks:
        rows.append((c.suite, c.name, f"{c.residual:.3e}", f"{c.bound:.0e}", "PASS" if c.passed else "FAIL"))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)
