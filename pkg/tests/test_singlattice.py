import json

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from laxlab.errors import ZeroZ0
from laxlab.laxcore import REF, rhs_ode
from laxlab.singlattice import (
    W,
    LatticePoint,
    LatticeReport,
    Window,
    classical_lattice,
    compare_lattices,
    rh_lattice,
    rh_offset,
    u0_classical,
    xi0,
)
from laxlab.surfaces import branch_points

from test_surfaces import random_configs


def ode_solution(cfg, t_end):
    """Reference x(t) by straight-line integration with tight tolerances."""
    f = lambda s, v: t_end * np.array(rhs_ode(*v, cfg.a))
    sol = solve_ivp(f, (0, 1), np.array(cfg.state0, dtype=complex), method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]


def test_closed_form_solution_matches_ode():
    # x(t) = x1 sn(i x2 t + u0) with the lattice's own u0 and modulus
    b = branch_points(REF)
    u0 = u0_classical(REF, b)
    mp.mp.dps = 25
    for t in (0.4, 0.3 + 0.2j, -0.25 - 0.3j):
        x_ode = ode_solution(REF, t)[0]
        x_cf = b.x1 * complex(mp.ellipfun("sn", 1j * b.x2 * t + u0, m=b.ksq))
        assert abs(x_ode - x_cf) < 1e-9 * max(1, abs(x_ode))


def test_ref_lattice_count_and_nearest_pole(ref_lattice):
    assert len(ref_lattice.points) == 42
    t0 = min(ref_lattice.t, key=abs)
    assert abs(abs(t0.real) - 0.127131) < 1e-6 and abs(abs(t0.imag) - 0.572517) < 1e-6
    # poles come in conjugate pairs for real data
    t = np.array(ref_lattice.t)
    for p in t:
        assert np.min(np.abs(t - p.conjugate())) < 1e-12
    assert all(W.contains(p) for p in t)


def test_lattice_coincidence_ref(ref_lattice):
    rh = rh_lattice(REF)
    m = compare_lattices(ref_lattice, rh, tol=1e-6)
    assert m.bijection and m.coincide
    assert m.max_distance < 1e-6
    assert rh.extra["two_way_residual"] < 1e-9


@pytest.mark.parametrize("cfg", random_configs(6, seed=17), ids=lambda c: f"x0={c.x0.real:.2f}")
def test_lattice_coincidence_random_configs(cfg):
    cl = classical_lattice(cfg)
    rh = rh_lattice(cfg)
    m = compare_lattices(cl, rh)
    assert m.coincide, (len(cl.points), len(rh.points), m.max_distance)


def test_xi0_collapse():
    res = xi0(REF)
    assert abs(res["xi0"] - 7.766) < 1e-3
    assert res["collapse_residual"] < 1e-10


def test_two_way_offset():
    off = rh_offset(REF)
    assert off.two_way_residual < 1e-9


def test_zero_z0():
    cfg = REF.replace(z0=0)
    with pytest.raises(ZeroZ0):
        xi0(cfg)
    with pytest.raises(ZeroZ0):
        rh_lattice(cfg)


def test_window_filter_and_json():
    small = Window(-1, 1, -1, 1)
    cl = classical_lattice(REF, small)
    assert all(small.contains(p.t) for p in cl.points)
    assert 0 < len(cl.points) < 42
    assert Window.from_json(small.to_json()) == small
    with pytest.raises(ValueError):
        Window(1, -1, 0, 1)


def test_report_roundtrip(ref_lattice):
    text = json.dumps(ref_lattice.to_json())
    back = json.loads(text)
    pts = [complex(*p["t"]) for p in back["points"]]
    assert pts == list(ref_lattice.t)


def test_compare_detects_mismatch(ref_lattice):
    shifted = LatticeReport(
        [LatticePoint(p.t + 1e-4, p.m, p.n, "x") for p in ref_lattice.points],
        {}, {}, W, "x",
    )
    m = compare_lattices(ref_lattice, shifted, tol=1e-6)
    assert m.bijection and not m.coincide
    dropped = LatticeReport(ref_lattice.points[1:], {}, {}, W, "x")
    m = compare_lattices(ref_lattice, dropped)
    assert not m.bijection and len(m.unmatched_first) == 1


def test_mn_bound_is_large_enough(ref_lattice):
    wider = classical_lattice(REF, mn_bound=40)
    assert np.array_equal(wider.t, ref_lattice.t)


def test_u0_zero_for_zero_x0():
    assert u0_classical(REF.replace(x0=0)) == 0


def test_u0_inverts_through_mpmath():
    b = branch_points(REF)
    u0 = u0_classical(REF, b)
    mp.mp.dps = 25
    sn = complex(mp.ellipfun("sn", u0, m=b.ksq))
    cndn = complex(mp.ellipfun("cn", u0, m=b.ksq) * mp.ellipfun("dn", u0, m=b.ksq))
    assert abs(sn - REF.x0 / b.x1) < 1e-10
    assert abs(cndn - 2j * REF.a * REF.z0 / (b.x1 * b.x2)) < 1e-10


def test_origin_index_formulas():
    from laxlab.elliptic import complete_K, complete_Kprime

    big = Window(-50, 50, -50, 50)
    cl = classical_lattice(REF, big, mn_bound=2)
    b = cl.branch
    p00 = next(p for p in cl.points if p.m == 0 and p.n == 0)
    expect = (-cl.offsets["u0"] + 1j * complete_Kprime(b.ksq)) / (1j * b.x2)
    assert abs(p00.t - expect) < 1e-14
    rh = rh_lattice(REF, big, mn_bound=2)
    q00 = next(p for p in rh.points if p.m == 0 and p.n == 0)
    expect = (rh.offsets["u_xi0"] + 2 * complete_K(b.k1sq)) / (2 * REF.a * b.lambda2)
    assert abs(q00.t - expect) < 1e-14


def test_affine_lattice_steps():
    big = Window(-50, 50, -50, 50)
    for report in (classical_lattice(REF, big, mn_bound=3), rh_lattice(REF, big, mn_bound=3)):
        by_mn = {(p.m, p.n): p.t for p in report.points}
        dm = {by_mn[(m + 1, n)] - by_mn[(m, n)] for m in range(-3, 3) for n in range(-3, 4)}
        dn = {by_mn[(m, n + 1)] - by_mn[(m, n)] for m in range(-3, 4) for n in range(-3, 3)}
        assert max(abs(d - next(iter(dm))) for d in dm) < 1e-12
        assert max(abs(d - next(iter(dn))) for d in dn) < 1e-12


def test_no_real_axis_points(ref_lattice):
    assert min(abs(t.imag) for t in ref_lattice.t) > 1e-3


def test_xi0_is_three_lambda2():
    b = branch_points(REF)
    assert abs(xi0(REF, b)["xi0"] - 3 * b.lambda2) < 1e-14


def test_identical_and_perturbed_matching(ref_lattice):
    same = compare_lattices(ref_lattice, ref_lattice)
    assert same.coincide and same.max_distance == 0
    moved = rh_lattice(REF.replace(z0=1.1))
    m = compare_lattices(ref_lattice, moved, tol=1e-6)
    assert not m.coincide
    assert m.max_distance > 1e-3


def test_landen_limit_behaviour():
    # as B -> 0 with A fixed, k -> 1 and k1 -> 0: K1 tends to pi/2 while |K1'| grows
    from laxlab.elliptic import complete_K, complete_Kprime

    K1, K1p = [], []
    for z0 in (0.5, 0.1, 0.01):
        b = branch_points(REF.replace(x0=10, y0=0.01, z0=z0))
        K1.append(abs(complete_K(b.k1sq)))
        K1p.append(abs(complete_Kprime(b.k1sq)))
    assert K1p[0] < K1p[1] < K1p[2]
    assert abs(K1[-1] - np.pi / 2) < 1e-3


def test_orientation_constants_stable_for_ten_configs():
    from laxlab.singlattice import period_relations

    for cfg in random_configs(10, seed=23):
        pr = period_relations(branch_points(cfg))
        assert pr["calibrated"] == ["i", "i"]
        assert max(pr["residual_K"], pr["residual_Kp"]) < 1e-9
