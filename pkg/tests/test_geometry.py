import math

import numpy as np
import pytest

from symcocycle.errors import ValidationError
from symcocycle.exprlang import parse
from symcocycle.geometry import (
    GridSpec,
    PathPolyline,
    Primitive,
    QuadratureNonconvergence,
    Window,
    WrongManifold,
    cumulative_integral,
    cylinder,
    integrate_area,
    integrate_oneform,
    period_over_core_loop,
    plane,
    polygon_signed_area,
    quad_adaptive,
    simpson_weights,
)

RNG = np.random.default_rng(20240817)


def unit_square():
    return Window(0.0, 1.0, 0.0, 1.0)


# ------------------------------------------------------------------
# windows, grids, manifolds
# ------------------------------------------------------------------


def test_window_validation():
    with pytest.raises(ValidationError):
        Window(0, 0, 0, 1)
    with pytest.raises(ValidationError):
        Window(1, 0, 0, 1)
    with pytest.raises(ValidationError):
        Window(0, math.inf, 0, 1)


def test_window_queries():
    w = Window(-2, 2, -1, 3)
    assert w.p_span == 4 and w.q_span == 4 and w.area == 16
    assert w.contains(0, 0)
    assert not w.contains(2.5, 0)
    assert w.contains(2.5, 0, slack=1.0)
    assert w.contains_window(Window(-1, 1, 0, 1))
    assert not w.contains_window(Window(-3, 1, 0, 1))
    inner = w.shrink(0.5)
    assert (inner.p_min, inner.p_max) == (-1.5, 1.5)


def test_gridspec():
    w = unit_square()
    spec = GridSpec(5, 7)
    P, Q = spec.mesh(w)
    assert P.shape == (5, 7)
    assert P[0, 0] == 0.0 and P[-1, 0] == 1.0
    assert Q[0, 0] == 0.0 and Q[0, -1] == 1.0
    with pytest.raises(ValidationError):
        GridSpec(2, 5)


def test_cylinder_window_must_span_circumference():
    cylinder(Window(-1, 1, 0, 2 * math.pi))  # fine
    with pytest.raises(ValidationError):
        cylinder(Window(-1, 1, 0, 6.0))
    cylinder(Window(-1, 1, 0, 6.0), circumference=6.0)  # fine with matching circ
    with pytest.raises(ValidationError):
        cylinder(Window(-1, 1, 0, 6.0), circumference=-6.0)


def test_wrap_q_and_wrap_delta():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    assert m.wrap_q(2 * math.pi + 0.25) == pytest.approx(0.25)
    assert m.wrap_q(-0.25) == pytest.approx(2 * math.pi - 0.25)
    assert m.wrap_delta(2 * math.pi + 0.1) == pytest.approx(0.1)
    assert m.wrap_delta(-3.5) == pytest.approx(-3.5 + 2 * math.pi)
    arr = m.wrap_delta(np.array([0.1, 6.0, -6.0]))
    assert arr[1] == pytest.approx(6.0 - 2 * math.pi)
    assert arr[2] == pytest.approx(2 * math.pi - 6.0)
    # plane passes values through untouched
    f = plane(unit_square())
    assert f.wrap_q(17.3) == 17.3
    assert f.wrap_delta(-9.9) == -9.9


def test_manifold_kind_validation():
    from symcocycle.geometry import ManifoldModel

    with pytest.raises(ValidationError):
        ManifoldModel("torus", unit_square())


# ------------------------------------------------------------------
# primitives
# ------------------------------------------------------------------


def test_builtin_primitives_valid_on_plane():
    m = plane(Window(-3, 3, -3, 3))
    for prim in (Primitive.p_dq(), Primitive.minus_q_dp(), Primitive.symmetric()):
        prim.validate(m)


def test_cylinder_rejects_nonperiodic_primitives():
    m = cylinder(Window(-2, 2, 0, 2 * math.pi))
    Primitive.p_dq().validate(m)
    with pytest.raises(ValidationError):
        Primitive.minus_q_dp().validate(m)
    with pytest.raises(ValidationError):
        Primitive.symmetric().validate(m)


def test_custom_primitive():
    m = cylinder(Window(-2, 2, 0, 2 * math.pi))
    Primitive.custom("0.3*sin(q)", "p*(1 + 0.3*cos(q))").validate(m)
    with pytest.raises(ValidationError):
        # curl is 2, not 1
        Primitive.custom("0", "2*p").validate(m)
    with pytest.raises(ValidationError):
        Primitive.custom("t*p", "p")


def test_named_primitive_lookup():
    assert Primitive.named("p_dq").name == "p_dq"
    with pytest.raises(ValidationError):
        Primitive.named("does_not_exist")


def test_primitive_norm_sup():
    m = plane(Window(-2, 2, -2, 2))
    # |(0, p)| peaks at |p| = 2
    assert Primitive.p_dq().norm_sup(m) == pytest.approx(2.0)
    # |(-q/2, p/2)| peaks at a corner
    assert Primitive.symmetric().norm_sup(m) == pytest.approx(math.sqrt(2.0))


# ------------------------------------------------------------------
# paths
# ------------------------------------------------------------------


def test_path_validation():
    with pytest.raises(ValidationError):
        PathPolyline(((0, 0),))
    with pytest.raises(ValidationError):
        PathPolyline(((0, 0), (0, 0)))
    with pytest.raises(ValidationError):
        PathPolyline(((0, 0), (math.nan, 1)))
    with pytest.raises(ValidationError):
        PathPolyline(((0, 0), (1, 1)), windings=(0, 0))


def test_path_reversed():
    path = PathPolyline(((0, 0), (1, 0), (1, 1)), windings=(1, 0))
    rev = path.reversed()
    assert rev.vertices == ((1, 1), (1, 0), (0, 0))
    assert rev.windings == (0, -1)


def test_path_is_closed_on_cylinder():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    loop = PathPolyline(((0.5, 0.0), (0.5, 2 * math.pi)))
    assert loop.is_closed(m)
    assert not loop.is_closed()  # as a plane path it is open


# ------------------------------------------------------------------
# line integrals
# ------------------------------------------------------------------


def test_oneform_vertical_segments():
    alpha = Primitive.p_dq()
    zero_seg = PathPolyline(((0, 0), (0, 1)))
    assert integrate_oneform(alpha, zero_seg) == pytest.approx(0.0, abs=1e-12)
    one_seg = PathPolyline(((1, 0), (1, 1)))
    assert integrate_oneform(alpha, one_seg) == pytest.approx(1.0, abs=1e-12)


def test_oneform_unit_circle_matches_riemann_oracle():
    # inscribed 4096-gon around the unit circle, counterclockwise
    s = np.linspace(0.0, 2 * math.pi, 4097)
    verts = tuple(zip(np.cos(s), np.sin(s)))
    poly = PathPolyline(verts)
    got = integrate_oneform(Primitive.p_dq(), poly, tol=1e-9)

    # oracle: dense midpoint Riemann sum of p dq over a million segments
    so = np.linspace(0.0, 2 * math.pi, 1_000_001)
    pm = np.cos(0.5 * (so[:-1] + so[1:]))
    dq = np.diff(np.sin(so))
    oracle = float(np.sum(pm * dq))

    assert oracle == pytest.approx(math.pi, abs=1e-9)
    assert got == pytest.approx(oracle, abs=3e-6)
    assert got == pytest.approx(math.pi, abs=3e-6)


def _random_closed_polygon(n_verts):
    while True:
        pts = RNG.uniform(-2, 2, size=(n_verts, 2))
        closed = np.vstack([pts, pts[:1]])
        if all(
            tuple(a) != tuple(b) for a, b in zip(closed[:-1], closed[1:])
        ):
            return closed


@pytest.mark.parametrize("prim_name", ["p_dq", "minus_q_dp", "symmetric"])
def test_primitive_loop_integral_is_signed_area(prim_name):
    tol = 1e-10
    for n in (3, 5, 8):
        closed = _random_closed_polygon(n)
        path = PathPolyline(tuple(map(tuple, closed)))
        area = polygon_signed_area(closed[:-1])
        got = integrate_oneform(Primitive.named(prim_name), path, tol=tol)
        assert got == pytest.approx(area, abs=10 * tol)


def test_exact_form_has_zero_loop_integral():
    # dg for smooth g integrates to zero around triangles
    g = parse("sin(p)*exp(-q^2) + p*q^2")
    dg = (g.diff("p"), g.diff("q"))
    tol = 1e-10
    for _ in range(4):
        tri = _random_closed_polygon(3)
        path = PathPolyline(tuple(map(tuple, tri)))
        assert integrate_oneform(dg, path, tol=tol) == pytest.approx(
            0.0, abs=10 * tol
        )


def test_builtin_primitives_differ_by_exact_forms():
    pdq = Primitive.p_dq()
    sym = Primitive.symmetric()
    diff_form = (pdq.a_p - sym.a_p, pdq.a_q - sym.a_q)
    for n in (4, 7):
        closed = _random_closed_polygon(n)
        path = PathPolyline(tuple(map(tuple, closed)))
        assert integrate_oneform(diff_form, path, tol=1e-10) == pytest.approx(
            0.0, abs=1e-9
        )


def test_reversed_path_negates_integral():
    path = PathPolyline(((0.2, -1.0), (1.3, 0.4), (0.9, 2.0)))
    alpha = Primitive.symmetric()
    fwd = integrate_oneform(alpha, path, tol=1e-11)
    bwd = integrate_oneform(alpha, path.reversed(), tol=1e-11)
    assert fwd == pytest.approx(-bwd, abs=1e-10)


def test_oneform_winding_hint_on_cylinder():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    # same endpoints, one extra full turn: integral of p dq differs by
    # p * circumference
    base = PathPolyline(((0.5, 1.0), (0.5, 2.0)))
    turned = PathPolyline(((0.5, 1.0), (0.5, 2.0)), windings=(1,))
    a = integrate_oneform(Primitive.p_dq(), base, tol=1e-11, manifold=m)
    b = integrate_oneform(Primitive.p_dq(), turned, tol=1e-11, manifold=m)
    assert b - a == pytest.approx(0.5 * 2 * math.pi, abs=1e-9)


# ------------------------------------------------------------------
# area integrals
# ------------------------------------------------------------------


def test_area_of_unit_square():
    assert integrate_area(parse("1"), unit_square(), tol=1e-12) == pytest.approx(
        1.0, abs=1e-11
    )
    assert integrate_area(parse("0"), unit_square(), tol=1e-12) == 0.0


def test_gaussian_area_matches_1d_oracle():
    from scipy.integrate import quad as scipy_quad

    w = Window(-6, 6, -6, 6)
    # note the parentheses: the grammar reads -p^2 as (-p)^2
    got = integrate_area(parse("exp(-(p^2 + q^2))"), w, tol=1e-9)

    one_d, err = scipy_quad(lambda x: math.exp(-x * x), -6, 6, epsabs=1e-13)
    assert err < 1e-10  # quadpack's estimate is conservative
    oracle = one_d * one_d

    assert got == pytest.approx(oracle, abs=1e-9)
    assert got == pytest.approx(math.pi, abs=1e-9)


def test_area_accepts_plain_callables():
    got = integrate_area(lambda p, q: p * q, unit_square(), tol=1e-11)
    assert got == pytest.approx(0.25, abs=1e-10)


# ------------------------------------------------------------------
# core-loop periods
# ------------------------------------------------------------------


def test_period_constant_dq_component():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    c = 0.8125
    got = period_over_core_loop(m, (parse("0"), parse(repr(c))), p0=0.3)

    # oracle: direct Riemann sum around the loop
    qs = np.linspace(0, 2 * math.pi, 100_001)
    oracle = float(np.sum(np.full(100_000, c) * np.diff(qs)))
    assert got == pytest.approx(oracle, abs=1e-9)
    assert got == pytest.approx(c * 2 * math.pi, abs=1e-9)


def test_period_of_exact_form_vanishes():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    g = parse("tanh(p)*sin(q)")
    dg = (g.diff("p"), g.diff("q"))
    assert period_over_core_loop(m, dg, p0=0.5, tol=1e-11) == pytest.approx(
        0.0, abs=1e-10
    )


def test_period_ignores_dp_component():
    m = cylinder(Window(-1, 1, 0, 2 * math.pi))
    got = period_over_core_loop(m, (parse("p"), parse("0")), p0=0.7)
    assert got == 0.0


def test_period_requires_cylinder():
    with pytest.raises(WrongManifold):
        period_over_core_loop(plane(unit_square()), (parse("0"), parse("1")), 0.0)


# ------------------------------------------------------------------
# quadrature utilities
# ------------------------------------------------------------------


def test_quad_adaptive_smooth():
    got = quad_adaptive(np.sin, 0.0, math.pi, tol=1e-12)
    assert got == pytest.approx(2.0, abs=1e-11)


def test_quad_adaptive_kink():
    # |x - 1/3| has a kink off every panel midpoint; adaptivity must dig in
    got = quad_adaptive(lambda x: np.abs(x - 1.0 / 3.0), 0.0, 1.0, tol=1e-12)
    exact = (1.0 / 3.0) ** 2 / 2 + (2.0 / 3.0) ** 2 / 2
    assert got == pytest.approx(exact, abs=1e-10)


def test_quad_adaptive_depth_cap():
    # a discontinuity stalls refinement at the jump
    step = lambda x: np.where(x < math.sqrt(0.5), 0.0, 1.0)
    with pytest.raises(QuadratureNonconvergence):
        quad_adaptive(step, 0.0, 1.0, tol=1e-15, depth_cap=8)


def test_quad_adaptive_rejects_bad_tol():
    with pytest.raises(ValidationError):
        quad_adaptive(np.sin, 0, 1, tol=0.0)


@pytest.mark.parametrize("n", [3, 4, 5, 10, 11, 100, 101])
def test_simpson_weights_integrate_cubics(n):
    span = 1.7
    d = span / (n - 1)
    x = np.linspace(0.0, span, n)
    w = simpson_weights(n, d)
    assert np.sum(w) == pytest.approx(span, abs=1e-13)
    for k in (0, 1, 2):
        got = float(np.dot(w, x**k))
        assert got == pytest.approx(span ** (k + 1) / (k + 1), abs=1e-12)
    got3 = float(np.dot(w, x**3))
    assert got3 == pytest.approx(span**4 / 4, abs=d**4)


def test_simpson_weights_on_sine():
    n = 201
    d = math.pi / (n - 1)
    x = np.linspace(0, math.pi, n)
    got = float(np.dot(simpson_weights(n, d), np.sin(x)))
    assert got == pytest.approx(2.0, abs=1e-9)


def test_cumulative_integral_exact_on_quadratics():
    x = np.linspace(0.0, 2.0, 17)
    got = cumulative_integral(x**2, x[1] - x[0])
    assert np.max(np.abs(got - x**3 / 3)) < 1e-14


def test_cumulative_integral_fourth_order():
    errs = []
    for n in (21, 41, 81):
        x = np.linspace(0.0, 1.0, n)
        got = cumulative_integral(np.exp(x), x[1] - x[0])
        errs.append(np.max(np.abs(got - (np.exp(x) - 1.0))))
    assert errs[0] / errs[1] > 12
    assert errs[1] / errs[2] > 12


def test_cumulative_integral_axis():
    x = np.linspace(0.0, 1.0, 21)
    block = np.stack([np.sin(x), np.cos(x)])
    along_last = cumulative_integral(block, x[1] - x[0], axis=-1)
    assert along_last.shape == block.shape
    assert np.allclose(along_last[0], cumulative_integral(np.sin(x), x[1] - x[0]))
    transposed = cumulative_integral(block.T, x[1] - x[0], axis=0)
    assert np.allclose(transposed, along_last.T)


def test_polygon_signed_area_orientation():
    ccw = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert polygon_signed_area(ccw) == pytest.approx(1.0)
    assert polygon_signed_area(ccw[::-1]) == pytest.approx(-1.0)
