"""Chart models, primitive one-forms and quadrature.

Two manifold models are supported, both with the area form dp^dq on a
global (p, q) chart: the plane, and the open cylinder where q lives modulo
a circumference (default 2*pi).  A rectangular window marks the compact
region of computational interest; on the cylinder the window must span
exactly one circumference in q so that grids tile the circle.

A primitive is a one-form a_p*dp + a_q*dq whose exterior derivative is the
area form.  Three built-ins are provided (``p_dq``, ``minus_q_dp``,
``symmetric``) plus custom pairs of expressions.  Quadrature is adaptive
Gauss-Legendre for line and area integrals, plus fixed-node composite rules
used by the grid-based code elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonconvergenceError, ValidationError
from .exprlang import Expr, as_expr

__all__ = [
    "GridSpec",
    "ManifoldModel",
    "PathPolyline",
    "Primitive",
    "QuadratureNonconvergence",
    "Window",
    "WrongManifold",
    "cumulative_integral",
    "cylinder",
    "integrate_area",
    "integrate_oneform",
    "period_over_core_loop",
    "plane",
    "polygon_signed_area",
    "quad_adaptive",
    "simpson_weights",
]

TWO_PI = 2.0 * math.pi


class QuadratureNonconvergence(NonconvergenceError):
    """Adaptive refinement hit its depth cap without meeting the tolerance."""


class WrongManifold(ValidationError):
    """An operation that only makes sense on one manifold model was called
    on the other."""


# ============================================================
# Windows and grids
# ============================================================


@dataclass(frozen=True)
class Window:
    """Closed rectangle [p_min, p_max] x [q_min, q_max] in the chart."""

    p_min: float
    p_max: float
    q_min: float
    q_max: float

    def __post_init__(self):
        vals = (self.p_min, self.p_max, self.q_min, self.q_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"window bounds must be finite, got {vals}")
        if not (self.p_min < self.p_max and self.q_min < self.q_max):
            raise ValidationError(
                f"window must have positive area, got "
                f"[{self.p_min}, {self.p_max}] x [{self.q_min}, {self.q_max}]"
            )

    @property
    def p_span(self):
        return self.p_max - self.p_min

    @property
    def q_span(self):
        return self.q_max - self.q_min

    @property
    def area(self):
        return self.p_span * self.q_span

    def contains(self, p, q, slack=0.0):
        return (
            self.p_min - slack <= p <= self.p_max + slack
            and self.q_min - slack <= q <= self.q_max + slack
        )

    def contains_window(self, other):
        return (
            self.p_min <= other.p_min
            and other.p_max <= self.p_max
            and self.q_min <= other.q_min
            and other.q_max <= self.q_max
        )

    def shrink(self, margin_p, margin_q=None):
        """Inset copy of the window; margins must leave positive area."""
        if margin_q is None:
            margin_q = margin_p
        return Window(
            self.p_min + margin_p,
            self.p_max - margin_p,
            self.q_min + margin_q,
            self.q_max - margin_q,
        )


@dataclass(frozen=True)
class GridSpec:
    """Uniform node counts for sampling a window, endpoints included."""

    n_p: int = 101
    n_q: int = 101

    def __post_init__(self):
        if self.n_p < 3 or self.n_q < 3:
            raise ValidationError(
                f"grids need at least 3 nodes per axis, got {self.n_p} x {self.n_q}"
            )

    def p_nodes(self, window):
        return np.linspace(window.p_min, window.p_max, self.n_p)

    def q_nodes(self, window):
        return np.linspace(window.q_min, window.q_max, self.n_q)

    def mesh(self, window):
        """(P, Q) arrays of shape (n_p, n_q); p varies along the first axis."""
        return np.meshgrid(
            self.p_nodes(window), self.q_nodes(window), indexing="ij"
        )


# ============================================================
# Manifold models
# ============================================================


@dataclass(frozen=True)
class ManifoldModel:
    """The plane or the open cylinder, with its window of interest.

    On the cylinder the window is required to span exactly one
    circumference in q, so that grid nodes cover the circle once with the
    two edge columns identified.
    """

    kind: str
    window: Window
    circumference: float = TWO_PI

    def __post_init__(self):
        if self.kind not in ("plane", "cylinder"):
            raise ValidationError(
                f"manifold kind must be 'plane' or 'cylinder', got {self.kind!r}"
            )
        if self.kind == "cylinder":
            if not (self.circumference > 0 and math.isfinite(self.circumference)):
                raise ValidationError(
                    f"circumference must be positive, got {self.circumference}"
                )
            if abs(self.window.q_span - self.circumference) > 1e-9 * self.circumference:
                raise ValidationError(
                    "cylinder window must span exactly one circumference in q: "
                    f"q span {self.window.q_span} vs circumference "
                    f"{self.circumference}"
                )

    @property
    def is_cylinder(self):
        return self.kind == "cylinder"

    def wrap_q(self, q):
        """Representative of q in [q_min, q_min + circumference)."""
        if not self.is_cylinder:
            return q
        out = self.window.q_min + np.mod(
            np.asarray(q, dtype=float) - self.window.q_min, self.circumference
        )
        if np.ndim(out) == 0:
            return float(out)
        return out

    def wrap_delta(self, dq):
        """Smallest representative of a q-difference, in (-circ/2, circ/2]."""
        if not self.is_cylinder:
            return dq
        c = self.circumference
        out = np.asarray(dq, dtype=float) - c * np.floor(
            np.asarray(dq, dtype=float) / c + 0.5
        )
        # floor(x + 1/2) maps the half-open boundary to -c/2; flip it
        out = np.where(out <= -0.5 * c, out + c, out)
        if np.ndim(out) == 0:
            return float(out)
        return out


def plane(window):
    return ManifoldModel("plane", window)


def cylinder(window, circumference=TWO_PI):
    return ManifoldModel("cylinder", window, circumference)


# ============================================================
# Primitive one-forms
# ============================================================


@dataclass(frozen=True)
class Primitive:
    """One-form a_p*dp + a_q*dq with d(alpha) equal to the area form."""

    name: str
    a_p: Expr
    a_q: Expr

    @classmethod
    def p_dq(cls):
        return cls("p_dq", as_expr(0.0), as_expr("p"))

    @classmethod
    def minus_q_dp(cls):
        return cls("minus_q_dp", as_expr("-q"), as_expr(0.0))

    @classmethod
    def symmetric(cls):
        return cls("symmetric", as_expr("-q/2"), as_expr("p/2"))

    @classmethod
    def custom(cls, a_p, a_q):
        return cls("custom", as_expr(a_p), as_expr(a_q))

    @classmethod
    def named(cls, name):
        try:
            return {
                "p_dq": cls.p_dq,
                "minus_q_dp": cls.minus_q_dp,
                "symmetric": cls.symmetric,
            }[name]()
        except KeyError:
            raise ValidationError(
                f"unknown primitive {name!r}; built-ins are p_dq, "
                f"minus_q_dp, symmetric"
            ) from None

    def __post_init__(self):
        for comp in (self.a_p, self.a_q):
            if "t" in comp.free_vars():
                raise ValidationError(
                    "primitive components must not depend on time"
                )

    def validate(self, manifold, tol=1e-8, n_samples=13):
        """Check d(alpha) = dp^dq on the window and, on the cylinder,
        q-periodicity of both components.  Returns self."""
        w = manifold.window
        ps = np.linspace(w.p_min, w.p_max, n_samples)
        qs = np.linspace(w.q_min, w.q_max, n_samples)
        P, Q = np.meshgrid(ps, qs, indexing="ij")
        curl = self.a_q.diff("p")(P, Q, 0.0) - self.a_p.diff("q")(P, Q, 0.0)
        dev = float(np.max(np.abs(np.asarray(curl) - 1.0)))
        if dev > tol:
            i = int(np.argmax(np.abs(np.asarray(curl) - 1.0)))
            bad = (float(P.ravel()[i]), float(Q.ravel()[i]))
            raise ValidationError(
                f"d(alpha) deviates from the area form by {dev:.3e} "
                f"(tolerance {tol:.1e}) near {bad}"
            )
        if manifold.is_cylinder:
            c = manifold.circumference
            for label, comp in (("a_p", self.a_p), ("a_q", self.a_q)):
                here = np.asarray(comp(P, Q, 0.0), dtype=float)
                there = np.asarray(comp(P, Q + c, 0.0), dtype=float)
                gap = float(np.max(np.abs(here - there)))
                if gap > 1e-9 * (1.0 + float(np.max(np.abs(here)))):
                    raise ValidationError(
                        f"primitive {self.name!r} is not periodic in q on the "
                        f"cylinder: component {label} jumps by {gap:.3e} "
                        f"across one circumference"
                    )
        return self

    def norm_sup(self, manifold, n_samples=201):
        """Supremum of the euclidean component norm over the window.

        This is a report about the window only; nothing is claimed about
        the behaviour outside it.
        """
        w = manifold.window
        ps = np.linspace(w.p_min, w.p_max, n_samples)
        qs = np.linspace(w.q_min, w.q_max, n_samples)
        P, Q = np.meshgrid(ps, qs, indexing="ij")
        ap = np.asarray(self.a_p(P, Q, 0.0), dtype=float)
        aq = np.asarray(self.a_q(P, Q, 0.0), dtype=float)
        return float(np.max(np.hypot(ap, aq)))


# ============================================================
# Paths
# ============================================================


@dataclass(frozen=True)
class PathPolyline:
    """Piecewise-linear chart path.

    ``windings[k]`` adds that many extra full turns in q to segment k on
    the cylinder: the segment from (p0, q0) to (p1, q1) traverses
    Delta q = (q1 - q0) + windings[k] * circumference in the lift.
    Trajectory output arrives with q already unwrapped, so its windings
    are all zero.
    """

    vertices: tuple
    windings: tuple = field(default=None)

    def __post_init__(self):
        verts = tuple((float(p), float(q)) for p, q in self.vertices)
        if len(verts) < 2:
            raise ValidationError("a path needs at least two vertices")
        for p, q in verts:
            if not (math.isfinite(p) and math.isfinite(q)):
                raise ValidationError(f"non-finite path vertex ({p}, {q})")
        for a, b in zip(verts, verts[1:]):
            if a == b:
                raise ValidationError(f"repeated consecutive path vertex {a}")
        w = self.windings
        if w is None:
            w = (0,) * (len(verts) - 1)
        else:
            w = tuple(int(x) for x in w)
            if len(w) != len(verts) - 1:
                raise ValidationError(
                    f"expected {len(verts) - 1} winding hints, got {len(w)}"
                )
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "windings", w)

    @property
    def n_segments(self):
        return len(self.vertices) - 1

    def reversed(self):
        return PathPolyline(
            tuple(reversed(self.vertices)),
            tuple(-w for w in reversed(self.windings)),
        )

    def is_closed(self, manifold=None):
        a = self.vertices[0]
        b = self.vertices[-1]
        if manifold is not None and manifold.is_cylinder:
            return a[0] == b[0] and abs(manifold.wrap_delta(b[1] - a[1])) < 1e-12
        return a == b


def polygon_signed_area(vertices):
    """Shoelace area of a closed polygon (last vertex joins the first)."""
    pts = np.asarray(vertices, dtype=float)
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ============================================================
# Adaptive Gauss-Legendre quadrature
# ============================================================

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(10)


def _gauss_panel(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid + half * _GAUSS_X
    # constant integrands may come back as scalars; broadcast before dotting
    vals = np.broadcast_to(np.asarray(f(pts), dtype=float), pts.shape)
    return half * float(np.dot(_GAUSS_W, vals))


def quad_adaptive(f, a, b, tol=1e-10, depth_cap=40, noise_floor=0.0):
    """Integrate a vectorized callable over [a, b] by adaptive bisection.

    Each panel is compared against its two halves with 10-point
    Gauss-Legendre; panels that disagree by more than their share of the
    tolerance are split.  Raises QuadratureNonconvergence past the depth
    cap (about 40 doublings, far below attainable resolution for any
    integrand this package produces).

    ``noise_floor`` is the irreducible per-unit-length uncertainty of the
    integrand itself.  Iterated integrals use it so the outer pass stops
    refining once panel residuals drop to the noise carried by the inner
    pass; such panels contribute at most noise_floor * (b - a) in total.
    """
    if not tol > 0:
        raise ValidationError(f"tolerance must be positive, got {tol}")
    if a == b:
        return 0.0
    whole = _gauss_panel(f, a, b)
    return _refine(f, a, b, whole, tol, noise_floor, depth_cap)


def _refine(f, a, b, whole, tol, noise_floor, depth_left):
    mid = 0.5 * (a + b)
    left = _gauss_panel(f, a, mid)
    right = _gauss_panel(f, mid, b)
    better = left + right
    if abs(better - whole) <= max(tol, noise_floor * (b - a)):
        return better
    if depth_left <= 0:
        raise QuadratureNonconvergence(
            f"adaptive quadrature failed on [{a}, {b}]: "
            f"residual {abs(better - whole):.3e} exceeds {tol:.3e}"
        )
    return _refine(f, a, mid, left, 0.5 * tol, noise_floor, depth_left - 1) + _refine(
        f, mid, b, right, 0.5 * tol, noise_floor, depth_left - 1
    )


def _component_pair(alpha):
    if isinstance(alpha, Primitive):
        return alpha.a_p, alpha.a_q
    try:
        a_p, a_q = alpha
    except (TypeError, ValueError):
        raise ValidationError(
            "a one-form must be a Primitive or an (a_p, a_q) pair"
        ) from None
    return as_expr(a_p), as_expr(a_q)


def integrate_oneform(alpha, path, tol=1e-10, manifold=None):
    """Line integral of a one-form along a polyline path.

    ``alpha`` is a Primitive or an (a_p, a_q) expression pair.  On a
    cylinder the path's per-segment winding hints select the lift, and
    components are evaluated at wrapped q.  Orientation follows vertex
    order; the error target tol is split evenly over segments.
    """
    a_p, a_q = _component_pair(alpha)
    fp, fq = a_p.fn, a_q.fn
    circ = manifold.circumference if (manifold and manifold.is_cylinder) else None
    seg_tol = tol / path.n_segments
    total = 0.0
    for k in range(path.n_segments):
        (p0, q0) = path.vertices[k]
        (p1, q1) = path.vertices[k + 1]
        dp = p1 - p0
        dq = q1 - q0
        if circ is not None:
            dq += path.windings[k] * circ

        def seg(s, p0=p0, q0=q0, dp=dp, dq=dq):
            p = p0 + dp * s
            q = q0 + dq * s
            if circ is not None:
                q = manifold.wrap_q(q)
            return fp(p, q, 0.0) * dp + fq(p, q, 0.0) * dq

        if dp == 0.0 and dq == 0.0:
            continue
        total += quad_adaptive(seg, 0.0, 1.0, seg_tol)
    return total


def integrate_area(g, window, tol=1e-10):
    """Iterated adaptive quadrature of a scalar field over the window."""
    if isinstance(g, Expr):
        fn = g.fn
    elif callable(g):
        fn = lambda p, q, t=0.0: g(p, q)
    else:
        fn = as_expr(g).fn
    inner_tol = tol / (8.0 * window.p_span)

    def row(pvals):
        pvals = np.atleast_1d(np.asarray(pvals, dtype=float))
        out = np.empty(pvals.shape)
        for i, pv in enumerate(pvals):
            out[i] = quad_adaptive(
                lambda qs: fn(np.full_like(np.asarray(qs, dtype=float), pv),
                              np.asarray(qs, dtype=float), 0.0),
                window.q_min,
                window.q_max,
                inner_tol,
            )
        return out

    return quad_adaptive(
        row, window.p_min, window.p_max, 0.5 * tol, noise_floor=2.0 * inner_tol
    )


def period_over_core_loop(manifold, theta, p0, tol=1e-10):
    """Integral of a one-form around the core loop {p = p0} of the cylinder.

    Only the dq component contributes since dp vanishes along the loop.
    Nonzero periods of a closed form certify that it is not exact.
    """
    if not manifold.is_cylinder:
        raise WrongManifold("core loops only exist on the cylinder")
    _, a_q = _component_pair(theta)
    fq = a_q.fn
    q0 = manifold.window.q_min

    def loop(qs):
        qs = np.asarray(qs, dtype=float)
        return fq(np.full_like(qs, float(p0)), qs, 0.0)

    return quad_adaptive(loop, q0, q0 + manifold.circumference, tol)


# ============================================================
# Fixed-node composite rules (used by the grid code)
# ============================================================


def simpson_weights(n, spacing):
    """Weights w so that dot(w, y) integrates n uniform samples.

    Composite Simpson when the interval count is even; otherwise Simpson
    up to the third-to-last node plus a one-sided three-point rule for the
    final interval.  Fourth-order accurate either way.
    """
    if n < 3:
        raise ValidationError(f"composite rule needs at least 3 nodes, got {n}")
    d = float(spacing)
    w = np.zeros(n)
    intervals = n - 1
    if intervals % 2 == 0:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-2:2] = 2.0
        return w * (d / 3.0)
    # odd interval count: Simpson over the first n-1 nodes, then patch the
    # last interval with the right-edge interpolatory rule
    w[0] = w[n - 2] = 1.0
    w[1 : n - 2 : 2] = 4.0
    w[2 : n - 3 : 2] = 2.0
    w *= d / 3.0
    w[n - 3] += -d / 12.0
    w[n - 2] += 8.0 * d / 12.0
    w[n - 1] += 5.0 * d / 12.0
    return w


def cumulative_integral(y, spacing, axis=-1):
    """Running integral of uniform samples, fourth-order accurate.

    Returns an array of the same shape whose first entry along ``axis`` is
    zero.  Each interior interval increment averages a forward and a
    backward three-point interpolatory rule, which cancels the leading
    error term; the end intervals use whichever rule fits.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[axis] < 3:
        raise ValidationError("cumulative integration needs at least 3 samples")
    y = np.moveaxis(y, axis, 0)
    d = float(spacing)
    fwd = d * (5.0 * y[:-2] + 8.0 * y[1:-1] - y[2:]) / 12.0
    bwd = d * (-y[:-2] + 8.0 * y[1:-1] + 5.0 * y[2:]) / 12.0
    inc = np.empty_like(y[:-1])
    inc[0] = fwd[0]
    inc[-1] = bwd[-1]
    inc[1:-1] = 0.5 * (fwd[1:] + bwd[:-1])
    out = np.zeros_like(y)
    np.cumsum(inc, axis=0, out=out[1:])
    return np.moveaxis(out, 0, axis)
