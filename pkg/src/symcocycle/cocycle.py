"""Grid-valued cocycles of area-preserving maps.

For a map f and a primitive one-form alpha, the defect f*alpha - alpha is
exact whenever f preserves areas and has no period obstruction; the
cocycle K(f) is the potential of that defect, a function determined up to
an additive constant.  This module computes K two independent ways:

* ``cocycle_by_path`` integrates f*alpha - alpha from a basepoint along
  axis-aligned two-segment grid paths, with the pullback built from a
  finite-difference jacobian of f.

* ``cocycle_by_action`` uses the Hamiltonian action: for the time-duration
  map of F, the value at x is the line integral of alpha along the orbit
  of x plus the time integral of F along that orbit.

The two routes share no code beyond map evaluation, so their agreement is
a strong end-to-end check and is part of the verification suite.

Values live in GridFunction objects tagged with a normalization: pinned
at a basepoint, compactly supported, or considered modulo constants.
Quotient-by-constants comparisons always go through the oscillation of a
difference; no canonical constant is ever chosen silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .exprlang import as_expr
from .dynamics import (
    ComposedMap,
    FlowMap,
    HamiltonianSpec,
    IdentityMap,
    map_with_jacobian,
)
from .geometry import (
    GridSpec,
    Primitive,
    cumulative_integral,
    simpson_weights,
)

__all__ = [
    "GridFunction",
    "HamHatReport",
    "NonExactForm",
    "Normalization",
    "NotConstantOutsideSupport",
    "action_values",
    "cocycle_by_action",
    "cocycle_by_path",
    "hamiltonian_test",
    "iota_cocycle",
    "normalize_compact",
    "pullback_difference",
]


class NonExactForm(NumericalError):
    """The pullback defect has a detectable period; no single-valued
    potential exists on the region."""


class NotConstantOutsideSupport(NumericalError):
    """A cocycle expected to be constant outside the support oscillates
    there beyond tolerance."""


# ============================================================
# Normalization tags and grid functions
# ============================================================


@dataclass(frozen=True)
class Normalization:
    kind: str
    basepoint: tuple | None = None

    @classmethod
    def pinned(cls, x0):
        return cls("pinned", (float(x0[0]), float(x0[1])))

    @classmethod
    def compact(cls):
        return cls("compact")

    @classmethod
    def mod_constants(cls):
        return cls("mod_constants")


class GridFunction:
    """Real samples on a uniform grid over a window, with interpolation.

    Default evaluation is bilinear; ``evaluate_cubic`` interpolates with a
    four-point Lagrange stencil per axis for fourth-order accuracy where
    composition precision matters.  On the cylinder (window spanning one
    circumference) evaluation wraps q; grids built on the universal cover
    set ``on_cover`` and never wrap.  Coordinates outside the window clamp
    to the edge, which continues boundary values constantly.
    """

    def __init__(self, manifold, window, samples, normalization, on_cover=False):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] < 3 or samples.shape[1] < 3:
            raise ValidationError(
                f"samples must be a matrix with at least 3x3 entries, got "
                f"shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValidationError("samples contain non-finite values")
        self.manifold = manifold
        self.window = window
        self.samples = samples
        self.normalization = normalization
        self.on_cover = bool(on_cover)
        self.n_p, self.n_q = samples.shape
        self.p_nodes = np.linspace(window.p_min, window.p_max, self.n_p)
        self.q_nodes = np.linspace(window.q_min, window.q_max, self.n_q)
        self.dp = self.p_nodes[1] - self.p_nodes[0]
        self.dq = self.q_nodes[1] - self.q_nodes[0]

    # -- bookkeeping ----------------------------------------------

    @property
    def resolution(self):
        return (self.n_p, self.n_q)

    def _wraps_q(self):
        return (
            self.manifold.is_cylinder
            and not self.on_cover
            and abs(self.window.q_span - self.manifold.circumference)
            <= 1e-9 * self.manifold.circumference
        )

    def with_samples(self, samples, normalization=None):
        return GridFunction(
            self.manifold,
            self.window,
            samples,
            normalization or self.normalization,
            self.on_cover,
        )

    def _check_compatible(self, other):
        if (
            self.window != other.window
            or self.samples.shape != other.samples.shape
            or self.manifold != other.manifold
        ):
            raise ValidationError(
                "grid functions must share manifold, window and resolution"
            )

    # -- arithmetic (results are considered modulo constants) -----

    def __neg__(self):
        return self.with_samples(-self.samples, Normalization.mod_constants())

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return self.with_samples(
                self.samples + other.samples, Normalization.mod_constants()
            )
        return self.with_samples(
            self.samples + float(other), Normalization.mod_constants()
        )

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return self.with_samples(
                self.samples - other.samples, Normalization.mod_constants()
            )
        return self.with_samples(
            self.samples - float(other), Normalization.mod_constants()
        )

    def __mul__(self, c):
        return self.with_samples(
            self.samples * float(c), Normalization.mod_constants()
        )

    __rmul__ = __mul__

    # -- summaries ------------------------------------------------

    def oscillation(self):
        return float(np.max(self.samples) - np.min(self.samples))

    def max_abs(self):
        return float(np.max(np.abs(self.samples)))

    def equal_mod_constants(self, other, tol=1e-4):
        """Equality in the quotient by constants: the difference must have
        oscillation below tol."""
        self._check_compatible(other)
        diff = self.samples - other.samples
        return float(np.max(diff) - np.min(diff)) < tol

    def integral(self):
        """Integral over the window by tensor-product composite rules."""
        wp = simpson_weights(self.n_p, self.dp)
        wq = simpson_weights(self.n_q, self.dq)
        return float(wp @ self.samples @ wq)

    # -- evaluation -----------------------------------------------

    def _coords(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self._wraps_q():
            q = self.window.q_min + np.mod(
                q - self.window.q_min, self.manifold.circumference
            )
        x = np.clip((p - self.window.p_min) / self.dp, 0.0, self.n_p - 1.0)
        y = np.clip((q - self.window.q_min) / self.dq, 0.0, self.n_q - 1.0)
        return x, y

    def evaluate(self, p, q):
        """Bilinear interpolation; scalar in, float out."""
        x, y = self._coords(p, q)
        i = np.clip(np.floor(x).astype(int), 0, self.n_p - 2)
        j = np.clip(np.floor(y).astype(int), 0, self.n_q - 2)
        u = x - i
        v = y - j
        s = self.samples
        out = (
            (1 - u) * (1 - v) * s[i, j]
            + u * (1 - v) * s[i + 1, j]
            + (1 - u) * v * s[i, j + 1]
            + u * v * s[i + 1, j + 1]
        )
        if np.ndim(out) == 0:
            return float(out)
        return out

    @staticmethod
    def _lagrange4(s):
        # cubic Lagrange basis at offsets 0, 1, 2, 3
        a = s - 1.0
        b = s - 2.0
        c = s - 3.0
        return (
            -a * b * c / 6.0,
            s * b * c / 2.0,
            -s * a * c / 2.0,
            s * a * b / 6.0,
        )

    def evaluate_cubic(self, p, q):
        """Four-point Lagrange interpolation per axis."""
        if self.n_p < 4 or self.n_q < 4:
            raise ValidationError(
                "cubic interpolation needs at least 4 nodes per axis"
            )
        x, y = self._coords(p, q)
        i0 = np.clip(np.floor(x).astype(int) - 1, 0, self.n_p - 4)
        wx = self._lagrange4(x - i0)
        s = self.samples
        if self._wraps_q():
            # wrap the q stencil over the unique columns (the seam column
            # repeats the first one)
            uniq = self.n_q - 1
            j0 = np.floor(y).astype(int) - 1
            wy = self._lagrange4(y - j0)
            cols = [np.mod(j0 + b, uniq) for b in range(4)]
        else:
            j0 = np.clip(np.floor(y).astype(int) - 1, 0, self.n_q - 4)
            wy = self._lagrange4(y - j0)
            cols = [j0 + b for b in range(4)]
        out = 0.0
        for a in range(4):
            row = i0 + a
            acc = 0.0
            for b in range(4):
                acc = acc + wy[b] * s[row, cols[b]]
            out = out + wx[a] * acc
        if np.ndim(out) == 0:
            return float(out)
        return out

    def compose_with(self, m, cubic=True):
        """Samples of self(m(x)) on the same grid, modulo constants."""
        P, Q = np.meshgrid(self.p_nodes, self.q_nodes, indexing="ij")
        yp, yq = m.apply(P.ravel(), Q.ravel())
        ev = self.evaluate_cubic if cubic else self.evaluate
        vals = ev(yp, yq)
        return self.with_samples(
            np.asarray(vals).reshape(self.samples.shape),
            Normalization.mod_constants(),
        )

    def fd_gradient(self):
        """(dK/dp, dK/dq) arrays by finite differences: fourth-order
        centered stencils two nodes in from the boundary, second-order
        near it."""
        s = self.samples
        gp = np.gradient(s, self.dp, axis=0, edge_order=2)
        gq = np.gradient(s, self.dq, axis=1, edge_order=2)
        gp[2:-2, :] = (
            s[:-4, :] - 8.0 * s[1:-3, :] + 8.0 * s[3:-1, :] - s[4:, :]
        ) / (12.0 * self.dp)
        gq[:, 2:-2] = (
            s[:, :-4] - 8.0 * s[:, 1:-3] + 8.0 * s[:, 3:-1] - s[:, 4:]
        ) / (12.0 * self.dq)
        return gp, gq


# ============================================================
# Pullback defect on a grid
# ============================================================


def _form_components(form):
    if isinstance(form, Primitive):
        return form.a_p, form.a_q
    a_p, a_q = form
    return as_expr(a_p), as_expr(a_q)


def pullback_difference(f, form, grid=None, manifold=None, fd_h=1e-5):
    """Components of f*(form) - form at the grid nodes of the window.

    The pullback uses the finite-difference jacobian of f; all five
    stencil shifts ride through a single map evaluation.  Returns
    (P, Q, theta_p, theta_q).
    """
    manifold = manifold or f.manifold
    grid = grid or GridSpec()
    P, Q = grid.mesh(manifold.window)
    a_p, a_q = _form_components(form)
    fp, fq = a_p.fn, a_q.fn
    jet = map_with_jacobian(f, P, Q, fd_h=fd_h)
    yq = manifold.wrap_q(jet.yq) if manifold.is_cylinder else jet.yq
    ap_f = np.broadcast_to(np.asarray(fp(jet.yp, yq, 0.0), float), P.shape)
    aq_f = np.broadcast_to(np.asarray(fq(jet.yp, yq, 0.0), float), P.shape)
    ap_here = np.broadcast_to(np.asarray(fp(P, Q, 0.0), float), P.shape)
    aq_here = np.broadcast_to(np.asarray(fq(P, Q, 0.0), float), P.shape)
    theta_p = ap_f * jet.dpp + aq_f * jet.dqp - ap_here
    theta_q = ap_f * jet.dpq + aq_f * jet.dqq - aq_here
    return P, Q, theta_p, theta_q


def _integrate_exact_defect(
    manifold, window, theta_p, theta_q, basepoint, tol, on_cover=False
):
    """Potential of an exact grid one-form, pinned at the basepoint.

    Integrates along both axis-aligned two-segment path families and
    cross-checks them; on the cylinder additionally checks the loop
    periods row by row.  Raises NonExactForm past 100*tol.
    """
    n_p, n_q = theta_p.shape
    dp = window.p_span / (n_p - 1)
    dq = window.q_span / (n_q - 1)

    wraps = (
        manifold.is_cylinder
        and not on_cover
        and abs(window.q_span - manifold.circumference)
        <= 1e-9 * manifold.circumference
    )
    if wraps:
        # nonzero loop periods mean no single-valued potential exists
        wq = simpson_weights(n_q, dq)
        periods = theta_q @ wq
        worst = float(np.max(np.abs(periods)))
        if worst > 100.0 * tol:
            raise NonExactForm(
                f"pullback defect has loop period {worst:.3e} "
                f"(threshold {100.0 * tol:.1e}); the map is outside the "
                "kernel of the period cocycle on this window"
            )

    ip = cumulative_integral(theta_p, dp, axis=0)
    iq = cumulative_integral(theta_q, dq, axis=1)

    bp, bq = float(basepoint[0]), float(basepoint[1])
    if not window.contains(bp, bq, slack=1e-12):
        raise ValidationError(f"basepoint ({bp}, {bq}) is outside the window")
    i0 = int(round((bp - window.p_min) / dp))
    j0 = int(round((bq - window.q_min) / dq))

    # route 1: q-leg along the basepoint row, then the p-leg
    k_qfirst = (iq[i0, :] - iq[i0, j0])[None, :] + (ip - ip[i0, :][None, :])
    # route 2: p-leg along the basepoint column, then the q-leg
    k_pfirst = (ip[:, j0] - ip[i0, j0])[:, None] + (iq - iq[:, j0][:, None])

    disagreement = float(np.max(np.abs(k_qfirst - k_pfirst)))
    if disagreement > 100.0 * tol:
        raise NonExactForm(
            f"axis-aligned paths to the same point disagree by "
            f"{disagreement:.3e} (threshold {100.0 * tol:.1e}); "
            "the defect form is not exact on the window"
        )

    samples = 0.5 * (k_qfirst + k_pfirst)
    out = GridFunction(
        manifold,
        window,
        samples,
        Normalization.pinned((bp, bq)),
        on_cover=on_cover,
    )
    # pin at the true basepoint, not just its nearest node
    off = out.evaluate(bp, bq)
    if off != 0.0:
        out = GridFunction(
            manifold,
            window,
            samples - off,
            Normalization.pinned((bp, bq)),
            on_cover=on_cover,
        )
    return out


def cocycle_by_path(f, alpha, basepoint=None, grid=None, fd_h=1e-5, tol=1e-6):
    """Cocycle of a map by path integration of its pullback defect.

    The result is pinned to zero at the basepoint (window center by
    default).  Raises NonExactForm when path cross-checks or cylinder
    loop periods detect an obstruction beyond 100*tol.
    """
    manifold = f.manifold
    w = manifold.window
    if basepoint is None:
        basepoint = (0.5 * (w.p_min + w.p_max), 0.5 * (w.q_min + w.q_max))
    P, Q, theta_p, theta_q = pullback_difference(f, alpha, grid, manifold, fd_h)
    return _integrate_exact_defect(
        manifold, w, theta_p, theta_q, basepoint, tol
    )


def iota_cocycle(a, f, basepoint=None, grid=None, fd_h=1e-5, tol=1e-6):
    """Generalized cocycle of a closed (not necessarily primitive)
    one-form: the pinned potential of f*a - a."""
    return cocycle_by_path(f, _form_components(a), basepoint, grid, fd_h, tol)


# ============================================================
# The action route
# ============================================================


def _flow_factors(m):
    """Flatten a map into the FlowMaps of its generating isotopy."""
    if isinstance(m, FlowMap):
        return [m]
    if isinstance(m, IdentityMap):
        return []
    if isinstance(m, ComposedMap):
        out = []
        for f in m.factors:
            out.extend(_flow_factors(f))
        return out
    raise ValidationError(
        f"the action route needs generating Hamiltonian data; {type(m).__name__} "
        "is not a flow, the identity, or a composition of those"
    )


def _action_stream(flow, fap, faq, p0, q0):
    """March one flow, accumulating its action; returns (values, end_p, end_q).

    Per start point x the value is the line integral of the form along
    the orbit of x plus the time integral of F(orbit(t), t); both use
    composite Simpson weights on the integrator's own time nodes.
    """
    manifold = flow.manifold
    n = flow.n_steps()
    if n < 2:
        raise ValidationError(
            "action quadrature needs at least two time steps; decrease the "
            "integrator step"
        )
    duration = flow.spec.duration
    h = duration / n
    weights = simpson_weights(n + 1, h)
    ff = flow.spec.F.fn
    xp, xq = flow._xp, flow._xq
    wrap = manifold.wrap_q if manifold.is_cylinder else (lambda q: q)
    acc = np.zeros(np.shape(p0))

    def on_node(k, t, pv, qv):
        qe = wrap(qv)
        pdot = xp(pv, qe, t)
        qdot = xq(pv, qe, t)
        line = fap(pv, qe, 0.0) * pdot + faq(pv, qe, 0.0) * qdot
        # F itself is evaluated at the unwrapped representative so that
        # chart Hamiltonians with periodic fields but multivalued F (the
        # translation family) accumulate their honest lifted action
        ham = ff(pv, qv, t)
        nonlocal acc
        acc = acc + weights[k] * (line + ham)

    end_p, end_q = flow._march(
        np.asarray(p0, dtype=float).copy(),
        np.asarray(q0, dtype=float).copy(),
        0.0,
        duration,
        on_node=on_node,
    )
    return acc, end_p, end_q


def action_values(flow, alpha, ps, qs):
    """Action-route cocycle values at arbitrary points.

    ``flow`` may be a FlowMap or a composition of FlowMaps; factors
    accumulate sequentially, each along the orbits started where the
    previous factor ended.  Values are defined modulo one constant.
    """
    a_p, a_q = _form_components(alpha)
    fap, faq = a_p.fn, a_q.fn
    p = np.asarray(ps, dtype=float).copy()
    q = np.asarray(qs, dtype=float).copy()
    total = np.zeros(p.shape)
    for factor in _flow_factors(flow):
        inc, p, q = _action_stream(factor, fap, faq, p, q)
        total = total + inc
    return total


def cocycle_by_action(flow, alpha, grid=None, manifold=None, scheme="rk4",
                      step=1e-3):
    """Cocycle of a Hamiltonian flow map from the action integral.

    Accepts a FlowMap, a composition of FlowMaps, or a HamiltonianSpec
    (then ``manifold`` is required).  Per grid node x the value is

        integral of alpha along the orbit of x
        + integral of F(orbit(t), t) dt over the flow duration,

    accumulated in one streaming march over the whole grid (and over the
    factors in turn for compositions).  The result is a GridFunction
    modulo constants.
    """
    if isinstance(flow, HamiltonianSpec):
        if manifold is None:
            raise ValidationError(
                "cocycle_by_action needs a manifold when given a bare "
                "Hamiltonian specification"
            )
        flow = FlowMap(flow, manifold, scheme=scheme, step=step)
    manifold = flow.manifold
    grid = grid or GridSpec()
    P, Q = grid.mesh(manifold.window)
    acc = action_values(flow, alpha, P.ravel(), Q.ravel())
    return GridFunction(
        manifold,
        manifold.window,
        acc.reshape(P.shape),
        Normalization.mod_constants(),
    )


# ============================================================
# Normalizations and membership tests
# ============================================================


def normalize_compact(K, support_window, tol=1e-4):
    """Subtract the constant that K takes outside the support window.

    Requires K to be constant (within tol of oscillation) on the sampled
    part of its window outside ``support_window``; the classic failure is
    a twist whose profile integral misses one full circumference, which
    takes two different constants on the two sides.
    """
    P, Q = np.meshgrid(K.p_nodes, K.q_nodes, indexing="ij")
    outside = ~(
        (P >= support_window.p_min)
        & (P <= support_window.p_max)
        & (Q >= support_window.q_min)
        & (Q <= support_window.q_max)
    )
    if not outside.any():
        raise ValidationError(
            "the support window covers the whole grid; nothing to normalize "
            "against"
        )
    vals = K.samples[outside]
    osc = float(np.max(vals) - np.min(vals))
    if osc > tol:
        raise NotConstantOutsideSupport(
            f"cocycle oscillates by {osc:.3e} outside the claimed support "
            f"(tolerance {tol:.1e}); no compactly supported representative "
            "exists"
        )
    level = float(np.mean(vals))
    return K.with_samples(K.samples - level, Normalization.compact())


@dataclass(frozen=True)
class HamHatReport:
    """Outcome of the exactness (period) test.

    ``in_ham_hat`` holds when every loop period of f*alpha - alpha
    vanishes within tolerance.  Isotopy of f to the identity is not
    checked and cannot be from samples; this is the exactness criterion
    alone.
    """

    in_ham_hat: bool
    period: float
    tol: float


def hamiltonian_test(f, alpha, tol=1e-6, p0=None, n_loop=1024, fd_h=1e-5):
    """Loop period of f*alpha - alpha around the cylinder's core circle.

    On the plane there are no loops and the answer is always yes with
    period zero.
    """
    manifold = f.manifold
    if not manifold.is_cylinder:
        return HamHatReport(True, 0.0, tol)
    w = manifold.window
    circ = manifold.circumference
    if p0 is None:
        p0 = 0.5 * (w.p_min + w.p_max)
    qs = w.q_min + circ * np.arange(n_loop) / n_loop
    ps = np.full_like(qs, float(p0))
    a_p, a_q = _form_components(alpha)
    jet = map_with_jacobian(f, ps, qs, fd_h=fd_h)
    yq = manifold.wrap_q(jet.yq)
    ap_f = np.broadcast_to(np.asarray(a_p.fn(jet.yp, yq, 0.0), float), qs.shape)
    aq_f = np.broadcast_to(np.asarray(a_q.fn(jet.yp, yq, 0.0), float), qs.shape)
    aq_here = np.broadcast_to(np.asarray(a_q.fn(ps, qs, 0.0), float), qs.shape)
    theta_q = ap_f * jet.dpq + aq_f * jet.dqq - aq_here
    # trapezoid rule on a periodic integrand: just the mean times the length
    period = float(np.mean(theta_q) * circ)
    return HamHatReport(abs(period) < tol, period, tol)
