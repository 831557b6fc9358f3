"""Static laboratory for the near-splash integrals.

Coordinates are normalized so that the two closest boundary points sit at
(0, 0) and (0, m).  Every integral has the form

    int_{-R}^{R} int_{lo(h)}^{hi(h)} K(h, v) dv dh,
    K(h, v) = h/(h^2+v^2)^(1+a) - h/(h^2+(v-m)^2)^(1+a),

with ``lo``/``hi`` built from fold graphs.  Two independent routes exist:

* ``tensor`` (production): graded Gauss-Legendre panels in v around the
  singular heights 0 and m at scale |h|, dyadic Gauss-Legendre panels in h
  toward h = 0 with panel bisection, and tanh-sinh on the innermost panel;
* ``closed``: the v-integral in closed form through the regularized
  incomplete beta function, then QUADPACK in h.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .errors import DomainError, GeometryError, ParameterError, PrecisionError
from .velocity import QuadratureSpec

K_CAP = 8


class Estimate(NamedTuple):
    value: float
    error: float


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def _kernel_direct(h, v, m, alpha):
    return h / (h * h + v * v) ** (1.0 + alpha) - h / (h * h + (v - m) ** 2) ** (1.0 + alpha)


def _kernel_log(h, v, m, alpha):
    return _kernel_offsets(h, v, v - m, m, alpha)


def _kernel_offsets(h, d0, d1, m, alpha):
    # d0 = v, d1 = v - m, each supplied without cancellation
    # K = -h r1^-(1+a) expm1((1+a) log(r1/r2)),  r1 - r2 = m (d0 + d1)
    r1 = h * h + d0 * d0
    r2 = h * h + d1 * d1
    x = m * (d0 + d1) / r2
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(np.abs(x) < 0.5, np.log1p(x), np.log(r1) - np.log(r2))
    return -h * np.exp(-(1.0 + alpha) * np.log(r1)) * np.expm1((1.0 + alpha) * lr)


def kernel_diff(h, v, m: float, alpha: float, *, route: str = "log"):
    """h/(h^2+v^2)^(1+a) - h/(h^2+(v-m)^2)^(1+a); ``route`` is "log" (cancellation-free) or "direct"."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((h == 0.0) & ((v == 0.0) | (v == m))):
        raise DomainError("kernel_diff is singular at (0, 0) and (0, m)")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _kernel_direct(h, v, m, alpha) if route == "direct" else _kernel_log(h, v, m, alpha)
    out = np.where(h == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def pointwise_bounds(h, v, m: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Ratios |K| / bound for the two mean-value bounds 3m/|h|^(2+2a) and, where V >= |h|, 6m/(|h|^(1+2a) V)."""
    h = np.abs(np.asarray(h, dtype=float))
    v = np.asarray(v, dtype=float)
    k = np.abs(_kernel_log(h, v, m, alpha))
    r1 = k / (3.0 * m / h ** (2.0 + 2.0 * alpha))
    V = np.maximum(np.abs(v), np.abs(v - m))
    r2 = np.where(V >= h, k / (6.0 * m / (h ** (1.0 + 2.0 * alpha) * V)), 0.0)
    return r1, r2


# ---------------------------------------------------------------------------
# fold graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphFold:
    """f(h) = c + s h + q h^2 + A |h|_side^power, side in {"both", "right", "left"}."""

    c: float
    s: float = 0.0
    A: float = 0.0
    power: float = 1.5
    q: float = 0.0
    side: str = "both"

    def __post_init__(self) -> None:
        if self.side not in ("both", "right", "left"):
            raise ParameterError("side must be 'both', 'right' or 'left'")
        if self.A != 0.0 and self.power <= 1.0:
            raise ParameterError("power must exceed 1 so that f'(0) = s")

    def __call__(self, h):
        return self.c + self.offset(h)

    def offset(self, h):
        """f(h) - f(0), free of the rounding in c + (small)."""
        h = np.asarray(h, dtype=float)
        if self.side == "both":
            base = np.abs(h)
        elif self.side == "right":
            base = np.maximum(h, 0.0)
        else:
            base = np.maximum(-h, 0.0)
        return self.s * h + self.q * h * h + self.A * base ** self.power

    @property
    def slope(self) -> float:
        return self.s

    def linear(self, h):
        return self.c + self.s * np.asarray(h, dtype=float)

    def mirrored(self) -> "GraphFold":
        side = {"both": "both", "right": "left", "left": "right"}[self.side]
        return GraphFold(self.c, -self.s, self.A, self.power, self.q, side)

    def breakpoints(self) -> list[float]:
        return [0.0]

    @classmethod
    def power_profile(cls, a: float, A: float, gamma: float, *, slope: float = 0.0, side: str = "both") -> "GraphFold":
        """a + s h + A |h|^(1+gamma): the sharp C^{1,gamma} shape."""
        return cls(a, slope, A, 1.0 + gamma, 0.0, side)

    @classmethod
    def quadratic(cls, a: float, q: float, *, slope: float = 0.0) -> "GraphFold":
        return cls(a, slope, 0.0, 2.0, q, "both")


@dataclass(frozen=True)
class FoldConfiguration:
    R: float
    folds: tuple[GraphFold, ...]
    m: float
    alpha: float
    gamma: float
    bottom_inside: bool = False
    k_cap: int = K_CAP
    assert_small_slopes: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "folds", tuple(self.folds))
        if self.R <= 0.0 or self.m < 0.0:
            raise ParameterError("need R > 0 and m >= 0")
        if not (0.0 < self.alpha < 1.0) or not (0.0 < self.gamma <= 1.0):
            raise ParameterError("alpha must lie in (0, 1) and gamma in (0, 1]")
        if len(self.folds) > self.k_cap:
            raise ParameterError(f"{len(self.folds)} folds exceed the cap {self.k_cap}")
        c = [f.c for f in self.folds]
        if any(b <= a for a, b in zip(c, c[1:])):
            raise GeometryError("folds must be ordered by f_i(0)")
        hs = np.linspace(-self.R, self.R, 2001)
        vals = [np.asarray(f(hs)) for f in self.folds]
        for i, (lo, hi) in enumerate(zip(vals, vals[1:])):
            if np.any(hi <= lo):
                raise GeometryError(f"folds {i} and {i + 1} intersect on [-R, R]")
        if self.assert_small_slopes and any(abs(f.slope) > 0.5 for f in self.folds):
            raise ParameterError("fold slopes exceed 1/2 in the asserted regime")

    def a_values(self) -> list[float]:
        out = []
        for f in self.folds:
            if f.c < 0.0:
                out.append(-f.c)
            elif f.c > self.m:
                out.append(f.c - self.m)
            else:
                out.append(0.0)
        return out

    def clipped(self, i: int) -> Callable:
        """g_i = sgn(f_i) min(|f_i|, R), with g_0 = -R and g_{k+1} = R."""
        k = len(self.folds)
        R = self.R
        if i == 0:
            return lambda h: np.full_like(np.asarray(h, dtype=float), -R)
        if i == k + 1:
            return lambda h: np.full_like(np.asarray(h, dtype=float), R)
        f = self.folds[i - 1]
        return lambda h: np.clip(f(h), -R, R)

    def kinks(self) -> list[float]:
        """Points in (-R, R) where some fold crosses the clipping levels +-R, plus fold breakpoints."""
        pts = {0.0}
        hs = np.linspace(-self.R, self.R, 4001)
        for f in self.folds:
            pts.update(b for b in f.breakpoints() if -self.R < b < self.R)
            for level in (-self.R, self.R):
                d = np.asarray(f(hs)) - level
                for j in np.flatnonzero(d[:-1] * d[1:] < 0.0):
                    pts.add(brentq(lambda h: float(f(h)) - level, hs[j], hs[j + 1], xtol=1e-15))
        return sorted(pts)

    def mirrored(self) -> "FoldConfiguration":
        return FoldConfiguration(self.R, tuple(f.mirrored() for f in self.folds), self.m, self.alpha, self.gamma,
                                 self.bottom_inside, self.k_cap, self.assert_small_slopes)


# ---------------------------------------------------------------------------
# tensor-product route
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _tanh_sinh(level: int):
    step = 2.0 ** (-level)
    t = np.arange(1, int(4.0 / step) + 1) * step
    t = np.concatenate([-t[::-1], [0.0], t])
    u = 0.5 * math.pi * np.sinh(t)
    x = np.tanh(u)
    w = step * 0.5 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    # distance to the left end, 1 + tanh(u), without cancellation
    with np.errstate(over="ignore"):
        left = 2.0 / (1.0 + np.exp(-2.0 * u))
    keep = (left > 0.0) & (w > 0.0) & (x < 1.0)
    return left[keep], w[keep]


def _inner_breakpoints(h: float, lo: float, hi: float, m: float, shift: float = 0.0) -> np.ndarray:
    ah = abs(h)
    span = hi - lo
    pts = [lo, hi]
    for c in (-shift, m - shift):
        if lo < c < hi:
            pts.append(c)
        reach = span + abs(c - lo) + abs(c - hi)
        step = ah
        while step < reach:
            for p in (c - step, c + step):
                if lo < p < hi:
                    pts.append(p)
            step *= 2.0
    return np.unique(np.array(pts))


def _inner_nodes(bp: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gl(order)
    a, b = bp[:-1], bp[1:]
    half = 0.5 * (b - a)
    v = (half[:, None] * x[None, :] + 0.5 * (a + b)[:, None]).ravel()
    return v, (half[:, None] * w[None, :]).ravel()


def _inner_tensor(h: float, lo: float, hi: float, m: float, alpha: float, n: int = 10, shift: float = 0.0):
    """Oriented int_lo^hi K(h, v) dv, int |K| dv and a rule-error estimate, on panels graded at scale |h|
    toward v = 0 and v = m.

    ``lo``, ``hi`` and the nodes are measured from ``shift`` (v = shift + v').
    """
    if lo == hi or h == 0.0:
        return 0.0, 0.0, 0.0
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0
    bp = _inner_breakpoints(h, lo, hi, m, shift)
    p0, p1 = -shift, m - shift
    out = []
    for order in (n, n // 2 + 1):
        v, wt = _inner_nodes(bp, order)
        k = _kernel_offsets(h, v - p0, v - p1, m, alpha)
        out.append((float(wt @ k), float(wt @ np.abs(k))))
    (q, qa), (q_lo, _) = out
    return sign * q, qa, abs(q - q_lo)


def _inner_order(quad: QuadratureSpec) -> int:
    # the panel budget sets the inner Gauss order: 64 panels -> 10 points per v-panel
    return int(min(40, max(6, quad.panels // 6)))


def _tensor_values(hs: np.ndarray, lo_fun, hi_fun, m: float, alpha: float, record=None, order: int = 10,
                   shift: float = 0.0):
    lo = np.asarray(lo_fun(hs), dtype=float) * np.ones_like(hs)
    hi = np.asarray(hi_fun(hs), dtype=float) * np.ones_like(hs)
    vals = np.empty_like(hs)
    absv = np.empty_like(hs)
    errs = np.empty_like(hs)
    for i, h in enumerate(hs):
        vals[i], absv[i], errs[i] = _inner_tensor(float(h), float(lo[i]), float(hi[i]), m, alpha, order, shift)
        if record is not None and h != 0.0 and lo[i] != hi[i]:
            record.append((float(h), float(lo[i]) + shift, float(hi[i]) + shift))
    # the inner rule error rides along with |K| so the outer rules integrate both
    return vals, absv + 1j * errs


def _gl_panel(g, a: float, b: float, n: int):
    x, w = _gl(n)
    hs = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals, absv = g(hs)
    return 0.5 * (b - a) * float(w @ vals), 0.5 * (b - a) * complex(w @ absv)


def _adaptive_panel(g, a: float, b: float, tol: float, depth: int = 0):
    q, qa = _gl_panel(g, a, b, 16)
    q_lo, qa_lo = _gl_panel(g, a, b, 10)
    err = abs(q - q_lo)
    if err <= tol or depth >= 12:
        return q, err, qa
    mid = 0.5 * (a + b)
    q1, e1, a1 = _adaptive_panel(g, a, mid, 0.5 * tol, depth + 1)
    q2, e2, a2 = _adaptive_panel(g, mid, b, 0.5 * tol, depth + 1)
    return q1 + q2, e1 + e2, a1 + a2


def _endpoint_tail(hs: np.ndarray, vals: np.ndarray, h_drop: np.ndarray, w_drop: np.ndarray) -> float:
    """Dropped-node share of the rule, with g ~ C h^p fitted from the two smallest kept nodes.

    A fold through (0, 0) or (0, m) makes g ~ h^(-2a), whose share below
    1e-14 h0 is far from negligible.
    """
    if h_drop.size == 0:
        return 0.0
    i = np.argsort(hs)[:2]
    (h1, h2), (g1, g2) = hs[i], vals[i]
    if g1 == 0.0 or g2 == 0.0 or g1 * g2 < 0.0:
        return 0.0
    p = math.log(g2 / g1) / math.log(h2 / h1)
    if not (-1.0 < p < 50.0):
        return 0.0
    return float(g1 * (w_drop @ (h_drop / h1) ** p))


def _innermost(g, h0: float, tol: float):
    """tanh-sinh on (0, h0]; nodes below 1e-14 h0 use a fitted power law instead of g."""
    prev = None
    for level in range(3, 9):
        left, w = _tanh_sinh(level)
        hs = 0.5 * h0 * left
        keep = hs > 1e-14 * h0
        vals, absv = g(hs[keep])
        tail = 0.5 * h0 * _endpoint_tail(hs[keep], vals, hs[~keep], w[~keep])
        q = 0.5 * h0 * float(w[keep] @ vals) + tail
        qa = 0.5 * h0 * complex(w[keep] @ absv) + abs(tail) + 1j * 1e-6 * abs(tail)
        if prev is not None and abs(q - prev) <= tol:
            return q, abs(q - prev), qa
        prev = q
    return q, abs(q - prev), qa


def _half_line(g, R: float, scales: Sequence[float], tol: float, extra: Sequence[float] = ()):
    """int_0^R g(h) dh with dyadic panels toward 0 and tanh-sinh on the innermost one."""
    positive = [s for s in scales if s > 0.0]
    h_min = 1e-3 * min(positive + [R])
    bps = [R]
    while bps[-1] > h_min:
        bps.append(0.5 * bps[-1])
    bps += [e for e in extra if 0.0 < e < R]
    bps = np.unique(np.array(bps))
    n_panels = bps.size
    total, err, abs_total = _innermost(g, float(bps[0]), tol / n_panels)
    for a, b in zip(bps[:-1], bps[1:]):
        q, e, qa = _adaptive_panel(g, float(a), float(b), tol / n_panels)
        total += q
        err += e
        abs_total += qa
    return total, err, abs_total


def _integrate_tensor(lo_fun, hi_fun, m: float, alpha: float, R: float, tol: float, *, h_lo: float = None,
                      h_hi: float = None, scales: Sequence[float] = (), kinks: Sequence[float] = (),
                      record=None, order: int = 10, shift: float = 0.0) -> Estimate:
    """int_{h_lo}^{h_hi} int_{lo(h)}^{hi(h)} K dv dh, split at h = 0 (defaults: -R..R).

    With ``shift`` the bound functions return v - shift.
    """
    h_lo = -R if h_lo is None else h_lo
    h_hi = R if h_hi is None else h_hi
    scales = list(scales) + [m, R]
    total, err, abs_total = 0.0, 0.0, 0.0

    def side(sgn: float, length: float):
        g = lambda hs: _tensor_values(sgn * hs, lo_fun, hi_fun, m, alpha, record, order, shift)
        ex = [abs(k) for k in kinks if k * sgn > 0.0]
        return _half_line(g, length, scales, 0.5 * tol, ex)

    if h_hi > 0.0:
        q, e, qa = side(1.0, h_hi)
        if h_lo > 0.0:
            q2, e2, qa2 = side(1.0, h_lo)
            q, e, qa = q - q2, e + e2, qa - qa2
        total += q
        err += e
        abs_total += qa
    if h_lo < 0.0:
        q, e, qa = side(-1.0, -h_lo)
        if h_hi < 0.0:
            q2, e2, qa2 = side(-1.0, -h_hi)
            q, e, qa = q - q2, e + e2, qa - qa2
        # dh runs from -|h_lo| to 0; the substitution h -> -h keeps the sign
        total += q
        err += e
        abs_total += qa
    # inner rule error, plus a rounding floor for cancellation between large positive and negative parts
    err += abs(abs_total.imag) + 64.0 * np.finfo(float).eps * abs(abs_total.real)
    return Estimate(total, float(err))


# ---------------------------------------------------------------------------
# closed-form route
# ---------------------------------------------------------------------------

def _phi_tail(w: np.ndarray, alpha: float) -> np.ndarray:
    """int_|w|^inf (1+t^2)^(-1-a) dt for |w| >= 0 (accurate for large |w|)."""
    w2 = np.asarray(w, dtype=float) ** 2
    return 0.5 * beta_fn(0.5, alpha + 0.5) * betainc(alpha + 0.5, 0.5, 1.0 / (1.0 + w2))


def _phi(w: np.ndarray, alpha: float) -> np.ndarray:
    """int_0^w (1+t^2)^(-1-a) dt."""
    w = np.asarray(w, dtype=float)
    w2 = w * w
    return np.sign(w) * 0.5 * beta_fn(0.5, alpha + 0.5) * betainc(0.5, alpha + 0.5, w2 / (1.0 + w2))


def _phi_diff(w2: np.ndarray, w1: np.ndarray, alpha: float) -> np.ndarray:
    """Phi(w2) - Phi(w1), using tail complements when both arguments are large and of one sign."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    same_big = (np.abs(w1) > 1.0) & (np.abs(w2) > 1.0) & (np.sign(w1) == np.sign(w2))
    direct = _phi(w2, alpha) - _phi(w1, alpha)
    tail = np.sign(w2) * (_phi_tail(w1, alpha) - _phi_tail(w2, alpha))
    return np.where(same_big, tail, direct)


def inner_closed(h, lo, hi, m: float, alpha: float, shift: float = 0.0) -> np.ndarray:
    """Closed form of int_lo^hi K(h, v) dv (vectorized over h); ``lo``, ``hi`` measured from ``shift``."""
    h = np.asarray(h, dtype=float)
    lo = np.asarray(lo, dtype=float) * np.ones_like(h)
    hi = np.asarray(hi, dtype=float) * np.ones_like(h)
    ah = np.abs(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.sign(h) * ah ** (-2.0 * alpha)
        p0, p1 = -shift, m - shift
        first = _phi_diff((hi - p0) / ah, (lo - p0) / ah, alpha)
        second = _phi_diff((hi - p1) / ah, (lo - p1) / ah, alpha)
        out = scale * (first - second)
    return np.where(ah > 0.0, out, 0.0)


def _integrate_closed(lo_fun, hi_fun, m: float, alpha: float, R: float, tol: float, *,
                      scales: Sequence[float] = (), kinks: Sequence[float] = (), shift: float = 0.0) -> Estimate:
    positive = [s for s in list(scales) + [m, R] if s > 0.0]
    h_min = 1e-3 * min(positive)
    cuts = [R]
    while cuts[-1] > h_min:
        cuts.append(0.5 * cuts[-1])
    cuts += [abs(k) for k in kinks if 0.0 < abs(k) < R]
    cuts = np.unique(np.array(cuts + [0.0]))

    def g(h):
        return float(inner_closed(np.array([h]), lo_fun(np.array([h])), hi_fun(np.array([h])), m, alpha, shift)[0])

    total, err = 0.0, 0.0
    for sgn in (1.0, -1.0):
        for a, b in zip(cuts[:-1], cuts[1:]):
            eps = tol / (2 * cuts.size)
            # full_output keeps QUADPACK quiet; a flagged subinterval still reports its error estimate
            val, e, info, *msg = integrate.quad(lambda t: g(sgn * t), a, b, epsabs=eps, epsrel=1e-12,
                                                limit=200, full_output=1)
            total += val
            err += max(e, eps) if msg else e
    return Estimate(total, err)


def _integrate(lo_fun, hi_fun, m, alpha, R, tol, method, **kw) -> Estimate:
    if method == "tensor":
        return _integrate_tensor(lo_fun, hi_fun, m, alpha, R, tol, **kw)
    if method == "closed":
        kw.pop("record", None)
        kw.pop("order", None)
        return _integrate_closed(lo_fun, hi_fun, m, alpha, R, tol, **kw)
    raise ParameterError(f"unknown method {method!r}")


def _fold_scales(f, m: float) -> list[float]:
    c = float(f(0.0))
    return [abs(c), abs(c - m)]


# ---------------------------------------------------------------------------
# J integrals
# ---------------------------------------------------------------------------

def _shifted_bounds(f):
    """Bounds measured from c = f(0): zero, the tangent line and the fold itself."""
    c = float(f(0.0))
    if hasattr(f, "offset"):
        rel = f.offset
    else:
        rel = lambda h: np.asarray(f(h), dtype=float) - c
    zero = lambda h: np.zeros_like(np.asarray(h, dtype=float))
    lin = lambda h: f.slope * np.asarray(h, dtype=float)
    return c, zero, lin, rel


def integral_J(f, m: float, alpha: float, R: float, quad: QuadratureSpec = QuadratureSpec(), *,
               method: str = "tensor", record=None) -> tuple[Estimate, Estimate, Estimate]:
    """(J, J1, J2): the fold region, its linearization, and the remainder.

    The work is done in v - f(0), so a fold through a singular height keeps
    full relative accuracy as h -> 0.
    """
    c, zero, lin, rel = _shifted_bounds(f)
    kinks = list(getattr(f, "breakpoints", lambda: [0.0])())
    sc = _fold_scales(f, m)
    tol = quad.tolerance
    kw = {"scales": sc, "kinks": kinks, "order": _inner_order(quad), "shift": c}
    J = _integrate(zero, rel, m, alpha, R, tol, method, **kw)
    J1 = _integrate(zero, lin, m, alpha, R, tol, method, **kw)
    J2 = _integrate(lin, rel, m, alpha, R, tol, method, record=record, **kw)
    return J, J1, J2


def _fold_a(f, m: float) -> float:
    c = float(f(0.0))
    if c < 0.0:
        return -c
    if c > m:
        return c - m
    raise DomainError(f"f(0) = {c} lies in [0, m]; J1 splitting needs a > 0")


def integral_J1_split(f, m: float, alpha: float, R: float, quad: QuadratureSpec = QuadratureSpec(), *,
                      method: str = "tensor") -> tuple[Estimate, Estimate]:
    """(J3, J4): J1 restricted to |h| < a+m and to a+m <= |h| <= R."""
    a = _fold_a(f, m)
    c, zero, lin, _ = _shifted_bounds(f)
    cut = min(a + m, R)
    tol = quad.tolerance
    sc = _fold_scales(f, m)
    if method == "tensor":
        kw = {"scales": sc, "order": _inner_order(quad), "shift": c}
        J3 = _integrate_tensor(zero, lin, m, alpha, R, tol, h_lo=-cut, h_hi=cut, **kw)
        if cut >= R:
            return J3, Estimate(0.0, 0.0)
        right = _integrate_tensor(zero, lin, m, alpha, R, tol, h_lo=cut, h_hi=R, **kw)
        left = _integrate_tensor(zero, lin, m, alpha, R, tol, h_lo=-R, h_hi=-cut, **kw)
        return J3, Estimate(right.value + left.value, right.error + left.error)
    J1 = _integrate_closed(zero, lin, m, alpha, R, tol, scales=sc, shift=c)
    J3 = Estimate(*_closed_window(zero, lin, m, alpha, cut, tol, c))
    return J3, Estimate(J1.value - J3.value, J1.error + J3.error)


def _closed_window(lo_fun, hi_fun, m, alpha, cut, tol, shift=0.0):
    g = lambda h: float(inner_closed(np.array([h]), lo_fun(np.array([h])), hi_fun(np.array([h])), m, alpha,
                                     shift)[0])
    total, err = 0.0, 0.0
    for a, b in ((-cut, 0.0), (0.0, cut)):
        v, e = integrate.quad(g, a, b, epsabs=tol, epsrel=1e-12, limit=200)
        total += v
        err += e
    return total, err


def split_bounds(f, m: float, alpha: float) -> tuple[float, float]:
    """The explicit bounds 12/(1-2a) |s| m/(a+m)^2a on |J3| and 3/a |s| m/(a+m)^2a on |J4|."""
    a = _fold_a(f, m)
    base = abs(f.slope) * m / (a + m) ** (2.0 * alpha)
    return 12.0 / (1.0 - 2.0 * alpha) * base, 3.0 / alpha * base


def pointwise_check(f, m: float, alpha: float, R: float, quad: QuadratureSpec = QuadratureSpec()) -> tuple[float, float]:
    """Largest |K|/bound ratios over every quadrature point of the J2 region (both should stay <= 1)."""
    rec: list = []
    integral_J(f, m, alpha, R, quad, record=rec)
    worst1, worst2 = 0.0, 0.0
    for h, lo, hi in rec:
        lo, hi = min(lo, hi), max(lo, hi)
        if hi <= lo:
            continue
        v, _ = _inner_nodes(_inner_breakpoints(h, lo, hi, m), 10)
        r1, r2 = pointwise_bounds(np.full_like(v, h), v, m, alpha)
        worst1 = max(worst1, float(r1.max()))
        worst2 = max(worst2, float(r2.max()))
    return worst1, worst2


# ---------------------------------------------------------------------------
# I decomposition
# ---------------------------------------------------------------------------

@dataclass
class DecompositionResult:
    I: float
    I_prime: float | None
    I_i: list[float]
    rects: list[float]
    strips: list[float]
    J: list[tuple[float, float, float, float, float]]
    errors: dict = field(default_factory=dict)

    def bound_holds(self) -> bool:
        return abs(self.I) <= 2.0 * sum(abs(x) for x in self.I_i) + self.errors.get("I", 0.0) \
            + sum(self.errors.get("I_i", [])) * 2.0


def integral_I(config: FoldConfiguration, quad: QuadratureSpec = QuadratureSpec(), *, family=None,
               witness_points=None, with_J: bool = True) -> DecompositionResult:
    """Decompose I over the strips between clipped folds.

    Strips alternate between the patch and its complement; ``bottom_inside``
    says whether the lowest strip lies in the patch.  When a PatchFamily is
    given (with ``witness_points = ((n, xi), (j, eta))`` placing (0, m) and
    (0, 0) on its boundary, already in normalized coordinates), I' is the
    full-patch value minus I.
    """
    m, alpha, R = config.m, config.alpha, config.R
    tol = quad.tolerance
    k = len(config.folds)
    kinks = config.kinks()
    scales = [s for f in config.folds for s in _fold_scales(f, m)]
    g = [config.clipped(i) for i in range(k + 2)]
    g0 = [float(gi(np.array([0.0]))[0]) for gi in g]
    I_i, I_err = [], []
    for i in range(1, k + 1):
        const = (lambda c: (lambda h: np.full_like(np.asarray(h, dtype=float), c)))(g0[i])
        est = _integrate_closed(const, g[i], m, alpha, R, tol, scales=scales, kinks=kinks)
        I_i.append(est.value)
        I_err.append(est.error)
    rects, rect_err = [], []
    for i in range(1, k + 2):
        lo = (lambda c: (lambda h: np.full_like(np.asarray(h, dtype=float), c)))(g0[i - 1])
        hi = (lambda c: (lambda h: np.full_like(np.asarray(h, dtype=float), c)))(g0[i])
        est = _integrate_tensor(lo, hi, m, alpha, R, tol, scales=scales, order=_inner_order(quad))
        rects.append(est.value)
        rect_err.append(est.error)
    strips, strip_err = [], []
    for i in range(1, k + 2):
        est = _integrate_closed(g[i - 1], g[i], m, alpha, R, tol, scales=scales, kinks=kinks)
        strips.append(est.value)
        strip_err.append(est.error)
    inside = [(j % 2 == 0) == config.bottom_inside for j in range(k + 1)]
    I = sum(s for s, ins in zip(strips, inside) if ins)
    I_e = sum(e for e, ins in zip(strip_err, inside) if ins)
    I_prime = None
    if family is not None:
        from .velocity import velocity_contour

        if witness_points is None:
            raise ParameterError("witness_points are required with a patch family")
        (n, xi), (j, eta) = witness_points
        top = velocity_contour(np.array([0.0, m]), family, quad, on_boundary=(n, xi))
        bottom = velocity_contour(np.array([0.0, 0.0]), family, quad, on_boundary=(j, eta))
        I_prime = float(top[1] - bottom[1]) - I
    J = []
    if with_J:
        for f in config.folds:
            Jv, J1, J2 = integral_J(f, m, alpha, R, quad)
            try:
                J3, J4 = integral_J1_split(f, m, alpha, R, quad)
            except DomainError:
                J3, J4 = Estimate(0.0, 0.0), Estimate(0.0, 0.0)
            J.append((Jv.value, J1.value, J2.value, J3.value, J4.value))
    errors = {"I": I_e, "I_i": I_err, "rects": rect_err, "strips": strip_err}
    return DecompositionResult(I, I_prime, I_i, rects, strips, J, errors)


# ---------------------------------------------------------------------------
# scaling experiments
# ---------------------------------------------------------------------------

def loglog_fit(x, y) -> dict:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, intercept])
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "window": [float(np.exp(x.min())), float(np.exp(x.max()))]}


def ln_minus(m: float) -> float:
    return max(0.0, -math.log(m))


@dataclass
class ScalingResult:
    kind: str
    rows: list[dict]
    fit: dict
    spread: float
    bounds_ok: bool


def _check_precision(rows: list[dict], keys: Sequence[str]) -> None:
    for r in rows:
        for key in keys:
            val, err = r[key], r[f"err_{key}"]
            if err > 0.1 * abs(val):
                raise PrecisionError(f"{key} error estimate exceeds 10% of its value at {r['sweep_value']:.3g}", err)


def _row(x, J, J1, J2, J3=Estimate(0.0, 0.0), J4=Estimate(0.0, 0.0)) -> dict:
    return {"sweep_value": x, "J": J.value, "J1": J1.value, "J2": J2.value, "J3": J3.value, "J4": J4.value,
            "err_J": J.error, "err_J1": J1.error, "err_J2": J2.error}


def scaling_experiment(kind: str, values: Sequence[float], alpha: float, gamma: float,
                       quad: QuadratureSpec = QuadratureSpec(), *, R: float = 0.5, A: float = 1.0,
                       a_over_m: float = 10.0, m: float = 1e-6, B: float = 1.0) -> ScalingResult:
    """Sweep |J2| over m ("J2_m") or |J1| over a ("J1_a") and fit log-log slopes.

    J2_m uses the one-sided profile f(h) = a + A h_+^(1+gamma) with a =
    a_over_m * m (the even profile gives J = 0 identically).  J1_a uses
    f(h) = -a + s h with s = B a^(gamma/(1+gamma)) at fixed m and also
    checks the explicit J3/J4 bounds.  ``spread`` is max/min of
    |J2|/(m (1 + ln_- m)) for J2_m and of |J1|/(s m (a+m)^-2a) for J1_a.
    """
    values = sorted(float(v) for v in values)
    if len(values) < 3 or values[-1] / values[0] < 1e3 * (1 - 1e-12):
        raise ParameterError("a sweep needs at least 3 points spanning 3 decades")
    rows = []
    bounds_ok = True
    if kind == "J2_m":
        for mm in values:
            f = GraphFold.power_profile(a_over_m * mm, A, gamma, side="right")
            J, J1, J2 = integral_J(f, mm, alpha, R, quad)
            rows.append(_row(mm, J, J1, J2))
        _check_precision(rows, ["J2"])
        y = [abs(r["J2"]) for r in rows]
        stat = [abs(r["J2"]) / (r["sweep_value"] * (1.0 + ln_minus(r["sweep_value"]))) for r in rows]
    elif kind == "J1_a":
        stat = []
        for a in values:
            s = B * a ** (gamma / (1.0 + gamma))
            f = GraphFold(-a, s)
            J, J1, J2 = integral_J(f, m, alpha, R, quad)
            J3, J4 = integral_J1_split(f, m, alpha, R, quad)
            b3, b4 = split_bounds(f, m, alpha)
            bounds_ok &= abs(J3.value) <= b3 and abs(J4.value) <= b4
            rows.append(_row(a, J, J1, J2, J3, J4))
            stat.append(abs(J1.value) / (s * m * (a + m) ** (-2.0 * alpha)))
        _check_precision(rows, ["J1"])
        y = [abs(r["J1"]) for r in rows]
    else:
        raise ParameterError(f"unknown sweep kind {kind!r}")
    fit = loglog_fit(values, y)
    return ScalingResult(kind, rows, fit, max(stat) / min(stat), bool(bounds_ok))


def simple_splash_pair(m: float, alpha: float, gamma: float, *, A: float = 1.0, curvature: float = 1.0):
    """Two zero-slope folds through (0, 0) and (0, m), bending away from each other.

    For alpha < 1/2 the profile is q h^2 + A h_+^(1+gamma) (C^{1,gamma});
    for alpha >= 1/2 it is q h^2 + A h_+^(2+gamma), the C^{2,gamma}
    variant (at gamma = 1 with alpha = 1/2 this is C^{1,1}-type data with
    exponent 2 replaced as in the borderline remark).
    """
    power = 1.0 + gamma if alpha < 0.5 else 2.0 + gamma
    if alpha == 0.5 and gamma == 1.0:
        power = 2.0
    lo = GraphFold(0.0, 0.0, -A, power, -curvature, "right")
    hi = GraphFold(m, 0.0, A, power, curvature, "right")
    return lo, hi


def simple_splash_rate(m_grid: Sequence[float], alpha: float, gamma: float, quad: QuadratureSpec = QuadratureSpec(),
                       *, R: float = 0.5, A: float = 1.0, curvature: float = 1.0, f_pair=None) -> ScalingResult:
    """Fit |J| (summed over the two folds) against m for a simple splash.

    ``f_pair`` may be a callable m -> (lower fold, upper fold); both must
    have zero slope.  ``spread`` is max/min of |J|/(m (1 + ln_- m)).
    """
    values = sorted(float(v) for v in m_grid)
    rows = []
    for mm in values:
        lo, hi = f_pair(mm) if f_pair is not None else simple_splash_pair(mm, alpha, gamma, A=A, curvature=curvature)
        if lo.slope != 0.0 or hi.slope != 0.0:
            raise ParameterError("simple splash folds must have zero slope at h = 0")
        tot = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        for f in (lo, hi):
            J, J1, J2 = integral_J(f, mm, alpha, R, quad)
            tot = [tot[0] + abs(J.value), tot[1] + J1.value, tot[2] + abs(J2.value),
                   tot[3] + J.error, tot[4] + J1.error, tot[5] + J2.error]
        rows.append({"sweep_value": mm, "J": tot[0], "J1": tot[1], "J2": tot[2], "J3": 0.0, "J4": 0.0,
                     "err_J": tot[3], "err_J1": tot[4], "err_J2": tot[5]})
    _check_precision(rows, ["J"])
    y = [r["J"] for r in rows]
    stat = [r["J"] / (r["sweep_value"] * (1.0 + ln_minus(r["sweep_value"]))) for r in rows]
    return ScalingResult("simple", rows, loglog_fit(values, y), max(stat) / min(stat), True)


SWEEP_COLUMNS = ["sweep_value", "J", "J1", "J2", "J3", "J4", "err_J", "err_J1", "err_J2"]


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([f"{r[c]:.12g}" for c in SWEEP_COLUMNS])
    return buf.getvalue()


def run_sweep(sweep: dict, alpha: float, gamma: float, quad: QuadratureSpec) -> tuple[list[dict], dict]:
    """Scenario-level sweep; returns CSV rows and the slope summary {slope, intercept, r2, window}."""
    values = sweep.get("values")
    if values is None:
        values = list(np.geomspace(sweep["start"], sweep["stop"], int(sweep["num"])))
    kind = sweep["kind"]
    if kind == "simple":
        res = simple_splash_rate(values, alpha, gamma, quad, R=sweep["R"], A=sweep["A"], curvature=sweep["curvature"])
    else:
        res = scaling_experiment(kind, values, alpha, gamma, quad, R=sweep["R"], A=sweep["A"],
                                 a_over_m=sweep["a_over_m"], m=sweep["m"], B=sweep["B"])
    return res.rows, res.fit
