"""Closed boundary curves and the geometric diagnostics built on them.

A :class:`ClosedCurve` stores nodes at the uniform parameters
``xi_j = 2*pi*j/N`` of the circle ``T = R/2piZ`` and is interpolated by the
unique trigonometric polynomial through them.  Everything else in the package
(velocity quadrature, fold distances, Hölder estimates) evaluates the curve
through that interpolant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline, make_interp_spline

from .errors import GeometryError, GraphWindowError, ParameterError, ResolutionError, SplashDetected

FloatArray = NDArray[np.float64]

TWO_PI = 2.0 * math.pi
MIN_NODES = 16
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def torus_distance(a, b):
    """Distance on T between parameters (broadcasts)."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def perp(v: FloatArray) -> FloatArray:
    """Rotate by +90 degrees: (v1, v2) -> (-v2, v1)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def cross2(a: FloatArray, b: FloatArray) -> FloatArray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _as_complex(xy: FloatArray) -> NDArray[np.complex128]:
    return xy[..., 0] + 1j * xy[..., 1]


def _as_xy(zc) -> FloatArray:
    zc = np.asarray(zc)
    return np.stack([zc.real, zc.imag], axis=-1)


# ---------------------------------------------------------------------------
# trigonometric interpolation
# ---------------------------------------------------------------------------

def _padded_spectrum(coef: NDArray[np.complex128], m: int, deriv: int = 0) -> NDArray[np.complex128]:
    """Spectrum of the interpolant (and its ``deriv``-th derivative) on ``m >= n`` points."""
    n = coef.size
    out = np.zeros(m, dtype=np.complex128)
    half = n // 2
    if n % 2 == 0:
        ks = np.arange(-half + 1, half)
    else:
        ks = np.arange(-half, half + 1)
    out[ks % m] = coef[ks % n] * (1j * ks) ** deriv
    if n % 2 == 0:
        # Nyquist mode is a cosine: split it between +n/2 and -n/2
        c = coef[half] / 2.0
        if m > n:
            out[half % m] += c * (1j * half) ** deriv
            out[(-half) % m] += c * (-1j * half) ** deriv
        else:
            out[half] += c * ((1j * half) ** deriv + (-1j * half) ** deriv)
    return out


def trig_upsample(values: FloatArray, factor: int, deriv: int = 0) -> FloatArray:
    """Values (or derivatives) of the trigonometric interpolant of ``values`` on a grid ``factor`` times finer."""
    zc = _as_complex(np.asarray(values, dtype=float))
    n = zc.size
    m = n * factor
    spec = _padded_spectrum(np.fft.fft(zc) / n, m, deriv)
    return _as_xy(np.fft.ifft(spec) * m)


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Counterclockwise closed curve through ``nodes`` at uniform parameters.

    Construct through :meth:`from_nodes` for validated input; the plain
    constructor only checks shape and finiteness so that intermediate
    time-stepping stages stay cheap.
    """

    nodes: FloatArray
    orientation: str = field(default="ccw")

    def __post_init__(self) -> None:
        arr = np.array(self.nodes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise GeometryError("nodes must have shape (N, 2)")
        if arr.shape[0] < MIN_NODES:
            raise ResolutionError(f"closed curve needs at least {MIN_NODES} nodes, got {arr.shape[0]}")
        if not np.isfinite(arr).all():
            raise GeometryError("nodes contain non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "nodes", arr)

    # -- construction -------------------------------------------------------
    @classmethod
    def from_nodes(cls, nodes, *, reorient: bool = True) -> "ClosedCurve":
        arr = np.array(nodes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise GeometryError("nodes must have shape (N, 2)")
        if arr.shape[0] < MIN_NODES:
            raise ResolutionError(f"closed curve needs at least {MIN_NODES} nodes, got {arr.shape[0]}")
        _check_polygon(arr)
        if polygon_area(arr) < 0.0:
            if not reorient:
                raise GeometryError("curve is clockwise")
            arr = _reverse_keep_first(arr)
        curve = cls(arr)
        hit = find_segment_intersection([curve])
        if hit is not None:
            raise GeometryError(f"polygon is self-intersecting (segments {hit})")
        return curve

    @classmethod
    def from_json(cls, text: str | dict) -> "ClosedCurve":
        data = json.loads(text) if isinstance(text, str) else text
        if data.get("orientation", "ccw") != "ccw":
            raise GeometryError("only counterclockwise curves are stored")
        return cls.from_nodes(data["nodes"], reorient=False)

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes.tolist(), "orientation": "ccw"})

    # -- basic data ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def params(self) -> FloatArray:
        return TWO_PI * np.arange(self.n) / self.n

    @cached_property
    def coef(self) -> NDArray[np.complex128]:
        return np.fft.fft(_as_complex(self.nodes)) / self.n

    def upsample(self, factor: int = 1, deriv: int = 0) -> FloatArray:
        """Interpolant (or derivative) sampled at ``factor * N`` uniform parameters."""
        if factor == 1 and deriv == 0:
            return self.nodes
        m = self.n * factor
        return _as_xy(np.fft.ifft(_padded_spectrum(self.coef, m, deriv)) * m)

    @cached_property
    def derivative_at_nodes(self) -> FloatArray:
        return self.upsample(1, 1)

    def evaluate(self, xi, deriv: int = 0) -> FloatArray:
        """Interpolant or its ``deriv``-th derivative at arbitrary parameters ``xi``."""
        xi = np.asarray(xi, dtype=float)
        shape = xi.shape
        flat = xi.ravel()
        n = self.n
        half = n // 2
        ks = np.arange(-half + 1, half) if n % 2 == 0 else np.arange(-half, half + 1)
        c = self.coef[ks % n] * (1j * ks) ** deriv
        out = np.empty(flat.size, dtype=np.complex128)
        chunk = max(1, 2_000_000 // n)
        for start in range(0, flat.size, chunk):
            part = flat[start:start + chunk]
            out[start:start + chunk] = np.exp(1j * np.outer(part, ks)) @ c
        if n % 2 == 0:
            out += self.coef[half] * half ** deriv * np.cos(half * flat + deriv * math.pi / 2.0)
        return _as_xy(out).reshape(shape + (2,))

    def chord(self, xi: float, s) -> FloatArray:
        """z(xi + s) - z(xi) without cancellation for small s."""
        s = np.asarray(s, dtype=float).ravel()
        n = self.n
        half = n // 2
        ks = np.arange(-half + 1, half) if n % 2 == 0 else np.arange(-half, half + 1)
        c = self.coef[ks % n] * np.exp(1j * ks * xi)
        phase = 0.5 * np.outer(s, ks)
        out = (2j * np.sin(phase) * np.exp(1j * phase)) @ c
        if n % 2 == 0:
            out += -2.0 * self.coef[half] * np.sin(half * (xi + 0.5 * s)) * np.sin(0.5 * half * s)
        return _as_xy(out)

    @cached_property
    def length(self) -> float:
        speed = np.linalg.norm(self.upsample(4, 1), axis=1)
        return float(speed.mean() * TWO_PI)

    @cached_property
    def area(self) -> float:
        z = self.upsample(2)
        dz = self.upsample(2, 1)
        return float(0.5 * np.mean(z[:, 0] * dz[:, 1] - z[:, 1] * dz[:, 0]) * TWO_PI)

    @cached_property
    def min_spacing(self) -> float:
        return float(np.linalg.norm(np.roll(self.nodes, -1, axis=0) - self.nodes, axis=1).min())

    @cached_property
    def max_spacing(self) -> float:
        return float(np.linalg.norm(np.roll(self.nodes, -1, axis=0) - self.nodes, axis=1).max())

    def speed_variation(self) -> float:
        s = np.linalg.norm(self.derivative_at_nodes, axis=1)
        return float((s.max() - s.min()) / s.mean())

    # -- rigid motions ------------------------------------------------------
    def translated(self, shift) -> "ClosedCurve":
        return ClosedCurve(self.nodes + np.asarray(shift, dtype=float))

    def rotated(self, angle: float, center=(0.0, 0.0)) -> "ClosedCurve":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        ctr = np.asarray(center, dtype=float)
        return ClosedCurve((self.nodes - ctr) @ rot.T + ctr)

    def reflected(self) -> "ClosedCurve":
        """Mirror image across the horizontal axis, kept counterclockwise.

        The mirrored curve is parameterized by ``-xi``, so node 0 stays first.
        """
        mirrored = self.nodes * np.array([1.0, -1.0])
        return ClosedCurve(_reverse_keep_first(mirrored))


def _reverse_keep_first(arr: FloatArray) -> FloatArray:
    return np.concatenate([arr[:1], arr[:0:-1]], axis=0)


def polygon_area(nodes: FloatArray) -> float:
    x, y = nodes[:, 0], nodes[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _check_polygon(arr: FloatArray) -> None:
    if not np.isfinite(arr).all():
        raise GeometryError("nodes contain non-finite values")
    edges = np.linalg.norm(np.roll(arr, -1, axis=0) - arr, axis=1)
    scale = float(np.ptp(arr, axis=0).max())
    if scale == 0.0 or edges.min() <= 1e-14 * scale:
        raise ResolutionError("zero-length edge between consecutive nodes")


def find_segment_intersection(curves: Sequence[ClosedCurve]) -> tuple[tuple[int, int], tuple[int, int]] | None:
    """First pair of crossing or touching node segments, as ((n, i), (j, k)), or None.

    Segments sharing a node are not compared.
    """
    starts, ends, owner, index = [], [], [], []
    for ci, c in enumerate(curves):
        p = c.nodes
        starts.append(p)
        ends.append(np.roll(p, -1, axis=0))
        owner.append(np.full(c.n, ci))
        index.append(np.arange(c.n))
    p = np.concatenate(starts)
    q = np.concatenate(ends)
    own = np.concatenate(owner)
    idx = np.concatenate(index)
    sizes = np.array([c.n for c in curves])[own]
    total = p.shape[0]
    d = q - p
    chunk = 256
    for r0 in range(0, total, chunk):
        rs = slice(r0, min(total, r0 + chunk))
        pi, di = p[rs, None, :], d[rs, None, :]
        o1 = cross2(di, p[None] - pi)
        o2 = cross2(di, q[None] - pi)
        o3 = cross2(d[None], pi - p[None])
        o4 = cross2(d[None], (q[rs, None, :]) - p[None])
        hit = (o1 * o2 <= 0.0) & (o3 * o4 <= 0.0)
        colinear = (o1 == 0.0) & (o2 == 0.0)
        if colinear.any():
            # colinear segments only count when their projections overlap
            t0 = np.sum((p[None] - pi) * di, axis=2)
            t1 = np.sum((q[None] - pi) * di, axis=2)
            dd = np.sum(di * di, axis=2)
            overlap = (np.maximum(t0, t1) >= 0.0) & (np.minimum(t0, t1) <= dd)
            hit &= ~colinear | overlap
        same = own[rs, None] == own[None, :]
        gap = np.abs(idx[rs, None] - idx[None, :])
        adjacent = same & ((gap <= 1) | (gap == sizes[None, :] - 1))
        cols = np.arange(total)[None, :]
        rows = np.arange(r0, rs.stop)[:, None]
        hit &= ~adjacent & (cols > rows)
        # colinear overlaps register as hits only if the segments really overlap
        if hit.any():
            r, c = np.argwhere(hit)[0]
            r += r0
            return (int(own[r]), int(idx[r])), (int(own[c]), int(idx[c]))
    return None


# ---------------------------------------------------------------------------
# constant-speed parameterization
# ---------------------------------------------------------------------------

def _arclength_inverse(curve: ClosedCurve, targets: FloatArray, factor: int = 4) -> FloatArray:
    """Parameters at which the interpolant's arc length from node 0 equals ``targets``."""
    m = curve.n * factor
    speed = np.linalg.norm(curve.upsample(factor, 1), axis=1)
    total = speed.mean() * TWO_PI
    sc = np.fft.fft(speed) / m
    ks = np.fft.fftfreq(m, 1.0 / m)
    nz = ks != 0
    antider = np.zeros(m, dtype=np.complex128)
    antider[nz] = sc[nz] / (1j * ks[nz])
    # arc length s(xi) = total*xi/2pi + sum_k a_k (e^{ik xi} - 1)
    kk = ks[nz]
    ak = antider[nz]
    base = np.sum(ak)

    def s_of(xi):
        return total * xi / TWO_PI + (np.exp(1j * np.outer(xi, kk)) @ ak - base).real

    grid = TWO_PI * np.arange(m + 1) / m
    s_grid = s_of(grid)
    xi = np.interp(targets, s_grid, grid)
    for _ in range(30):
        resid = s_of(xi) - targets
        sp = np.linalg.norm(curve.evaluate(xi, 1), axis=1)
        step = resid / sp
        xi = xi - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return xi


def _uniform_arclength_nodes(curve: ClosedCurve) -> FloatArray:
    n = curve.n
    targets = curve.length * np.arange(n) / n
    xi = _arclength_inverse(curve, targets)
    xi[0] = 0.0
    return curve.evaluate(xi)


def _spline_resample(arr: FloatArray, n_out: int | None = None) -> FloatArray:
    """Uniform arc-length resampling of raw polygon nodes through a periodic quintic spline."""
    closed = np.vstack([arr, arr[:1]])
    chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    t = np.concatenate([[0.0], np.cumsum(chord)])
    spl = make_interp_spline(t, closed, k=5, bc_type="periodic")
    dspl = spl.derivative()
    gx, gw = np.polynomial.legendre.leggauss(8)
    a, b = t[:-1, None], t[1:, None]
    pts = 0.5 * (b - a) * gx[None, :] + 0.5 * (a + b)
    seg_len = 0.5 * (b - a)[:, 0] * (np.linalg.norm(dspl(pts.ravel()), axis=1).reshape(pts.shape) @ gw)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n = arr.shape[0]
    targets = cum[-1] * np.arange(n if n_out is None else n_out) / (n if n_out is None else n_out)

    def arc(tt):
        seg = np.clip(np.searchsorted(t, tt, side="right") - 1, 0, n - 1)
        lo = t[seg]
        mid_pts = 0.5 * (tt - lo)[:, None] * gx[None, :] + 0.5 * (tt + lo)[:, None]
        sp = np.linalg.norm(dspl(mid_pts.ravel()), axis=1).reshape(mid_pts.shape)
        return cum[seg] + 0.5 * (tt - lo) * (sp @ gw)

    tt = np.interp(targets, cum, t)
    for _ in range(30):
        step = (arc(tt) - targets) / np.linalg.norm(dspl(tt), axis=1)
        tt = tt - step
        if np.max(np.abs(step)) < 1e-14 * t[-1]:
            break
    tt[0] = 0.0
    return spl(tt)


def redistribute_arclength(curve: ClosedCurve, sweeps: int = 3) -> ClosedCurve:
    """Resample ``curve`` at uniform arc length through its own interpolant (node 0 kept)."""
    chords = np.linalg.norm(np.roll(curve.nodes, -1, axis=0) - curve.nodes, axis=1)
    if chords.max() > 1e3 * chords.min():
        raise ResolutionError(f"node spacing ratio {chords.max() / chords.min():.3g} exceeds 1e3")
    for _ in range(sweeps):
        before = curve.speed_variation()
        if before < 1e-13:
            break
        nxt = ClosedCurve(_uniform_arclength_nodes(curve))
        if nxt.speed_variation() >= before:
            break
        curve = nxt
    return curve


def reparameterize_constant_speed(raw_nodes, *, tol: float = 1e-8, max_iter: int = 40) -> ClosedCurve:
    """Resample a simple closed polygon so that its interpolant has constant speed.

    Raw nodes whose spacing is strongly non-uniform (max/min chord above 4) are
    first resampled through a periodic quintic spline; the result is then
    iterated on its own trigonometric interpolant until the relative speed
    variation drops below ``tol``.  Node 0 is kept.
    """
    curve = ClosedCurve.from_nodes(raw_nodes)
    if curve.speed_variation() < tol:
        return curve
    chords = np.linalg.norm(np.roll(curve.nodes, -1, axis=0) - curve.nodes, axis=1)
    if chords.max() > 4.0 * chords.min():
        curve = ClosedCurve(_spline_resample(curve.nodes))
    previous = math.inf
    for _ in range(max_iter):
        variation = curve.speed_variation()
        if variation < tol or variation > 0.5 * previous:
            break
        previous = variation
        curve = ClosedCurve(_uniform_arclength_nodes(curve))
    if curve.speed_variation() >= tol:
        raise ResolutionError(
            f"constant-speed iteration stalled at relative speed variation {curve.speed_variation():.3e}"
        )
    return curve


# ---------------------------------------------------------------------------
# diagnostics types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderEstimate:
    gamma: float
    c1_norm: float
    min_speed: float
    seminorm: float = float("nan")
    resolution: int = 0


@dataclass(frozen=True)
class DistanceWitness:
    """Pair ((n, xi), (j, eta)) realizing ``distance`` and the unit vector from the second point to the first."""

    distance: float
    pair: tuple[tuple[int, float], tuple[int, float]]
    normal: tuple[float, float]
    resolution: int = 0

    def as_dict(self) -> dict:
        (n, xi), (j, eta) = self.pair
        return {"distance": self.distance, "pair": [[n, xi], [j, eta]], "normal": list(self.normal),
                "resolution": self.resolution}


@dataclass(frozen=True)
class GraphFunction:
    base_point: FloatArray
    axis: FloatArray
    h: FloatArray
    samples: FloatArray
    derivative_at_0: float
    param_window: tuple[float, float] = (0.0, 0.0)

    def __call__(self, h) -> FloatArray:
        return CubicSpline(self.h, self.samples)(h)

    @property
    def slope(self) -> float:
        return self.derivative_at_0

    def points(self, h=None) -> FloatArray:
        """Map graph samples back to the plane: base + h v + f(h) v^perp."""
        if h is None:
            h, f = self.h, self.samples
        else:
            h = np.asarray(h, dtype=float)
            f = self(h)
        return self.base_point + np.outer(h, self.axis) + np.outer(f, perp(self.axis))


class TangentAngleResult(NamedTuple):
    value: float
    empty: bool
    pairs: int


# ---------------------------------------------------------------------------
# golden-section helpers
# ---------------------------------------------------------------------------

def golden_section(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi]; returns (argmin, value)."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    cands = [(fc, c), (fd, d), (fun(a), a), (fun(b), b)]
    best = min(cands, key=lambda p: p[0])
    return best[1], best[0]


def _sample_grid(curves: Sequence[ClosedCurve], factor: int):
    pts, ders, owner, par = [], [], [], []
    for ci, c in enumerate(curves):
        m = c.n * factor
        pts.append(c.upsample(factor))
        ders.append(c.upsample(factor, 1))
        owner.append(np.full(m, ci))
        par.append(TWO_PI * np.arange(m) / m)
    return np.concatenate(pts), np.concatenate(ders), np.concatenate(owner), np.concatenate(par)


def _pair_distance(curves, n, xi, j, eta) -> float:
    return float(np.linalg.norm(curves[n].evaluate(xi) - curves[j].evaluate(eta)))


# ---------------------------------------------------------------------------
# arc-chord ratio
# ---------------------------------------------------------------------------

def _chord_objective(curves, n, j):
    def ratio(xi, eta):
        dist = _pair_distance(curves, n, xi, j, eta)
        num = abs(n - j) + float(torus_distance(xi, eta))
        if dist == 0.0:
            return math.inf
        return num / dist
    return ratio


def arc_chord_ratio(curves: Sequence[ClosedCurve], *, factor: int = 4) -> tuple[float, DistanceWitness]:
    """Largest ``(|n-j| + |xi-eta|) / |z_n(xi) - z_j(eta)|`` over distinct point pairs.

    Dense grid (``factor`` samples per node) followed by golden-section
    refinement around the best grid pair.  Coincident points raise
    :class:`SplashDetected`.
    """
    if not curves:
        raise ParameterError("arc_chord_ratio needs at least one curve")
    pts, _, owner, par = _sample_grid(curves, factor)
    total = pts.shape[0]
    best_val, best = -1.0, (0, 0)
    chunk = 512
    for r0 in range(0, total, chunk):
        rs = slice(r0, min(total, r0 + chunk))
        dist = np.linalg.norm(pts[rs, None, :] - pts[None, :, :], axis=2)
        num = np.abs(owner[rs, None] - owner[None, :]) + torus_distance(par[rs, None], par[None, :])
        rows = np.arange(r0, rs.stop)[:, None]
        cols = np.arange(total)[None, :]
        upper = cols > rows
        touch = upper & (dist == 0.0)
        if touch.any():
            r, c = np.argwhere(touch)[0]
            r += r0
            w = DistanceWitness(0.0, ((int(owner[r]), float(par[r])), (int(owner[c]), float(par[c]))), (0.0, 0.0),
                                total)
            raise SplashDetected("boundary points coincide", witness=w)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(upper, num / dist, -1.0)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > best_val:
            best_val = float(ratio.flat[k])
            best = (r0 + k // total, k % total)
    r, c = best
    n, j = int(owner[r]), int(owner[c])
    xi, eta = float(par[r]), float(par[c])
    h = TWO_PI / (curves[n].n * factor)
    hj = TWO_PI / (curves[j].n * factor)
    obj = _chord_objective(curves, n, j)
    val = obj(xi, eta)
    for _ in range(6):
        if n == j and torus_distance(xi, eta) < 2 * h:
            break
        xi_new, neg = golden_section(lambda s: -obj(s, eta), xi - h, xi + h, tol=1e-11)
        eta_new, neg2 = golden_section(lambda s: -obj(xi_new, s), eta - hj, eta + hj, tol=1e-11)
        if -neg2 >= val:
            xi, eta, val = xi_new % TWO_PI, eta_new % TWO_PI, -neg2
        else:
            break
    pz, qz = curves[n].evaluate(xi), curves[j].evaluate(eta)
    dist = float(np.linalg.norm(pz - qz))
    if dist == 0.0:
        raise SplashDetected("boundary points coincide", witness=DistanceWitness(0.0, ((n, xi), (j, eta)), (0.0, 0.0)))
    normal = tuple(float(v) for v in (pz - qz) / dist)
    return val, DistanceWitness(dist, ((n, xi), (j, eta)), normal, total)


# ---------------------------------------------------------------------------
# Hölder norm
# ---------------------------------------------------------------------------

def holder_c1gamma_norm(curve: ClosedCurve, gamma: float) -> HolderEstimate:
    """Discrete C^{1,gamma} norm on the node grid refined once at midpoints."""
    if not (0.0 < gamma <= 1.0):
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    z = curve.upsample(2)
    dz = curve.upsample(2, 1)
    m = z.shape[0]
    xi = TWO_PI * np.arange(m) / m
    semi = 0.0
    chunk = 512
    for r0 in range(0, m, chunk):
        rs = slice(r0, min(m, r0 + chunk))
        num = np.linalg.norm(dz[rs, None, :] - dz[None, :, :], axis=2)
        den = torus_distance(xi[rs, None], xi[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(den > 0.0, num / den ** gamma, 0.0)
        semi = max(semi, float(q.max()))
    speed = np.linalg.norm(dz, axis=1)
    c1 = max(float(np.linalg.norm(z, axis=1).max()), float(speed.max()), semi)
    return HolderEstimate(gamma=gamma, c1_norm=c1, min_speed=float(speed.min()), seminorm=semi, resolution=m)


def fold_delta(curves: Sequence[ClosedCurve], gamma: float) -> float:
    """delta = (M'/4M)^(1/gamma) with M the largest C^{1,gamma} norm and M' the smallest speed."""
    ests = [holder_c1gamma_norm(c, gamma) for c in curves]
    big = max(e.c1_norm for e in ests)
    small = min(e.min_speed for e in ests)
    return (small / (4.0 * big)) ** (1.0 / gamma)


# ---------------------------------------------------------------------------
# minimum fold distance
# ---------------------------------------------------------------------------

def _refine_pair(curves, n, xi, j, eta, delta, h):
    """Local minimization of |z_n(xi) - z_j(eta)| from a grid pair.

    Golden-section coordinate sweeps bring the pair into the basin, then a
    guarded Newton iteration polishes unconstrained minima.  For pairs on
    one curve the separation constraint |xi - eta| >= delta is enforced by
    minimizing along the constraint line whenever it is active.
    """
    dist = lambda a, b: _pair_distance(curves, n, a, j, b)
    same = n == j

    def admissible(a, b):
        return (not same) or torus_distance(a, b) >= delta - 1e-15

    best = dist(xi, eta)
    a, b = xi, eta
    for _ in range(3):
        a1, v1 = golden_section(lambda s: dist(s, b) if admissible(s, b) else math.inf, a - h, a + h, tol=1e-10)
        if v1 < best:
            a, best = a1, v1
        b1, v2 = golden_section(lambda s: dist(a, s) if admissible(a, s) else math.inf, b - h, b + h, tol=1e-10)
        if v2 < best:
            b, best = b1, v2

    # guarded Newton on F = |z(a) - w(b)|^2 / 2
    ca, cb = curves[n], curves[j]
    for _ in range(40):
        za, da, dda = ca.evaluate(a), ca.evaluate(a, 1), ca.evaluate(a, 2)
        wb, db, ddb = cb.evaluate(b), cb.evaluate(b, 1), cb.evaluate(b, 2)
        r = za - wb
        g = np.array([r @ da, -(r @ db)])
        hess = np.array([[da @ da + r @ dda, -(da @ db)], [-(da @ db), db @ db - r @ ddb]])
        try:
            step = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 2 * h:
            break
        na, nb = a + step[0], b + step[1]
        if not admissible(na, nb):
            break
        nv = dist(na, nb)
        if nv > best * (1 + 1e-14) + 1e-300:
            break
        a, b, best = na, nb, nv
        if np.max(np.abs(step)) < 1e-14:
            break

    if same and torus_distance(a, b) - delta < 2 * h:
        # constraint may be active: minimize along eta = xi +- delta
        sign = 1.0 if np.mod(b - a, TWO_PI) < math.pi else -1.0
        a2, v = golden_section(lambda s: dist(s, s + sign * delta), a - 2 * h, a + 2 * h, tol=1e-12)
        if v < best:
            a, b, best = a2, a2 + sign * delta, v
    return a % TWO_PI, b % TWO_PI, best


def min_fold_distance(curves: Sequence[ClosedCurve], delta: float, *, factor: int = 4,
                      candidates: int = 6) -> DistanceWitness:
    """Minimum distance over delta-separated pairs (any pair on distinct curves).

    Grid search over ``factor`` samples per node, then local refinement of the
    best few well-separated grid candidates.  Ties resolve to the smallest
    ``(n, xi)`` lexicographically.
    """
    if delta <= 0.0 or delta >= math.pi:
        raise ParameterError(f"delta must lie in (0, pi), got {delta}")
    pts, _, owner, par = _sample_grid(curves, factor)
    total = pts.shape[0]
    cand: list[tuple[float, int, int]] = []
    chunk = 512
    for r0 in range(0, total, chunk):
        rs = slice(r0, min(total, r0 + chunk))
        dist = np.linalg.norm(pts[rs, None, :] - pts[None, :, :], axis=2)
        rows = np.arange(r0, rs.stop)[:, None]
        cols = np.arange(total)[None, :]
        same = owner[rs, None] == owner[None, :]
        ok = (cols > rows) & (~same | (torus_distance(par[rs, None], par[None, :]) >= delta))
        dist = np.where(ok, dist, np.inf)
        flat = dist.ravel()
        k = min(flat.size, candidates * 40)
        idx = np.argpartition(flat, k - 1)[:k] if k < flat.size else np.arange(flat.size)
        for q in idx:
            if np.isfinite(flat[q]):
                cand.append((float(flat[q]), r0 + int(q) // total, int(q) % total))
    if not cand:
        raise ParameterError("all point pairs are excluded by delta")
    cand.sort()
    # keep well separated candidates
    chosen: list[tuple[float, int, int]] = []
    for d, r, c in cand:
        if any(owner[r] == owner[r2] and owner[c] == owner[c2]
               and torus_distance(par[r], par[r2]) < 4 * TWO_PI / (curves[owner[r]].n * factor)
               and torus_distance(par[c], par[c2]) < 4 * TWO_PI / (curves[owner[c]].n * factor)
               for _, r2, c2 in chosen):
            continue
        chosen.append((d, r, c))
        if len(chosen) >= candidates:
            break
    best = None
    for d0, r, c in chosen:
        n, j = int(owner[r]), int(owner[c])
        h = TWO_PI / (max(curves[n].n, curves[j].n) * factor)
        xi, eta, val = _refine_pair(curves, n, float(par[r]), j, float(par[c]), delta, h)
        if val > d0:
            xi, eta, val = float(par[r]), float(par[c]), d0
        key = (val, n, xi)
        if best is None or key < best[0]:
            best = (key, n, xi, j, eta)
    (val, _, _), n, xi, j, eta = best
    pz, qz = curves[n].evaluate(xi), curves[j].evaluate(eta)
    val = float(np.linalg.norm(pz - qz))
    normal = tuple(float(v) for v in (pz - qz) / val) if val > 0 else (0.0, 0.0)
    return DistanceWitness(val, ((n, xi), (j, eta)), normal, total)


# ---------------------------------------------------------------------------
# local graph
# ---------------------------------------------------------------------------

def local_graph(curve: ClosedCurve, xi: float, v, r1: float, *, samples: int = 201) -> GraphFunction:
    """Write the curve near ``z(xi)`` as ``z(xi) + h v + f(h) v^perp`` for ``|h| <= r1``."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    vp = perp(v)
    base = curve.evaluate(xi)
    dz = curve.evaluate(xi, 1)
    if abs(dz @ v) < 0.5 * np.linalg.norm(dz):
        raise ParameterError("axis is too far from the tangent: need |z'.v| >= |z'|/2")
    sign = 1.0 if dz @ v > 0 else -1.0
    step = TWO_PI / (curve.n * 16)

    def walk(direction):
        s = 0.0
        reach = 0.0
        while True:
            s_next = s + step
            if s_next > math.pi:
                return s, reach
            pts = curve.evaluate(xi + direction * np.linspace(s, s_next, 5))
            tang = curve.evaluate(xi + direction * np.linspace(s, s_next, 5), 1)
            proj = (pts - base) @ v
            if np.any(sign * (tang @ v) <= 0.0):
                return s, reach
            if np.max(np.abs(proj)) >= r1:
                return s_next, r1
            s, reach = s_next, float(np.max(np.abs(proj)))

    s_fwd, reach_f = walk(1.0)
    s_bwd, reach_b = walk(-1.0)
    if reach_f < r1 or reach_b < r1:
        raise GraphWindowError("curve is not a graph over the axis on the requested window", min(reach_f, reach_b))

    def h_of(s):
        return float((curve.evaluate(xi + s) - base) @ v)

    hs = np.linspace(-r1, r1, samples)
    fs = np.empty_like(hs)
    # parameter offsets for each h: monotone map, solved by bisection + Newton
    lo_s, hi_s = -s_bwd, s_fwd
    for k, h in enumerate(hs):
        target = h
        a, b = (lo_s, hi_s) if sign > 0 else (hi_s, lo_s)
        # h_of is increasing in s when sign>0
        lo, hi = min(a, b), max(a, b)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if (h_of(mid) - target) * sign > 0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-15:
                break
        s = 0.5 * (lo + hi)
        for _ in range(3):
            d1 = curve.evaluate(xi + s, 1) @ v
            s -= (h_of(s) - target) / d1
        fs[k] = float((curve.evaluate(xi + s) - base) @ vp)
    fs[samples // 2] = 0.0 if samples % 2 == 1 else fs[samples // 2]
    slope = float((dz @ vp) / (dz @ v))
    return GraphFunction(base, v, hs, fs, slope, (float(s_bwd), float(s_fwd)))


# ---------------------------------------------------------------------------
# tangent angles
# ---------------------------------------------------------------------------

def tangent_angle_ratio(curves: Sequence[ClosedCurve], gamma: float, r_max: float, *,
                        delta: float | None = None, factor: int = 2) -> TangentAngleResult:
    """Empirical constant B: max |tan theta| / |z(xi) - z(eta)|^(gamma/(1+gamma)) over close admissible pairs."""
    if not (0.0 < gamma <= 1.0):
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    if r_max <= 0.0:
        raise ParameterError("r_max must be positive")
    if delta is None:
        delta = fold_delta(curves, gamma)
    pts, ders, owner, par = _sample_grid(curves, factor)
    total = pts.shape[0]
    expo = gamma / (1.0 + gamma)
    best, count = 0.0, 0
    chunk = 512
    for r0 in range(0, total, chunk):
        rs = slice(r0, min(total, r0 + chunk))
        dist = np.linalg.norm(pts[rs, None, :] - pts[None, :, :], axis=2)
        rows = np.arange(r0, rs.stop)[:, None]
        cols = np.arange(total)[None, :]
        same = owner[rs, None] == owner[None, :]
        ok = (cols > rows) & (dist > 0.0) & (dist <= r_max)
        ok &= ~same | (torus_distance(par[rs, None], par[None, :]) >= delta)
        if not ok.any():
            continue
        cr = np.abs(cross2(ders[rs, None, :], ders[None, :, :]))
        dt = np.abs(np.sum(ders[rs, None, :] * ders[None, :, :], axis=2))
        with np.errstate(divide="ignore", invalid="ignore"):
            tan = np.where(dt > 0.0, cr / dt, np.inf)
            q = np.where(ok, tan / dist ** expo, 0.0)
        count += int(ok.sum())
        best = max(best, float(q.max()))
    return TangentAngleResult(best, count == 0, count)
