"""Built-in initial boundaries. Every builder returns a constant-speed ClosedCurve."""

from __future__ import annotations

import numpy as np

from .curve import TWO_PI, ClosedCurve, _spline_resample, reparameterize_constant_speed
from .errors import ParameterError

DEFAULT_NODES = 256


def _polar(radius, center, nodes: int, angle: float = 0.0) -> ClosedCurve:
    # dense polar samples, spline-resampled to uniform arc length, then polished spectrally
    dense = 16 * nodes
    phi = TWO_PI * np.arange(dense) / dense
    r = radius(phi)
    pts = np.stack([r * np.cos(phi + angle), r * np.sin(phi + angle)], axis=1) + np.asarray(center, dtype=float)
    return reparameterize_constant_speed(_spline_resample(pts, nodes))


def circle(center=(0.0, 0.0), r: float = 1.0, nodes: int = DEFAULT_NODES) -> ClosedCurve:
    if r <= 0.0:
        raise ParameterError("circle radius must be positive")
    phi = TWO_PI * np.arange(nodes) / nodes
    pts = np.asarray(center, dtype=float) + r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return ClosedCurve.from_nodes(pts)


def ellipse(a: float, b: float, angle: float = 0.0, center=(0.0, 0.0), nodes: int = DEFAULT_NODES) -> ClosedCurve:
    """Semi-axes ``a`` (along the rotated x-axis) and ``b``."""
    if a <= 0.0 or b <= 0.0:
        raise ParameterError("ellipse semi-axes must be positive")
    t = TWO_PI * np.arange(nodes) / nodes
    c, s = np.cos(angle), np.sin(angle)
    x, y = a * np.cos(t), b * np.sin(t)
    pts = np.stack([c * x - s * y, s * x + c * y], axis=1) + np.asarray(center, dtype=float)
    return reparameterize_constant_speed(pts)


def fourier(coefficients, r0: float = 1.0, center=(0.0, 0.0), nodes: int = DEFAULT_NODES) -> ClosedCurve:
    """Polar curve r(phi) = r0 + sum a_k cos(k phi) + b_k sin(k phi), coefficients as [k, a_k, b_k] triples."""
    coefficients = [tuple(c) for c in coefficients]

    def radius(phi):
        r = np.full_like(phi, r0)
        for k, a, b in coefficients:
            r += a * np.cos(k * phi) + b * np.sin(k * phi)
        return r

    if radius(np.linspace(0.0, TWO_PI, 4096)).min() <= 0.0:
        raise ParameterError("fourier radius must stay positive")
    return _polar(radius, center, nodes)


def notch(depth: float = 0.5, width: float = 0.5, center=(0.0, 0.0), angle: float = 0.0,
          nodes: int = 2 * DEFAULT_NODES) -> ClosedCurve:
    """Unit disk with a narrow inward notch at ``angle``; the notch walls form two nearby folds."""
    if not (0.0 < depth < 1.0) or width <= 0.0:
        raise ParameterError("notch needs depth in (0, 1) and positive width")
    return _polar(lambda phi: 1.0 - depth * np.exp(-(1.0 - np.cos(phi)) / width ** 2), center, nodes, angle)


def two_fold(depth: float = 0.5, width: float = 0.5, nodes: int = 2 * DEFAULT_NODES) -> list[ClosedCurve]:
    return [notch(depth, width, nodes=nodes)]


def three_fold(depth: float = 0.5, width: float = 0.5, nodes: int = 2 * DEFAULT_NODES) -> list[ClosedCurve]:
    """Notched disk plus a thin ellipse lodged in the notch: three boundary segments close together."""
    outer = notch(depth, width, nodes=nodes)
    tip = 1.0 - depth
    length = 0.5 * depth
    thickness = 0.2 * width
    inner = ellipse(length / 2.0, thickness, center=(tip + 0.6 * depth, 0.0), nodes=nodes)
    return [outer, inner]


BUILTINS = {
    "circle": circle,
    "ellipse": ellipse,
    "fourier": fourier,
    "two_fold": two_fold,
    "three_fold": three_fold,
}


def build(spec: dict) -> list[ClosedCurve]:
    """Curves for one patch spec ``{"shape": name, ...parameters}``; node files use ``{"nodes": [...]}``."""
    spec = dict(spec)
    if "nodes_xy" in spec:
        return [reparameterize_constant_speed(np.asarray(spec["nodes_xy"], dtype=float))]
    shape = spec.pop("shape")
    spec.pop("strength", None)
    out = BUILTINS[shape](**spec)
    return out if isinstance(out, list) else [out]
