"""Invariant suite run by ``gsqg verify`` on a scenario's initial patches."""

from __future__ import annotations

import numpy as np

from .curve import find_segment_intersection
from .errors import GsqgError
from .velocity import HALF_PLANE, PatchFamily, QuadratureSpec, normal_velocity_pv, velocity_area_oracle, velocity_contour


def _check(name: str, passed: bool, value: float, limit: float) -> dict:
    return {"name": name, "passed": bool(passed), "value": float(value), "limit": float(limit)}


def _probe_points(family: PatchFamily, count: int) -> np.ndarray:
    """Deterministic points on rings just outside and inside each boundary, and at patch centroids."""
    pts = []
    for c in family.curves:
        centre = c.nodes.mean(axis=0)
        pts.append(centre)
        idx = np.linspace(0, c.n, count, endpoint=False).astype(int)
        for k in idx:
            off = c.nodes[k] - centre
            pts.append(centre + 1.3 * off)
    pts = np.array(pts)
    if family.domain == HALF_PLANE:
        pts = pts[pts[:, 1] >= 0.0]
    return pts


def invariant_suite(family: PatchFamily, quad: QuadratureSpec = QuadratureSpec(), *, probes: int = 4) -> list[dict]:
    results = []
    results.append(_check("boundaries simple and disjoint", find_segment_intersection(family.curves) is None, 0, 0))
    for k, c in enumerate(family.curves):
        results.append(_check(f"patch {k} counterclockwise", c.area > 0.0, c.area, 0.0))
        results.append(_check(f"patch {k} constant speed", c.speed_variation() < 1e-8, c.speed_variation(), 1e-8))
    # the oracle accepts error estimates up to 1e3 x tolerance
    limit = 10.0 * (quad.tolerance + 1e3 * quad.tolerance)
    worst = 0.0
    try:
        for x in _probe_points(family, probes):
            worst = max(worst, float(np.max(np.abs(velocity_contour(x, family, quad)
                                                   - velocity_area_oracle(x, family, quad)))))
        results.append(_check("contour route matches area oracle", worst <= limit, worst, limit))
    except GsqgError as exc:
        results.append({"name": "contour route matches area oracle", "passed": False, "error": str(exc)})
    if family.domain == HALF_PLANE:
        wall = np.linspace(-3.0, 3.0, 13)
        u2 = max(abs(float(velocity_contour(np.array([x, 0.0]), family, quad)[1])) for x in wall)
        results.append(_check("wall normal velocity vanishes", u2 <= 1e-8 + quad.tolerance, u2, 1e-8 + quad.tolerance))
    c = family.curves[0] if family.curves else None
    if c is not None:
        xi = float(c.params[c.n // 3])
        x = c.evaluate(xi)
        dz = c.evaluate(xi, 1)
        n = np.array([dz[1], -dz[0]]) / np.linalg.norm(dz)
        un = normal_velocity_pv(0, xi, family, quad)
        full = float(n @ velocity_contour(x, family, quad, on_boundary=(0, xi)))
        results.append(_check("principal-value normal velocity matches contour", abs(un - full) <= 1e-6,
                              abs(un - full), 1e-6))
    return results
