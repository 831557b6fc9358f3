"""Per-time splash diagnostics and post-run analyses."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .curve import (
    DistanceWitness,
    HolderEstimate,
    arc_chord_ratio,
    holder_c1gamma_norm,
    min_fold_distance,
    tangent_angle_ratio,
)
from .errors import InsufficientDataError
from .velocity import QuadratureSpec, velocity_contour

CSV_FIXED = ["time", "m", "arc_chord", "c1gamma_norm", "min_speed", "approach_rate", "approach_bound"]


def criterion_gamma(alpha: float) -> tuple[float, bool]:
    """Exponent 2a/(1-2a) of the regularity criterion, clamped to 1 (flag True when clamped)."""
    g = 2.0 * alpha / (1.0 - 2.0 * alpha)
    return (1.0, True) if g > 1.0 else (g, False)


@dataclass(frozen=True)
class SplashMetrics:
    time: float
    step_index: int
    m: float
    arc_chord: float
    c1gamma: HolderEstimate
    c1gamma_scenario: HolderEstimate
    min_speed: float
    witness: DistanceWitness
    approach_rate: float
    areas: tuple[float, ...]
    tangent_ratio: float = 0.0
    gamma_clamped: bool = False

    @property
    def approach_bound(self) -> float:
        return approach_bound_check(self)

    def csv_row(self) -> list[str]:
        vals = [self.time, self.m, self.arc_chord, self.c1gamma.c1_norm, self.min_speed,
                self.approach_rate, self.approach_bound, *self.areas]
        return [f"{v:.12g}" for v in vals]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = self.witness.as_dict()
        d["areas"] = list(self.areas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SplashMetrics":
        w = d["witness"]
        (n, xi), (j, eta) = w["pair"]
        witness = DistanceWitness(w["distance"], ((int(n), xi), (int(j), eta)), tuple(w["normal"]), w["resolution"])
        return cls(
            time=d["time"], step_index=d["step_index"], m=d["m"], arc_chord=d["arc_chord"],
            c1gamma=HolderEstimate(**d["c1gamma"]), c1gamma_scenario=HolderEstimate(**d["c1gamma_scenario"]),
            min_speed=d["min_speed"], witness=witness, approach_rate=d["approach_rate"],
            areas=tuple(d["areas"]), tangent_ratio=d["tangent_ratio"], gamma_clamped=d["gamma_clamped"],
        )


@dataclass
class MetricsSeries:
    records: list[SplashMetrics] = field(default_factory=list)
    halt_reason: str = ""
    alpha: float = float("nan")
    gamma: float = float("nan")
    delta: float = float("nan")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    @property
    def m(self) -> np.ndarray:
        return np.array([r.m for r in self.records])

    def to_csv(self) -> str:
        n_areas = len(self.records[0].areas) if self.records else 0
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIXED + [f"area_{k + 1}" for k in range(n_areas)])
        for r in self.records:
            writer.writerow(r.csv_row())
        return buf.getvalue()


def collect_metrics(state, gamma: float, delta: float, quad: QuadratureSpec = QuadratureSpec(), *,
                    r_max: float = 0.5) -> SplashMetrics:
    """All diagnostics of ``state`` (a SimulationState) at scenario exponent ``gamma`` and separation ``delta``."""
    family = state.family
    curves = list(family.curves)
    witness = min_fold_distance(curves, delta)
    arc, _ = arc_chord_ratio(curves)
    g_crit, clamped = criterion_gamma(family.alpha)
    crit = [holder_c1gamma_norm(c, g_crit) for c in curves]
    scen = [holder_c1gamma_norm(c, gamma) for c in curves]
    worst = max(crit, key=lambda e: e.c1_norm)
    worst_s = max(scen, key=lambda e: e.c1_norm)
    min_speed = min(e.min_speed for e in crit)
    (n, xi), (j, eta) = witness.pair
    rate = 0.0
    if witness.distance > 0.0:
        u1 = velocity_contour(curves[n].evaluate(xi), family, quad, on_boundary=(n, xi))
        u2 = velocity_contour(curves[j].evaluate(eta), family, quad, on_boundary=(j, eta))
        rate = float(np.dot(witness.normal, u1 - u2))
    tan = tangent_angle_ratio(curves, gamma, r_max, delta=delta)
    return SplashMetrics(
        time=float(state.time), step_index=int(state.step_index), m=witness.distance, arc_chord=arc,
        c1gamma=worst, c1gamma_scenario=worst_s, min_speed=min_speed, witness=witness,
        approach_rate=rate, areas=tuple(c.area for c in curves), tangent_ratio=tan.value, gamma_clamped=clamped,
    )


def approach_bound_check(metrics: SplashMetrics) -> float:
    """Empirical constant C in m' >= -C m: positive part of the approach speed over m."""
    if metrics.m <= 0.0:
        return math.inf
    return max(0.0, -metrics.approach_rate) / metrics.m


@dataclass(frozen=True)
class GronwallFit:
    window: tuple[float, float]
    rate: float
    residual: float
    samples: int
    exponential: bool


def gronwall_fit(series, window: tuple[float, float] | None = None, *, residual_tol: float = 1e-3) -> GronwallFit:
    """Least-squares fit of log m(t) by a line on ``window``; rate = -slope.

    ``series`` is a MetricsSeries or a pair of arrays (t, m).
    """
    if isinstance(series, MetricsSeries):
        t, m = series.times, series.m
    else:
        t, m = (np.asarray(a, dtype=float) for a in series)
    if window is None:
        window = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
    sel = (t >= window[0]) & (t <= window[1])
    t, m = t[sel], m[sel]
    if t.size < 8:
        raise InsufficientDataError(f"gronwall fit needs at least 8 samples in the window, got {t.size}")
    if np.any(m <= 0.0):
        raise InsufficientDataError("m must be positive on the fit window")
    y = np.log(m)
    A = np.stack([np.ones_like(t), t - t[0]], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    return GronwallFit(window=(float(window[0]), float(window[1])), rate=float(-coef[1]), residual=resid,
                       samples=int(t.size), exponential=resid <= residual_tol)


@dataclass
class RegularityReport:
    alpha: float
    tag: str
    entries: list[dict]
    verdict: str

    def lines(self) -> list[str]:
        out = [f"alpha={self.alpha:.12g} {self.tag}".rstrip()]
        for e in self.entries:
            rate = "nan" if e["gronwall_rate"] is None else f"{e['gronwall_rate']:.12g}"
            out.append(f"t={e['time']:.12g} c1gamma={e['c1gamma_norm']:.12g} arc_chord={e['arc_chord']:.12g} "
                       f"gronwall_rate={rate}")
        out.append(f"verdict: {self.verdict}")
        return out


def regularity_report(series: MetricsSeries, alpha: float, *, cap_factor: float = 10.0,
                      trailing: int = 8) -> RegularityReport:
    """Evidence report for the regularity criterion along a run.

    The norm cap is ``cap_factor`` times the initial criterion norm; the
    envelope is m(0) exp(-C t) with C twice the largest observed approach
    bound.
    """
    tag = "" if alpha <= 0.25 else "outside theorem range"
    recs = series.records
    entries = []
    for k, r in enumerate(recs):
        rate = None
        if k + 1 >= trailing:
            t = np.array([q.time for q in recs[k + 1 - trailing:k + 1]])
            mm = np.array([q.m for q in recs[k + 1 - trailing:k + 1]])
            if np.all(mm > 0.0):
                rate = gronwall_fit((t, mm)).rate
        entries.append({"time": r.time, "c1gamma_norm": r.c1gamma.c1_norm, "arc_chord": r.arc_chord,
                        "gronwall_rate": rate})
    if not recs:
        return RegularityReport(alpha, tag, entries, "consistent with the regularity criterion (empty run)")
    cap = cap_factor * recs[0].c1gamma.c1_norm
    c_hat = 2.0 * max(approach_bound_check(r) for r in recs)
    t0, m0 = recs[0].time, recs[0].m
    first_norm = next((k for k, r in enumerate(recs) if r.c1gamma.c1_norm > cap), None)
    first_env = next((k for k, r in enumerate(recs)
                      if r.m < m0 * math.exp(-c_hat * (r.time - t0)) * (1.0 - 1e-9)), None)
    splash = series.halt_reason.startswith("splash")
    if first_norm is None and first_env is None and not splash:
        verdict = "consistent with the regularity criterion"
    elif first_norm is not None and (first_env is None or first_norm <= first_env):
        verdict = "flag: norm blow-up precedes/accompanies approach"
    elif first_env is not None:
        verdict = "flag: m(t) fell below the exponential envelope before any norm blow-up"
    else:
        verdict = "flag: run halted by splash/entanglement without recorded norm blow-up"
    return RegularityReport(alpha, tag, entries, verdict)
