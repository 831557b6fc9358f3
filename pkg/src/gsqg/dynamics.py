"""Time stepping of patch boundaries by node advection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import shapes
from .curve import ClosedCurve, find_segment_intersection, fold_delta, redistribute_arclength, torus_distance
from .diagnostics import MetricsSeries, collect_metrics
from .errors import GsqgError, ParameterError, SplashDetected, StiffnessError, UnsupportedModeError
from .velocity import HALF_PLANE, PatchFamily, QuadratureSpec, node_velocities

MAX_HALVINGS = 8


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-2
    scheme: str = "rk4"
    redistribute_every: int = 10
    cfl_guard: float = 0.5

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ParameterError("dt must be positive")
        if self.scheme not in ("rk4", "rk2"):
            raise ParameterError(f"scheme must be rk4 or rk2, got {self.scheme!r}")
        if self.redistribute_every < 0:
            raise ParameterError("redistribute_every must be >= 0 (0 disables)")
        if not (0.0 < self.cfl_guard <= 1.0):
            raise ParameterError("cfl_guard must lie in (0, 1]")


@dataclass(frozen=True)
class SimulationState:
    family: PatchFamily
    time: float = 0.0
    step_index: int = 0
    areas0: tuple[float, ...] = field(default=())

    @classmethod
    def initial(cls, family: PatchFamily) -> "SimulationState":
        return cls(family, 0.0, 0, tuple(c.area for c in family.curves))


def patch_area(curve: ClosedCurve) -> float:
    """Signed area 1/2 oint (z1 dz2 - z2 dz1) of the interpolated boundary."""
    return curve.area


def _shifted(family: PatchFamily, base: list[np.ndarray], incr: list[np.ndarray], c: float) -> PatchFamily:
    return family.with_curves([ClosedCurve(b + c * k) for b, k in zip(base, incr)])


def _rk_stage(family: PatchFamily, dt: float, scheme: str, quad: QuadratureSpec, k1: list[np.ndarray]):
    base = [c.nodes for c in family.curves]
    if scheme == "rk2":
        k2 = node_velocities(_shifted(family, base, k1, 0.5 * dt), quad)
        return [b + dt * v for b, v in zip(base, k2)]
    k2 = node_velocities(_shifted(family, base, k1, 0.5 * dt), quad)
    k3 = node_velocities(_shifted(family, base, k2, 0.5 * dt), quad)
    k4 = node_velocities(_shifted(family, base, k3, dt), quad)
    return [b + dt / 6.0 * (a + 2.0 * p + 2.0 * q + r) for b, a, p, q, r in zip(base, k1, k2, k3, k4)]


def step(state: SimulationState, cfg: StepperConfig, quad: QuadratureSpec = QuadratureSpec()) -> SimulationState:
    """Advance every node by ``cfg.dt``.

    When the largest node displacement would exceed ``cfl_guard`` times the
    smallest node spacing, the step is split into 2^k equal substeps
    (k <= 8), so the state always lands on the requested time.
    """
    family = state.family
    if family.alpha >= 0.5:
        raise UnsupportedModeError("boundary evolution needs alpha < 1/2")
    if not family.curves:
        return replace(state, time=state.time + cfg.dt, step_index=state.step_index + 1)
    v0 = node_velocities(family, quad)
    speed = max(float(np.linalg.norm(v, axis=1).max()) for v in v0)
    spacing = min(c.min_spacing for c in family.curves)
    halvings = 0
    while speed * cfg.dt / 2 ** halvings > cfg.cfl_guard * spacing:
        halvings += 1
        if halvings > MAX_HALVINGS:
            raise StiffnessError(
                f"displacement {speed * cfg.dt:.3e} needs more than {MAX_HALVINGS} halvings at spacing {spacing:.3e}"
            )
    sub = cfg.dt / 2 ** halvings
    k1 = v0
    for s in range(2 ** halvings):
        if s > 0:
            k1 = node_velocities(family, quad)
        nodes = _rk_stage(family, sub, cfg.scheme, quad, k1)
        family = family.with_curves([ClosedCurve(n) for n in nodes])
    new_index = state.step_index + 1
    hit = find_segment_intersection(family.curves)
    if hit is not None:
        raise SplashDetected(f"boundary segments intersect after step {new_index}: {hit}", hit, new_index)
    if family.domain == HALF_PLANE:
        for k, c in enumerate(family.curves):
            if c.nodes[:, 1].min() <= 0.0:
                raise SplashDetected(f"patch {k} reached the wall at step {new_index}", (k, "wall"), new_index)
    return SimulationState(family, new_index * cfg.dt, new_index, state.areas0)


def redistribute(state: SimulationState) -> SimulationState:
    """Uniform arc-length resampling of every boundary through its interpolant."""
    curves = [redistribute_arclength(c) for c in state.family.curves]
    return replace(state, family=state.family.with_curves(curves))


# ---------------------------------------------------------------------------
# scenario runs
# ---------------------------------------------------------------------------

def genuine_approach(witness, delta: float) -> bool:
    """False for a same-curve witness sitting on the separation constraint: that is a chord, not a fold."""
    (n, xi), (j, eta) = witness.pair
    if n != j:
        return True
    return torus_distance(xi, eta) > delta * (1.0 + 1e-6) + 1e-9


def build_family(scenario) -> PatchFamily:
    curves, strengths = [], []
    for spec in scenario.patches:
        built = shapes.build(spec)
        curves.extend(built)
        strengths.extend([float(spec.get("strength", 1.0))] * len(built))
    family = PatchFamily(tuple(curves), tuple(strengths), scenario.alpha, scenario.domain)
    family.validate()
    return family


def scenario_delta(scenario, family: PatchFamily) -> float:
    if scenario.delta_override is not None:
        return float(scenario.delta_override)
    return fold_delta(family.curves, scenario.gamma)


def steps_per_output(scenario) -> int:
    ratio = scenario.outputs.interval / scenario.stepper.dt
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise ParameterError("outputs.interval must be a positive integer multiple of stepper.dt")
    return k


def run(scenario, *, out_dir: str | Path | None = None, resume: dict | None = None,
        on_output=None) -> MetricsSeries:
    """Step a scenario to its horizon, collecting metrics every output interval.

    ``resume`` is a loaded checkpoint (see :mod:`gsqg.checkpoint`); the run
    then continues from its state and recorded series.  ``on_output`` is
    called with ``(state, series)`` after each output.
    """
    from .checkpoint import save_checkpoint

    if scenario.alpha >= 0.5:
        raise UnsupportedModeError("simulation needs alpha < 1/2")
    cfg = scenario.stepper
    quad = scenario.quadrature
    if resume is not None:
        state, series = resume["state"], resume["series"]
        delta = series.delta
    else:
        if not scenario.patches:
            return MetricsSeries(halt_reason="empty", alpha=scenario.alpha, gamma=scenario.gamma)
        family = build_family(scenario)
        state = SimulationState.initial(family)
        delta = scenario_delta(scenario, family)
        series = MetricsSeries(alpha=scenario.alpha, gamma=scenario.gamma, delta=delta)
    every = steps_per_output(scenario)
    total = int(round(scenario.horizon / cfg.dt))
    r_max = scenario.diagnostics.get("tangent_rmax", 0.5)

    def output() -> bool:
        met = collect_metrics(state, scenario.gamma, delta, quad, r_max=r_max)
        series.records.append(met)
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "checkpoint.json", state, series, scenario)
        if on_output is not None:
            on_output(state, series)
        spacing = max(c.max_spacing for c in state.family.curves)
        if met.m < 2.0 * spacing and genuine_approach(met.witness, delta):
            series.halt_reason = f"splash: m={met.m:.6g} below twice the node spacing at step {state.step_index}"
            return False
        return True

    if resume is None and not output():
        return series
    while state.step_index < total:
        try:
            state = step(state, cfg, quad)
        except SplashDetected as exc:
            series.halt_reason = f"splash: {exc}"
            return series
        except GsqgError as exc:
            exc.step_index = state.step_index
            raise
        if cfg.redistribute_every and state.step_index % cfg.redistribute_every == 0:
            state = redistribute(state)
        if state.step_index % every == 0 or state.step_index == total:
            if not output():
                return series
    series.halt_reason = "horizon"
    return series
