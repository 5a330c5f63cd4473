"""Twin experiments: reference runs, assimilated runs, error metrics.

A twin experiment integrates a reference solution from a known initial
condition, samples it on a coarse lattice, and feeds those samples to a
second run started from the wrong (zero) state. Reference states are never
stored: the reference is advanced in lockstep with one or more assimilated
runs, which also lets several assimilation set-ups share a single reference
integration.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .assimilation import (
    Interpolant,
    Mechanism,
    NoiseModel,
    NudgeProvider,
    NudgeSpec,
    ObservationPolicy,
    ObservationSet,
    extract_observations,
)
from .errors import BlowUpError, ConfigurationError
from .grid import GridSpec, State
from .solver import NudgeTendency, SolverParams, StepperMemory, step

RRMSE_FLOOR = 1e-14
VARIABLES = ("theta", "u", "v")


# -- initial conditions -------------------------------------------------------

@dataclass(frozen=True)
class InitialCondition:
    """``reference``: theta = sin(2 pi x + 2000 pi y), fluid at rest.
    ``zero``: everything zero.
    ``shear``: u = amplitude * sin(wavenumber * y) inside the band, else 0.
    """

    kind: str = "zero"
    amplitude: float = 0.5
    wavenumber: float = 2 * math.pi / 20
    band: tuple = (0.4, 0.6)

    def __post_init__(self):
        if self.kind not in ("reference", "zero", "shear"):
            raise ConfigurationError(f"unknown initial condition {self.kind!r}", key="ic")

    def build(self, grid: GridSpec) -> State:
        if self.kind == "zero":
            return State.zeros(grid)
        if self.kind == "reference":
            x, y = np.meshgrid(grid.x_centers, grid.y_centers)
            return State.from_interior(grid, theta=np.sin(2 * np.pi * x + 2000 * np.pi * y))
        y = grid.y_centers
        lo, hi = self.band
        profile = np.where((y >= lo) & (y <= hi), self.amplitude * np.sin(self.wavenumber * y), 0.0)
        return State.from_interior(grid, u=np.repeat(profile[:, None], grid.nx, axis=1))


@dataclass(frozen=True)
class ScenarioConfig:
    """One complete twin experiment."""

    name: str = "scenario"
    grid: GridSpec = GridSpec()
    params: SolverParams = SolverParams()
    reference_ic: InitialCondition = InitialCondition("reference")
    assimilated_ic: InitialCondition = InitialCondition("zero")
    policy: ObservationPolicy = ObservationPolicy(10)
    spec: NudgeSpec = NudgeSpec()
    noise: NoiseModel = NoiseModel()
    nsteps: int = 3000
    snapshot_steps: tuple = ()
    decay_window: tuple = (2.0, 20.0)

    def __post_init__(self):
        if self.nsteps < 1:
            raise ConfigurationError(f"nsteps must be >= 1, got {self.nsteps}", key="nsteps")
        self.policy.validate(self.grid)
        object.__setattr__(self, "snapshot_steps", tuple(sorted(set(self.snapshot_steps))))
        for s in self.snapshot_steps:
            if not 0 <= s <= self.nsteps:
                raise ConfigurationError(f"snapshot step {s} outside [0, {self.nsteps}]",
                                         key="snapshot_steps")

    @property
    def t_end(self) -> float:
        return self.nsteps * self.params.dt

    def reference_key(self) -> tuple:
        """Configs with equal keys share one reference trajectory."""
        return (self.grid, self.params, self.reference_ic, self.nsteps)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["policy"]["variables"] = sorted(self.policy.variables)
        d["policy"]["hold_mode"] = self.policy.hold_mode.value
        d["spec"]["mechanism"] = self.spec.mechanism.value
        d["spec"]["interpolant"] = self.spec.interpolant.value
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class Errors:
    theta: float
    u: float
    v: float
    degenerate: frozenset = frozenset()

    def __iter__(self):
        return iter((self.theta, self.u, self.v))

    def __getitem__(self, key):
        return getattr(self, key) if isinstance(key, str) else tuple(self)[key]


def rrmse(estimate: State, reference: State) -> Errors:
    """Relative L2 error per variable over its native locations.

    Where the reference norm vanishes, the absolute norm of the estimate is
    returned instead and the variable is listed in ``degenerate``.
    """
    if estimate.grid != reference.grid:
        raise ConfigurationError("estimate and reference live on different grids")
    vals, degenerate = [], set()
    for kind in VARIABLES:
        ref = reference.interior(kind)
        with np.errstate(over="ignore", invalid="ignore"):
            diff = np.linalg.norm(estimate.interior(kind) - ref)
            norm = np.linalg.norm(ref)
        if norm == 0.0:
            degenerate.add(kind)
            vals.append(float(diff))
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                vals.append(float(diff / norm))
    return Errors(*vals, frozenset(degenerate))


@dataclass
class RRMSESeries:
    """Per-step errors after each assimilation step (``nsteps`` records)."""

    t: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    flags: list
    initial: Optional[Errors] = None
    fits: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def values(self, var: str) -> np.ndarray:
        return getattr(self, var)

    def terminal(self, var: str, fraction: float = 0.1) -> float:
        """Mean over the final ``fraction`` of the records."""
        data = self.values(var)
        n = max(1, int(math.ceil(fraction * len(data))))
        return float(np.mean(data[-n:]))

    def first_time_below(self, var: str, threshold: float) -> Optional[float]:
        hits = np.nonzero(self.values(var) < threshold)[0]
        return float(self.t[hits[0]]) if hits.size else None


class _SeriesBuilder:
    def __init__(self, n):
        self.t = np.empty(n)
        self.data = {k: np.empty(n) for k in VARIABLES}
        self.flags = [""] * n
        self.initial = None

    def record(self, i, t, errs: Errors):
        self.t[i] = t
        for k in VARIABLES:
            self.data[k][i] = errs[k]
        self.flags[i] = ";".join(f"abs_{k}" for k in VARIABLES if k in errs.degenerate)

    def build(self) -> RRMSESeries:
        return RRMSESeries(self.t, self.data["theta"], self.data["u"], self.data["v"],
                           self.flags, self.initial)


def fit_decay_rate(series: RRMSESeries, window: Sequence[float]) -> dict:
    """Least-squares fit of log(error) = log(C) - beta * t on ``window``.

    Returns ``{var: (C, beta)}``. Errors below 1e-14 are clipped first.
    """
    ta, tb = window
    t = np.asarray(series.t)
    if len(t) == 0 or ta > tb or ta < t[0] - 1e-9 or tb > t[-1] + 1e-9:
        raise ConfigurationError(
            f"fit window [{ta}, {tb}] outside series range "
            f"[{t[0] if len(t) else 'nan'}, {t[-1] if len(t) else 'nan'}]", key="window")
    sel = (t >= ta - 1e-9) & (t <= tb + 1e-9)
    if sel.sum() < 2:
        raise ConfigurationError(f"fit window [{ta}, {tb}] holds fewer than two records",
                                 key="window")
    out = {}
    for var in VARIABLES:
        y = np.log(np.maximum(series.values(var)[sel], RRMSE_FLOOR))
        slope, intercept = np.polyfit(t[sel], y, 1)
        out[var] = (float(np.exp(intercept)), float(-slope))
    return out


# -- runs ---------------------------------------------------------------------

@dataclass
class Snapshot:
    step: int
    state: State
    memory: StepperMemory


@dataclass
class ReferenceTrajectory:
    config: ScenarioConfig
    observations: dict  # level -> ObservationSet
    snapshots: dict  # step -> Snapshot
    final: State


def _advance(state, memory, params, nudge, k, name):
    try:
        return step(state, params, memory, nudge, step_index=k)
    except BlowUpError as exc:
        exc.scenario = name
        exc.args = (f"[{name}] {exc.args[0]}",)
        raise


def run_reference(config: ScenarioConfig, snapshot_steps: Optional[Iterable[int]] = None,
                  store_observations: bool = True) -> ReferenceTrajectory:
    """Free run from ``reference_ic``; keeps coarse observations and snapshots.

    Observations are stored unperturbed at every arrival level in
    ``[0, nsteps)``; noise is applied by the consumer.
    """
    policy, params = config.policy, config.params
    wanted = set(config.snapshot_steps if snapshot_steps is None else snapshot_steps)
    state = config.reference_ic.build(config.grid)
    memory = StepperMemory()
    obs, snaps = {}, {}
    for k in range(0, config.nsteps + 1):
        if k in wanted:
            snaps[k] = Snapshot(k, state.copy(), memory)
        if k == config.nsteps:
            break
        if store_observations and policy.arrives(k):
            obs[k] = extract_observations(state, policy, k)
        state, memory = _advance(state, memory, params, None, k + 1, config.name)
    return ReferenceTrajectory(config, obs, snaps, state)


@dataclass
class TwinResult:
    config: ScenarioConfig
    series: RRMSESeries
    snapshots: dict = field(default_factory=dict)  # step -> (estimate, reference)
    seconds: float = 0.0


class _Twin:
    """One assimilated run attached to a shared reference."""

    def __init__(self, config: ScenarioConfig, current_reference: dict):
        self.config = config
        self.state = config.assimilated_ic.build(config.grid)
        self.memory = StepperMemory()
        policy = config.policy

        def stream(level):
            return extract_observations(current_reference["state"], policy, level)

        self.provider = NudgeProvider(policy, config.spec, config.noise, stream)
        self.builder = _SeriesBuilder(config.nsteps)
        self.snapshots = {}
        self.seconds = 0.0


def run_twin_batch(configs: Sequence[ScenarioConfig], observer=None) -> list:
    """Run several twins that share a reference trajectory, in lockstep.

    ``observer(k, reference, estimates)``, if given, sees the states after
    every step ``k``.
    """
    import time

    if not configs:
        return []
    key = configs[0].reference_key()
    for c in configs[1:]:
        if c.reference_key() != key:
            raise ConfigurationError(
                f"scenario {c.name!r} does not share the reference of {configs[0].name!r}")
    lead = configs[0]
    params, nsteps = lead.params, lead.nsteps
    ref = lead.reference_ic.build(lead.grid)
    ref_memory = StepperMemory()
    current = {"state": ref}
    twins = [_Twin(c, current) for c in configs]
    for tw in twins:
        tw.builder.initial = rrmse(tw.state, ref)
        if 0 in tw.config.snapshot_steps:
            tw.snapshots[0] = (tw.state.copy(), ref.copy())
    ref_name = "+".join(sorted({c.name for c in configs}))
    for k in range(1, nsteps + 1):
        current["state"] = ref
        new_ref = None
        for tw in twins:
            t0 = time.perf_counter()
            nudge = tw.provider(k, tw.state)
            tw.state, tw.memory = _advance(tw.state, tw.memory, params, nudge, k, tw.config.name)
            tw.seconds += time.perf_counter() - t0
        t0 = time.perf_counter()
        new_ref, ref_memory = _advance(ref, ref_memory, params, None, k, ref_name)
        ref_seconds = time.perf_counter() - t0
        ref = new_ref
        if observer is not None:
            observer(k, ref, [tw.state for tw in twins])
        for tw in twins:
            tw.builder.record(k - 1, k * params.dt, rrmse(tw.state, ref))
            tw.seconds += ref_seconds / len(twins)
            if k in tw.config.snapshot_steps:
                tw.snapshots[k] = (tw.state.copy(), ref.copy())
    results = []
    for tw in twins:
        series = tw.builder.build()
        series.fits = _safe_fit(series, tw.config.decay_window)
        results.append(TwinResult(tw.config, series, tw.snapshots, tw.seconds))
    return results


def _safe_fit(series, window):
    ta, tb = window
    tb = min(tb, float(series.t[-1]))
    try:
        return fit_decay_rate(series, (ta, tb))
    except ConfigurationError:
        return {}


def run_twin(config: ScenarioConfig) -> TwinResult:
    """Reference and assimilated runs in lockstep; RRMSE after every step."""
    return run_twin_batch([config])[0]


def run_grouped(configs: Sequence[ScenarioConfig], observer=None) -> list:
    """Run any list of configs, batching those that share a reference."""
    groups = {}
    for i, c in enumerate(configs):
        groups.setdefault(c.reference_key(), []).append(i)
    out = [None] * len(configs)
    for idx in groups.values():
        for i, res in zip(idx, run_twin_batch([configs[i] for i in idx], observer)):
            out[i] = res
    return out


# -- forecasts ----------------------------------------------------------------

@dataclass
class ForecastResult:
    t1: float
    horizon: float
    t: np.ndarray
    errors: dict  # var -> relative error on [t1, t1 + T]
    growth_rate: dict = field(default_factory=dict)

    def final(self, var: str) -> float:
        return float(self.errors[var][-1])


def _steps_for(time_value, dt, what):
    n = time_value / dt
    if abs(n - round(n)) > 1e-9 or n < 0:
        raise ConfigurationError(f"{what} = {time_value} is not a multiple of dt = {dt}")
    return int(round(n))


def run_forecasts(config: ScenarioConfig, t1_values: Sequence[float], horizon: float) -> list:
    """Assimilate up to each ``t1``, then predict freely for ``horizon``.

    A single assimilation run is branched at every ``t1``; each branch
    continues reference and estimate without nudging.
    """
    dt = config.params.dt
    n1s = sorted({_steps_for(t, dt, "t1") for t in t1_values})
    nT = _steps_for(horizon, dt, "T")
    if n1s[-1] + nT > config.nsteps:
        raise ConfigurationError(
            f"t1 + T = {(n1s[-1] + nT) * dt} exceeds the run length {config.t_end}", key="t1")
    params = config.params
    ref = config.reference_ic.build(config.grid)
    est = config.assimilated_ic.build(config.grid)
    ref_mem, est_mem = StepperMemory(), StepperMemory()
    current = {"state": ref}
    provider = NudgeProvider(config.policy, config.spec, config.noise,
                             lambda level: extract_observations(current["state"], config.policy, level))
    branches = {}
    for k in range(1, n1s[-1] + 1):
        current["state"] = ref
        nudge = provider(k, est)
        est, est_mem = _advance(est, est_mem, params, nudge, k, config.name)
        ref, ref_mem = _advance(ref, ref_mem, params, None, k, config.name)
        if k in n1s:
            branches[k] = (est.copy(), est_mem, ref.copy(), ref_mem)
    if 0 in n1s:
        branches[0] = (config.assimilated_ic.build(config.grid), StepperMemory(),
                       config.reference_ic.build(config.grid), StepperMemory())
    by_n1 = {}
    for n1, (e, em, r, rm) in branches.items():
        ts = [n1 * dt]
        errs = {v: [rrmse(e, r)[v]] for v in VARIABLES}
        for k in range(n1 + 1, n1 + nT + 1):
            e, em = _advance(e, em, params, None, k, config.name)
            r, rm = _advance(r, rm, params, None, k, config.name)
            ts.append(k * dt)
            err = rrmse(e, r)
            for v in VARIABLES:
                errs[v].append(err[v])
        t = np.array(ts)
        errs = {v: np.array(a) for v, a in errs.items()}
        growth = {}
        if nT > 0:
            for v in VARIABLES:
                y = np.log(np.maximum(errs[v], RRMSE_FLOOR))
                growth[v] = float(np.polyfit(t, y, 1)[0])
        by_n1[n1] = ForecastResult(n1 * dt, horizon, t, errs, growth)
    return [by_n1[_steps_for(t, dt, "t1")] for t in t1_values]


def run_forecast(config: ScenarioConfig, t1: float, horizon: float) -> ForecastResult:
    return run_forecasts(config, [t1], horizon)[0]


# -- scenario catalog ---------------------------------------------------------

NOMINAL_STRIDES = (20, 10, 5)
PANELS = {20: "left", 10: "middle", 5: "right"}
VARIABLE_SETS = {"T": ("temperature",), "V": ("velocity",), "TV": ("temperature", "velocity")}
PRESET_FIGURES = {"small": "fig2", "medium": "fig3", "large": "fig4"}


@dataclass(frozen=True)
class CatalogEntry:
    """A named group of twin runs, e.g. one panel of a figure."""

    name: str
    description: str
    members: tuple  # of (label, ScenarioConfig)

    def configs(self) -> list:
        return [c for _, c in self.members]


def scaled_stride(nominal_stride: int, grid: GridSpec) -> Optional[int]:
    """Stride giving the same coarse lattice on ``grid`` as on 200 x 100."""
    num = nominal_stride * grid.nx
    if num % 200:
        return None
    s = num // 200
    if s < 1 or grid.nx % s or grid.ny % s:
        return None
    return s


def scenario_catalog(grid: GridSpec = GridSpec(), params: SolverParams = SolverParams(),
                     nsteps: int = 3000) -> list:
    """All named experiment groups, scaled to ``grid`` and ``nsteps``.

    Strides keep the coarse lattices at 10x5, 20x10 and 40x20 points; a
    lattice the grid cannot realise drops the members that need it.
    """
    snap = (nsteps,)

    def cfg(name, stride, spec, *, k=1, hold="hold_last", variables=("temperature", "velocity"),
            ic="reference", noise=NoiseModel()):
        return ScenarioConfig(
            name=name, grid=grid, params=params,
            reference_ic=InitialCondition(ic), assimilated_ic=InitialCondition("zero"),
            policy=ObservationPolicy(stride, k, frozenset(variables), hold),
            spec=spec, noise=noise, nsteps=nsteps, snapshot_steps=snap)

    def mech_matrix(prefix, stride, preset, ic="reference", noise=NoiseModel(), tag=""):
        members = []
        for mech in ("cda", "na"):
            for vlabel, variables in VARIABLE_SETS.items():
                label = f"{tag}{mech}-{vlabel}"
                spec = NudgeSpec.from_preset(mech, preset, variables)
                members.append((label, cfg(f"{prefix}/{label}", stride, spec,
                                           variables=variables, ic=ic, noise=noise)))
        return members

    entries = []
    strides = {ps: scaled_stride(ps, grid) for ps in NOMINAL_STRIDES}

    for preset, fig in PRESET_FIGURES.items():
        for ps, panel in PANELS.items():
            s = strides[ps]
            if s is None:
                continue
            name = f"{fig}-{panel}"
            entries.append(CatalogEntry(
                name, f"CDA vs NA, {preset} preset, coarse lattice 1/{ps}",
                tuple(mech_matrix(name, s, preset))))

    for fig, k_obs in (("fig8", 10), ("fig9", 20)):
        for ps, panel in ((20, "left"), (10, "right")):
            s = strides[ps]
            if s is None:
                continue
            name = f"{fig}-{panel}"
            members = []
            for mech in ("na", "cda"):
                spec = NudgeSpec.from_preset(mech, "medium")
                members.append((mech.upper(), cfg(f"{name}/{mech.upper()}", s, spec, k=k_obs)))
                members.append((f"{mech.upper()}-Time",
                                cfg(f"{name}/{mech.upper()}-Time", s, spec, k=k_obs,
                                    hold="only_at_arrival")))
            entries.append(CatalogEntry(
                name, f"time frequency: observations every {k_obs} steps, lattice 1/{ps}",
                tuple(members)))

    s10 = strides[10]
    smooth_kinds = (Interpolant.NEAREST, Interpolant.LINEAR, Interpolant.CUBIC, Interpolant.SPLINE)
    if s10 is not None:
        members = tuple(
            (kind.value, cfg(f"fig10/{kind.value}", s10,
                             NudgeSpec.from_preset("cda", "medium", interpolant=kind), k=10))
            for kind in smooth_kinds)
        entries.append(CatalogEntry("fig10", "interpolant comparison, lattice 1/10, every 10 steps",
                                    members))
        members = []
        for k in (1, 10):
            for kind in smooth_kinds:
                label = f"cda-{kind.value}-k{k}"
                members.append((label, cfg(f"fig11/{label}", s10,
                                           NudgeSpec.from_preset("cda", "medium", interpolant=kind),
                                           k=k)))
            members.append((f"na-k{k}", cfg(f"fig11/na-k{k}", s10,
                                            NudgeSpec.from_preset("na", "medium"), k=k)))
        entries.append(CatalogEntry("fig11", "cost of CDA interpolants vs NA, lattice 1/10",
                                    tuple(members)))

    noise = NoiseModel(0.05, 2016)
    for preset, fig in (("small", "fig12"), ("large", "fig13")):
        for ps, panel in PANELS.items():
            s = strides[ps]
            if s is None:
                continue
            name = f"{fig}-{panel}"
            entries.append(CatalogEntry(
                name, f"5% multiplicative noise, {preset} preset, lattice 1/{ps}",
                tuple(mech_matrix(name, s, preset, noise=noise))))

    for preset, fig in (("small", "fig17"), ("large", "fig18")):
        members = []
        for ps in NOMINAL_STRIDES:
            s = strides[ps]
            if s is None:
                continue
            members.extend(mech_matrix(fig, s, preset, ic="shear", tag=f"s{ps}-"))
        if members:
            entries.append(CatalogEntry(
                fig, f"shear initial condition, {preset} preset, lattices 1/20, 1/10, 1/5",
                tuple(members)))
    return entries


def catalog_names(entries=None) -> list:
    return [e.name for e in (entries if entries is not None else scenario_catalog())]


def select(entries, pattern: str) -> list:
    from fnmatch import fnmatchcase

    return [e for e in entries if fnmatchcase(e.name, pattern)]


def with_overrides(config: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(config, **changes)
