"""Coarse observations, interpolants and nudging forcings (NA and CDA).

Observations are taken at native staggered locations on a lattice of
stride ``s``: index ``s*m + s//2`` along each axis, i.e. one sample in the
middle of every ``s x s`` block of cells. Interpolants are tensor products
of 1D operators, stored as dense matrices so that the fine field is
``Wy @ samples @ Wx.T``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError
from .grid import GridSpec, State
from .solver import NudgeTendency

VARIABLE_FIELDS = {"temperature": ("theta",), "velocity": ("u", "v")}
OBSERVED_KINDS = ("theta", "u", "v")


class Interpolant(str, enum.Enum):
    PIECEWISE_CONSTANT = "piecewise_constant"
    NEAREST = "nearest"
    LINEAR = "linear"
    CUBIC = "cubic"
    SPLINE = "spline"


MIN_POINTS = {
    Interpolant.PIECEWISE_CONSTANT: 1,
    Interpolant.NEAREST: 1,
    Interpolant.LINEAR: 2,
    Interpolant.CUBIC: 4,
    Interpolant.SPLINE: 4,
}


class HoldMode(str, enum.Enum):
    HOLD_LAST = "hold_last"
    ONLY_AT_ARRIVAL = "only_at_arrival"


class Mechanism(str, enum.Enum):
    CDA = "cda"
    NA = "na"


PRESETS = {
    # name: (CDA relaxation mu, NA nudging alpha)
    "large": (1.0, 3.5),
    "medium": (0.5, 2.5),
    "small": (0.1, 1.5),
}


@dataclass(frozen=True)
class ObservationPolicy:
    stride: int
    time_every: int = 1
    variables: frozenset = frozenset({"temperature", "velocity"})
    hold_mode: HoldMode = HoldMode.HOLD_LAST

    def __post_init__(self):
        object.__setattr__(self, "variables", frozenset(self.variables))
        object.__setattr__(self, "hold_mode", HoldMode(self.hold_mode))
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}", key="stride")
        if self.time_every < 1:
            raise ConfigurationError(
                f"time_every must be >= 1, got {self.time_every}", key="time_every"
            )
        if not self.variables or not self.variables <= set(VARIABLE_FIELDS):
            raise ConfigurationError(
                f"variables must be a nonempty subset of {sorted(VARIABLE_FIELDS)}", key="variables"
            )

    @property
    def kinds(self) -> tuple:
        return tuple(k for k in OBSERVED_KINDS
                     if any(k in VARIABLE_FIELDS[v] for v in self.variables))

    def validate(self, grid: GridSpec) -> None:
        if grid.nx % self.stride or grid.ny % self.stride:
            raise ConfigurationError(
                f"stride {self.stride} does not divide the {grid.nx}x{grid.ny} grid", key="stride"
            )

    def arrives(self, level: int) -> bool:
        return level % self.time_every == 0


@dataclass(frozen=True)
class NudgeSpec:
    mechanism: Mechanism = Mechanism.CDA
    mu_theta: float = 0.0
    mu_u: float = 0.0
    alpha_theta: float = 0.0
    alpha_u: float = 0.0
    interpolant: Interpolant = Interpolant.PIECEWISE_CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "interpolant", Interpolant(self.interpolant))
        for name in ("mu_theta", "mu_u", "alpha_theta", "alpha_u"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be >= 0", key=name)

    @classmethod
    def from_preset(cls, mechanism, preset, variables=("temperature", "velocity"),
                    interpolant=Interpolant.PIECEWISE_CONSTANT) -> "NudgeSpec":
        """Table of named coefficient levels, applied to the listed variables."""
        try:
            mu, alpha = PRESETS[preset]
        except KeyError:
            raise ConfigurationError(f"unknown preset {preset!r}", key="preset") from None
        t = "temperature" in variables
        vel = "velocity" in variables
        return cls(mechanism, mu if t else 0.0, mu if vel else 0.0,
                   alpha if t else 0.0, alpha if vel else 0.0, interpolant)

    def coefficient(self, kind: str) -> float:
        if self.mechanism is Mechanism.CDA:
            return self.mu_theta if kind == "theta" else self.mu_u
        return self.alpha_theta if kind == "theta" else self.alpha_u

    @property
    def active(self) -> bool:
        return any(self.coefficient(k) > 0 for k in OBSERVED_KINDS)


@dataclass(frozen=True)
class NoiseModel:
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ConfigurationError(f"epsilon must lie in [0, 1), got {self.epsilon}", key="epsilon")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer", key="seed")

    @property
    def enabled(self) -> bool:
        return self.epsilon > 0


@dataclass
class ObservationSet:
    """Coarse samples at one time level; ``values[kind]`` is (ny_c, nx_c)."""

    level: int
    t: float
    stride: int
    values: dict
    indices: dict = field(default_factory=dict)
    epsilon: float = 0.0
    seed: Optional[int] = None

    def count(self, kind: str) -> int:
        return int(self.values[kind].size)


def sample_indices(grid: GridSpec, kind: str, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices (interior layout) of the sampled locations."""
    off = stride // 2
    cols = np.arange(off, grid.nx, stride)
    if kind == "v":
        rows = np.arange(off, grid.ny + 1, stride)
    else:
        rows = np.arange(off, grid.ny, stride)
    return rows, cols


def extract_observations(state: State, policy: ObservationPolicy, level: int = 0) -> ObservationSet:
    """Subsample the requested variables of ``state`` on the coarse lattice."""
    grid = state.grid
    policy.validate(grid)
    values, indices = {}, {}
    for kind in policy.kinds:
        rows, cols = sample_indices(grid, kind, policy.stride)
        values[kind] = state.interior(kind)[np.ix_(rows, cols)].copy()
        indices[kind] = (rows, cols)
    return ObservationSet(level, state.t, policy.stride, values, indices)


def noise_generator(seed: int, level: int) -> np.random.Generator:
    """Philox-4x64 stream keyed by ``seed`` with its counter set to ``level``.

    Each observation time gets its own counter block, so the draws for a
    given (seed, level) do not depend on which other levels were drawn.
    """
    return np.random.Generator(np.random.Philox(key=seed, counter=[level, 0, 0, 0]))


def perturb_observations(obs: ObservationSet, noise: NoiseModel) -> ObservationSet:
    """Multiply every sample by an independent draw from U[1 - eps, 1 + eps]."""
    if not noise.enabled:
        return obs
    rng = noise_generator(noise.seed, obs.level)
    values = {}
    for kind in OBSERVED_KINDS:
        if kind in obs.values:
            x = obs.values[kind]
            factor = 1.0 + noise.epsilon * (2.0 * rng.random(x.shape) - 1.0)
            values[kind] = x * factor
    return ObservationSet(obs.level, obs.t, obs.stride, values, dict(obs.indices),
                          noise.epsilon, noise.seed)


# -- 1D interpolation operators ------------------------------------------------

def _cubic_weights(tau):
    """Keys cubic-convolution weights (a = -1/2) for offsets -1, 0, 1, 2."""
    t = tau
    return np.array([
        (-t**3 + 2 * t**2 - t) / 2,
        (3 * t**3 - 5 * t**2 + 2) / 2,
        (-3 * t**3 + 4 * t**2 + t) / 2,
        (t**3 - t**2) / 2,
    ])


def _axis_matrix(n_fine: int, offset: int, stride: int, n_coarse: int,
                 periodic: bool, kind: Interpolant) -> np.ndarray:
    """Dense (n_fine, n_coarse) interpolation matrix for one axis.

    Fine point ``f`` sits at index position ``f``; sample ``m`` at
    ``offset + stride*m``. Positions are in units of the fine spacing.
    """
    if n_coarse < MIN_POINTS[kind]:
        raise ConfigurationError(
            f"{kind.value} interpolation needs >= {MIN_POINTS[kind]} coarse points per "
            f"direction, got {n_coarse}", key="interpolant")
    f = np.arange(n_fine)
    W = np.zeros((n_fine, n_coarse))
    if kind is Interpolant.PIECEWISE_CONSTANT:
        W[f, np.minimum(f // stride, n_coarse - 1)] = 1.0
        return W
    if kind is Interpolant.NEAREST:
        d = f[:, None] - (offset + stride * np.arange(n_coarse))[None, :]
        if periodic:
            d = np.minimum(np.abs(d), n_fine - np.abs(d))
        W[f, np.argmin(np.abs(d), axis=1)] = 1.0
        return W

    tau = (f - offset) / stride
    if periodic:
        tau = np.mod(tau, n_coarse)
    else:
        tau = np.clip(tau, 0.0, n_coarse - 1)

    if kind is Interpolant.SPLINE:
        nodes = np.arange(n_coarse + 1 if periodic else n_coarse, dtype=float)
        for m in range(n_coarse):
            e = np.zeros(nodes.size)
            e[m] = 1.0
            if periodic:
                if m == 0:
                    e[-1] = 1.0
                cs = CubicSpline(nodes, e, bc_type="periodic")
            else:
                cs = CubicSpline(nodes, e, bc_type="not-a-knot")
            W[:, m] = cs(tau)
        return W

    base = np.floor(tau).astype(int)
    if not periodic:
        base = np.minimum(base, n_coarse - 2)
    frac = tau - base
    if kind is Interpolant.LINEAR:
        W[f, base % n_coarse] += 1.0 - frac
        W[f, (base + 1) % n_coarse] += frac
        return W

    # Keys cubic; at walls the missing neighbour is extrapolated as
    # g[-1] = 3 g[0] - 3 g[1] + g[2] (exact for quadratics)
    w = _cubic_weights(frac)
    for o, wo in zip((-1, 0, 1, 2), w):
        idx = base + o
        if periodic:
            W[f, idx % n_coarse] += wo
            continue
        inside = (idx >= 0) & (idx < n_coarse)
        W[f[inside], idx[inside]] += wo[inside]
        lo = idx < 0
        for m, c in ((0, 3.0), (1, -3.0), (2, 1.0)):
            W[f[lo], m] += c * wo[lo]
        hi = idx >= n_coarse
        for m, c in ((n_coarse - 1, 3.0), (n_coarse - 2, -3.0), (n_coarse - 3, 1.0)):
            W[f[hi], m] += c * wo[hi]
    return W


@lru_cache(maxsize=256)
def interpolation_matrices(grid: GridSpec, field_kind: str, stride: int, kind: Interpolant):
    """(Wy, Wx) such that the fine field is ``Wy @ samples @ Wx.T``."""
    kind = Interpolant(kind)
    rows, cols = sample_indices(grid, field_kind, stride)
    n_rows = grid.ny + 1 if field_kind == "v" else grid.ny
    off = stride // 2
    Wx = _axis_matrix(grid.nx, off, stride, cols.size, True, kind)
    Wy = _axis_matrix(n_rows, off, stride, rows.size, False, kind)
    return Wy, Wx


def interpolate(samples: np.ndarray, kind: Interpolant, grid: GridSpec,
                field_kind: str = "theta", stride: Optional[int] = None) -> np.ndarray:
    """Spread coarse ``samples`` of ``field_kind`` over its native fine layout."""
    samples = np.asarray(samples, dtype=float)
    if stride is None:
        stride = grid.nx // samples.shape[1]
    rows, cols = sample_indices(grid, field_kind, stride)
    if samples.shape != (rows.size, cols.size):
        raise ConfigurationError(
            f"expected {rows.size}x{cols.size} samples for stride {stride}, got {samples.shape}")
    Wy, Wx = interpolation_matrices(grid, field_kind, stride, Interpolant(kind))
    return Wy @ samples @ Wx.T


# -- nudging forcings ---------------------------------------------------------

def _empty_tendency(grid):
    return NudgeTendency.zeros(grid)


def cda_tendency(state: State, obs: ObservationSet, spec: NudgeSpec) -> NudgeTendency:
    """mu * (I_h(obs) - I_h(model sampled at the same points)) per variable."""
    if spec.mechanism is not Mechanism.CDA:
        raise ConfigurationError("cda_tendency needs a CDA nudge spec", key="mechanism")
    grid = state.grid
    out = _empty_tendency(grid)
    for kind, q in obs.values.items():
        mu = spec.coefficient(kind)
        if mu == 0.0:
            continue
        rows, cols = sample_indices(grid, kind, obs.stride)
        model = state.interior(kind)[np.ix_(rows, cols)]
        Wy, Wx = interpolation_matrices(grid, kind, obs.stride, spec.interpolant)
        tend = mu * (Wy @ q @ Wx.T - Wy @ model @ Wx.T)
        if kind == "v":
            tend[0] = 0.0
            tend[-1] = 0.0
        setattr(out, kind, tend)
    return out


def na_tendency(state: State, obs: ObservationSet, spec: NudgeSpec) -> NudgeTendency:
    """alpha * (obs - model) at the observed points, zero elsewhere."""
    if spec.mechanism is not Mechanism.NA:
        raise ConfigurationError("na_tendency needs an NA nudge spec", key="mechanism")
    grid = state.grid
    out = _empty_tendency(grid)
    for kind, q in obs.values.items():
        alpha = spec.coefficient(kind)
        if alpha == 0.0:
            continue
        rows, cols = sample_indices(grid, kind, obs.stride)
        ix = np.ix_(rows, cols)
        tend = np.zeros(grid.interior_shape(kind))
        tend[ix] = alpha * (q - state.interior(kind)[ix])
        if kind == "v":
            tend[0] = 0.0
            tend[-1] = 0.0
        setattr(out, kind, tend)
    return out


def nudging_tendency(state: State, obs: ObservationSet, spec: NudgeSpec) -> NudgeTendency:
    if spec.mechanism is Mechanism.CDA:
        return cda_tendency(state, obs, spec)
    return na_tendency(state, obs, spec)


ObservationStream = Callable[[int], Optional[ObservationSet]]


class NudgeProvider:
    """Callback ``(k, state) -> NudgeTendency`` for step ``k`` of a run.

    Step ``k`` advances time level ``k - 1``. Observations arrive at levels
    that are multiples of ``policy.time_every`` and are pulled from
    ``reference_stream(level)``, perturbed, then either held until the next
    arrival (``HOLD_LAST``) or used on the arrival step only.
    """

    def __init__(self, policy: ObservationPolicy, spec: NudgeSpec, noise: NoiseModel,
                 reference_stream: ObservationStream):
        self.policy = policy
        self.spec = spec
        self.noise = noise
        self.stream = reference_stream
        self.latest: Optional[ObservationSet] = None

    def __call__(self, k: int, state: State) -> NudgeTendency:
        level = k - 1
        fresh = False
        if self.policy.arrives(level):
            obs = self.stream(level)
            if obs is not None:
                self.latest = perturb_observations(obs, self.noise)
                fresh = True
        if self.latest is None or not self.spec.active:
            return _empty_tendency(state.grid)
        if self.policy.hold_mode is HoldMode.ONLY_AT_ARRIVAL and not fresh:
            return _empty_tendency(state.grid)
        return nudging_tendency(state, self.latest, self.spec)


def nudge_provider(policy, spec, noise, reference_stream) -> NudgeProvider:
    return NudgeProvider(policy, spec, noise, reference_stream)
