"""Time integration of the nondimensional Boussinesq (Benard) system.

    u_t + (u.grad)u + grad p = Pr/sqrt(Ra) lap u + Pr theta e_y
    theta_t + (u.grad)theta  = 1/sqrt(Ra) lap theta + v
    div u = 0

One step: Adams-Bashforth 2 for the convective terms, forward Euler for the
linear buoyancy / vertical-advection terms and any nudging forcing, backward
Euler for diffusion, then a pressure projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .elliptic import solve_helmholtz, solve_pressure_poisson
from .errors import BlowUpError, ConfigurationError
from .grid import GridSpec, State, divergence, fill_ghosts, gradient, set_interior


@dataclass(frozen=True)
class SolverParams:
    Ra: float = 1.0e4
    Pr: float = 0.71
    dt: float = 0.01

    def __post_init__(self):
        for name in ("Ra", "Pr", "dt"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ConfigurationError(f"{name} must be positive and finite, got {val}", key=name)

    @property
    def gamma_velocity(self) -> float:
        return self.Pr * self.dt / math.sqrt(self.Ra)

    @property
    def gamma_theta(self) -> float:
        return self.dt / math.sqrt(self.Ra)


@dataclass
class StepperMemory:
    """Convective tendencies of the previous step (None before the first step)."""

    previous: Optional[tuple] = None

    @property
    def first_step(self) -> bool:
        return self.previous is None


@dataclass
class NudgeTendency:
    """Additive forcing in interior layout: u (ny, nx), v (ny+1, nx), theta (ny, nx)."""

    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray

    @classmethod
    def zeros(cls, grid: GridSpec) -> "NudgeTendency":
        return cls(
            np.zeros(grid.interior_shape("u")),
            np.zeros(grid.interior_shape("v")),
            np.zeros(grid.interior_shape("theta")),
        )

    def is_zero(self) -> bool:
        return not (self.u.any() or self.v.any() or self.theta.any())


def convective_tendency(state: State):
    """Minus the conservative-form advection terms at each staggered location."""
    g = state.grid
    u, v, th = state.u, state.v, state.theta
    dx, dy = g.dx, g.dy

    # u-momentum, on u-faces
    uc = 0.5 * (u[1:-1, :-1] + u[1:-1, 1:])  # cell centres -1..nx-1
    duu = (uc[:, 1:] ** 2 - uc[:, :-1] ** 2) / dx
    # u*v at cell corners (x = i dx, y = j dy), faces i = 0..nx, rows j = 0..ny
    corner = 0.5 * (u[:-1, 1:] + u[1:, 1:]) * 0.5 * (v[:, :-1] + v[:, 1:])
    fc = corner[:, :-1]
    duv = (fc[1:] - fc[:-1]) / dy
    cu = -(duu + duv)

    # v-momentum, on interior v-faces
    dvu = (corner[1:-1, 1:] - corner[1:-1, :-1]) / dx
    vc = 0.5 * (v[:-1, 1:-1] + v[1:, 1:-1])
    dvv = (vc[1:] ** 2 - vc[:-1] ** 2) / dy
    cv = np.zeros(g.interior_shape("v"))
    cv[1:-1] = -(dvu + dvv)

    # temperature, at centres
    fx = u[1:-1, 1:] * 0.5 * (th[1:-1, :-1] + th[1:-1, 1:])
    fy = v[:, 1:-1] * 0.5 * (th[:-1, 1:-1] + th[1:, 1:-1])
    ct = -((fx[:, 1:] - fx[:, :-1]) / dx + (fy[1:] - fy[:-1]) / dy)
    return cu, cv, ct


def linear_tendency(state: State, params: SolverParams):
    """Buoyancy Pr*theta on v-faces and the source +v at centres."""
    g = state.grid
    th, v = state.theta, state.v
    lu = np.zeros(g.interior_shape("u"))
    lv = np.zeros(g.interior_shape("v"))
    lv[1:-1] = params.Pr * 0.5 * (th[1:-2, 1:-1] + th[2:-1, 1:-1])
    lt = 0.5 * (v[:-1, 1:-1] + v[1:, 1:-1])
    return lu, lv, lt


def explicit_tendency(state: State, params: SolverParams):
    """Convective plus linear explicit tendencies (pressure and diffusion excluded)."""
    conv = convective_tendency(state)
    lin = linear_tendency(state, params)
    return tuple(c + l for c, l in zip(conv, lin))


def _check_finite(stage, step_index, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise BlowUpError(stage, step_index)


def step(state: State, params: SolverParams, memory: StepperMemory,
         nudge: Optional[NudgeTendency] = None, step_index: int = 0):
    """Advance one time step; returns ``(new_state, new_memory)``.

    The nudge forcing enters the explicit stage, ahead of diffusion and the
    projection, so the returned velocity is discretely divergence free.
    Raises ``BlowUpError`` as soon as a stage produces non-finite values.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _step(state, params, memory, nudge, step_index)


def _step(state, params, memory, nudge, step_index):
    g = state.grid
    dt = params.dt
    conv = convective_tendency(state)
    lin = linear_tendency(state, params)
    if memory.previous is None:
        adv = conv
    else:
        adv = tuple(1.5 * c - 0.5 * p for c, p in zip(conv, memory.previous))

    fields = (state.interior("u"), state.interior("v"), state.interior("theta"))
    if nudge is None:
        forcing = lin
    else:
        for kind, arr in (("u", nudge.u), ("v", nudge.v), ("theta", nudge.theta)):
            if arr.shape != g.interior_shape(kind):
                raise ConfigurationError(
                    f"nudge {kind} has shape {arr.shape}, expected {g.interior_shape(kind)}"
                )
        forcing = (lin[0] + nudge.u, lin[1] + nudge.v, lin[2] + nudge.theta)
    us, vs, ts = (f + dt * (a + b) for f, a, b in zip(fields, adv, forcing))
    _check_finite("explicit", step_index, us, vs, ts)

    uss = solve_helmholtz(us, params.gamma_velocity, "u", g)
    vss = solve_helmholtz(vs, params.gamma_velocity, "v", g)
    tnew = solve_helmholtz(ts, params.gamma_theta, "theta", g)
    _check_finite("diffusion", step_index, uss, vss, tnew)

    new = State.zeros(g, state.t + dt)
    set_interior(new.u, "u", uss)
    set_interior(new.v, "v", vss)
    fill_ghosts(new.u, "u")
    fill_ghosts(new.v, "v")
    p = solve_pressure_poisson(divergence(new.u, new.v, g) / dt, g)
    set_interior(new.p, "p", p)
    fill_ghosts(new.p, "p")
    gx, gy = gradient(new.p, g)
    set_interior(new.u, "u", uss - dt * gx)
    set_interior(new.v, "v", vss - dt * gy)
    set_interior(new.theta, "theta", tnew)
    for kind in ("u", "v", "theta"):
        fill_ghosts(getattr(new, kind), kind)
    _check_finite("projection", step_index, new.u, new.v, new.p)
    return new, StepperMemory(conv)


NudgeProvider = Callable[[int, State], Optional[NudgeTendency]]
Recorder = Callable[[int, State], None]


def simulate(ic: State, params: SolverParams, nsteps: int,
             nudge_provider: Optional[NudgeProvider] = None,
             recorder: Optional[Recorder] = None,
             memory: Optional[StepperMemory] = None) -> State:
    """Run ``nsteps`` steps from ``ic``.

    ``nudge_provider(k, state)`` is called before step ``k`` (1-based) with the
    state being advanced; ``recorder(k, state)`` after it with the result.
    """
    if nsteps < 1:
        raise ConfigurationError(f"nsteps must be >= 1, got {nsteps}", key="nsteps")
    state = ic
    memory = memory or StepperMemory()
    for k in range(1, nsteps + 1):
        nudge = nudge_provider(k, state) if nudge_provider is not None else None
        state, memory = step(state, params, memory, nudge, step_index=k)
        if recorder is not None:
            recorder(k, state)
    return state
