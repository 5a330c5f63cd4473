"""MAC (staggered) grid storage and discrete operators.

Layout, with arrays indexed ``[j, i]`` (row = y) and one ghost layer:

* ``theta``, ``p``: cell centres, shape ``(ny + 2, nx + 2)``; padded
  index ``(r, c)`` is cell ``(r - 1, c - 1)``.
* ``u``: vertical faces, shape ``(ny + 2, nx + 2)``; padded column ``c``
  is the face at ``x = (c - 1) * dx``. Only ``nx`` faces are unique since
  the face at ``x = Lx`` is the face at ``x = 0``.
* ``v``: horizontal faces, shape ``(ny + 1, nx + 2)``; row ``j`` is the
  face at ``y = j * dy``. Rows ``0`` and ``ny`` lie on the walls.

Operators take ghost-filled arrays and return interior-shaped arrays:
``(ny, nx)`` for centres and u-faces, ``(ny + 1, nx)`` for v-faces.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

FIELD_KINDS = ("u", "v", "theta", "p")


@dataclass(frozen=True)
class GridSpec:
    """Uniform channel grid, periodic in x, walls at y = 0 and y = Ly."""

    nx: int = 200
    ny: int = 100
    Lx: float = 2.0
    Ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigurationError("cell counts must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigurationError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    def padded_shape(self, kind: str) -> tuple[int, int]:
        if kind == "v":
            return (self.ny + 1, self.nx + 2)
        if kind in ("u", "theta", "p"):
            return (self.ny + 2, self.nx + 2)
        raise ConfigurationError(f"unknown field kind {kind!r}")

    def interior_shape(self, kind: str) -> tuple[int, int]:
        if kind == "v":
            return (self.ny + 1, self.nx)
        if kind in ("u", "theta", "p"):
            return (self.ny, self.nx)
        raise ConfigurationError(f"unknown field kind {kind!r}")

    # native coordinates
    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    @property
    def x_faces(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y_faces(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.dy

    def coords(self, kind: str) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) 1D coordinate vectors of the native locations of ``kind``."""
        if kind == "u":
            return self.x_faces, self.y_centers
        if kind == "v":
            return self.x_centers, self.y_faces
        if kind in ("theta", "p"):
            return self.x_centers, self.y_centers
        raise ConfigurationError(f"unknown field kind {kind!r}")


@dataclass
class State:
    """The four staggered fields at one time level (ghost-padded)."""

    grid: GridSpec
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "State":
        return cls(
            grid,
            np.zeros(grid.padded_shape("u")),
            np.zeros(grid.padded_shape("v")),
            np.zeros(grid.padded_shape("theta")),
            np.zeros(grid.padded_shape("p")),
            t,
        )

    @classmethod
    def from_interior(cls, grid, u=None, v=None, theta=None, p=None, t=0.0) -> "State":
        """Build a state from interior arrays and fill all ghosts."""
        st = cls.zeros(grid, t)
        for kind, arr in (("u", u), ("v", v), ("theta", theta), ("p", p)):
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != grid.interior_shape(kind):
                raise ConfigurationError(
                    f"{kind} has shape {arr.shape}, expected {grid.interior_shape(kind)}"
                )
            set_interior(getattr(st, kind), kind, arr)
        return apply_boundary_conditions(st)

    def interior(self, kind: str) -> np.ndarray:
        return interior(getattr(self, kind), kind)

    def copy(self) -> "State":
        return replace(
            self, u=self.u.copy(), v=self.v.copy(), theta=self.theta.copy(), p=self.p.copy()
        )


def interior(a: np.ndarray, kind: str) -> np.ndarray:
    """View of the unique (non-ghost) values of a padded array."""
    if kind == "v":
        return a[:, 1:-1]
    return a[1:-1, 1:-1]


def set_interior(a: np.ndarray, kind: str, values: np.ndarray) -> None:
    interior(a, kind)[...] = values


def _check_shape(a: np.ndarray, grid: GridSpec, kind: str) -> None:
    if a.shape != grid.padded_shape(kind):
        raise ConfigurationError(
            f"{kind} field has shape {a.shape}, expected {grid.padded_shape(kind)}"
        )


def fill_ghosts(a: np.ndarray, kind: str) -> np.ndarray:
    """Fill ghost cells of ``a`` in place and return it.

    Periodic wrap in x for every kind. In y: reflection (ghost = -interior)
    for ``theta`` and ``u``, zero-gradient for ``p``, zero wall rows for ``v``.
    """
    if kind == "v":
        a[0, :] = 0.0
        a[-1, :] = 0.0
    a[:, 0] = a[:, -2]
    a[:, -1] = a[:, 1]
    if kind in ("theta", "u"):
        a[0, :] = -a[1, :]
        a[-1, :] = -a[-2, :]
    elif kind == "p":
        a[0, :] = a[1, :]
        a[-1, :] = a[-2, :]
    elif kind != "v":
        raise ConfigurationError(f"unknown field kind {kind!r}")
    return a


def pad(values: np.ndarray, kind: str) -> np.ndarray:
    """Ghost-padded copy of an interior array."""
    ny, nx = values.shape
    out = np.empty((ny if kind == "v" else ny + 2, nx + 2))
    set_interior(out, kind, values)
    return fill_ghosts(out, kind)


def apply_boundary_conditions(state: State) -> State:
    """Return a copy of ``state`` with all ghost cells and wall rows filled."""
    grid = state.grid
    out = state.copy()
    for kind in FIELD_KINDS:
        a = getattr(out, kind)
        _check_shape(a, grid, kind)
        fill_ghosts(a, kind)
    return out


def divergence(u: np.ndarray, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cell-centred divergence of face velocities, shape ``(ny, nx)``."""
    _check_shape(u, grid, "u")
    _check_shape(v, grid, "v")
    return (u[1:-1, 2:] - u[1:-1, 1:-1]) / grid.dx + (v[1:, 1:-1] - v[:-1, 1:-1]) / grid.dy


def gradient(p: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Face-located gradient of a cell-centred field.

    Returns the x-component on u-faces ``(ny, nx)`` and the y-component on
    v-faces ``(ny + 1, nx)`` with the wall rows set to zero.
    """
    _check_shape(p, grid, "p")
    gx = (p[1:-1, 1:-1] - p[1:-1, :-2]) / grid.dx
    gy = (p[1:, 1:-1] - p[:-1, 1:-1]) / grid.dy
    gy[0, :] = 0.0
    gy[-1, :] = 0.0
    return gx, gy


def to_cell_centers(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-point averages of face velocities onto cell centres."""
    uc = 0.5 * (u[1:-1, 1:-1] + u[1:-1, 2:])
    vc = 0.5 * (v[:-1, 1:-1] + v[1:, 1:-1])
    return uc, vc


def laplacian(a: np.ndarray, kind: str, grid: GridSpec) -> np.ndarray:
    """5-point Laplacian of a ghost-filled field at its unique locations.

    For ``kind == "p"`` this is exactly ``divergence(gradient(p))``. For
    ``v`` the wall rows of the result are zero.
    """
    _check_shape(a, grid, kind)
    idx2, idy2 = 1.0 / grid.dx**2, 1.0 / grid.dy**2
    if kind == "v":
        out = np.zeros(grid.interior_shape("v"))
        c = a[1:-1, 1:-1]
        out[1:-1] = (a[1:-1, 2:] - 2 * c + a[1:-1, :-2]) * idx2 + (
            a[2:, 1:-1] - 2 * c + a[:-2, 1:-1]
        ) * idy2
        return out
    c = a[1:-1, 1:-1]
    return (a[1:-1, 2:] - 2 * c + a[1:-1, :-2]) * idx2 + (a[2:, 1:-1] - 2 * c + a[:-2, 1:-1]) * idy2


def max_divergence(state: State) -> float:
    return float(np.abs(divergence(state.u, state.v, state.grid)).max())


def divergence_scale(state: State) -> float:
    """Scale used by the divergence-free contract: max(1, max|u|, max|v|)."""
    return max(1.0, float(np.abs(state.u).max()), float(np.abs(state.v).max()))
