"""Plain-text and graymap exports."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .assimilation import OBSERVED_KINDS, ObservationSet
from .grid import State

FLOAT_FMT = "%.17g"
RRMSE_HEADER = ("t", "rrmse_theta", "rrmse_u", "rrmse_v", "flags")


def write_field_csv(path, values: np.ndarray) -> Path:
    """One row per grid row (bottom wall first), full double precision."""
    path = Path(path)
    np.savetxt(path, np.atleast_2d(values), fmt=FLOAT_FMT, delimiter=",")
    return path


def read_field_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_graymap(path, values: np.ndarray) -> tuple[Path, Path]:
    """8-bit binary PGM, top row = largest y, min-max scaled.

    The scaling range goes to ``<path>.txt`` next to the image.
    """
    path = Path(path)
    a = np.asarray(values, dtype=float)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        pix = np.rint((a - lo) / (hi - lo) * 255.0)
    else:
        pix = np.zeros_like(a)
    pix = np.flipud(pix).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    side = path.with_name(path.name + ".txt")
    side.write_text(f"min {lo:.17g}\nmax {hi:.17g}\n")
    return path, side


def read_graymap(path) -> np.ndarray:
    """Pixel array of a file written by ``write_graymap`` (rows top to bottom)."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def write_snapshot(directory, prefix: str, state: State) -> list[Path]:
    """CSV and graymap for theta, u, v and p of one state."""
    directory = Path(directory)
    files = []
    for kind in ("theta", "u", "v", "p"):
        values = state.interior(kind)
        files.append(write_field_csv(directory / f"{prefix}_{kind}.csv", values))
        files.extend(write_graymap(directory / f"{prefix}_{kind}.pgm", values))
    return files


def write_rrmse_csv(path, series) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RRMSE_HEADER)
        for i in range(len(series)):
            w.writerow([FLOAT_FMT % series.t[i], FLOAT_FMT % series.theta[i],
                        FLOAT_FMT % series.u[i], FLOAT_FMT % series.v[i], series.flags[i]])
    return path


def write_observation_csv(path, stream: Iterable[ObservationSet]) -> Path:
    """Audit dump: one row per observed scalar, (step, variable, i, j, value).

    ``i`` is the column (x) index and ``j`` the row (y) index of the sample
    in the variable's interior layout.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "variable", "i", "j", "value"))
        for obs in stream:
            for kind in OBSERVED_KINDS:
                if kind not in obs.values:
                    continue
                rows, cols = obs.indices[kind]
                vals = obs.values[kind]
                for a, j in enumerate(rows):
                    for b, i in enumerate(cols):
                        w.writerow((obs.level, kind, int(i), int(j), FLOAT_FMT % vals[a, b]))
    return path
