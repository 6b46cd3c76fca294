"""
Terrain-aided navigation problem instance.

State ``[px, py, vx, vy]`` in a world frame (m, m/s); measurement
``[altitude, vbx, vby]``: terrain height at the horizontal position plus
the world velocity rotated into the body frame, each with additive
Gaussian noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MapExitError, OutOfMapError, ShapeMismatchError
from .grid import AxisGrid, gaussian_density

POSITION_MODES = (0, 1)
VELOCITY_MODES = (2, 3)
TRAJECTORY_HEADER = ["k", "px", "py", "vx", "vy", "z_alt", "z_vbx", "z_vby", "psi"]


@dataclass(frozen=True)
class TerrainMap:
    """Height raster; ``heights[i, j]`` sits at ``origin + (i, j) * cell``.

    NaN heights mark NODATA nodes.
    """

    origin: tuple
    cell: float
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 2 or min(h.shape) < 2:
            raise ValueError(f"terrain raster must be at least 2x2, got {h.shape}")
        if not self.cell > 0:
            raise ValueError(f"raster spacing must be positive, got {self.cell}")
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def extent(self):
        """``(xmin, xmax, ymin, ymax)`` of the raster hull."""
        nx, ny = self.heights.shape
        x0, y0 = self.origin
        return x0, x0 + (nx - 1) * self.cell, y0, y0 + (ny - 1) * self.cell

    def sample(self, x, y):
        """Vectorised bilinear lookup; NaN outside the hull or next to NODATA."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        nx, ny = self.heights.shape
        u = (x - self.origin[0]) / self.cell
        v = (y - self.origin[1]) / self.cell
        inside = (u >= 0) & (u <= nx - 1) & (v >= 0) & (v <= ny - 1)
        i = np.clip(np.floor(np.where(inside, u, 0)).astype(int), 0, nx - 2)
        j = np.clip(np.floor(np.where(inside, v, 0)).astype(int), 0, ny - 2)
        fu = np.where(inside, u, 0) - i
        fv = np.where(inside, v, 0) - j
        h = self.heights
        out = np.zeros(np.broadcast(fu, fv).shape)
        for di, dj, w in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)),
                          (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
            # zero-weight corners may be NODATA without spoiling the sample
            out = out + np.where(w > 0, w * h[i + di, j + dj], 0.0)
        return np.where(inside, out, np.nan)


def terrain_sample(terrain: TerrainMap, p) -> float:
    """Bilinear terrain height at ``p = (x, y)``.

    Raises
    ------
    OutOfMapError
        Outside the raster hull or on a cell touching a NODATA node.
    """
    h = float(terrain.sample(p[0], p[1]))
    if np.isnan(h):
        raise OutOfMapError(f"no terrain height at {tuple(p)}")
    return h


def synth_terrain(seed: int = 0, extent=8000.0, cell: float = 20.0, roughness: float = 1.0,
                  base: float = 400.0, n_hills: int = 1500,
                  width_range=(100.0, 400.0), amplitude: float = 20.0) -> TerrainMap:
    """Seeded synthetic terrain: Gaussian hills on top of a gentle trend.

    Every relief term is multiplied by ``roughness``, so ``roughness=0``
    gives a flat raster at ``base`` metres.
    """
    ex, ey = (extent, extent) if np.isscalar(extent) else extent
    if not (ex > 0 and ey > 0):
        raise ValueError(f"terrain extent must be positive, got {extent}")
    rng = np.random.default_rng(seed)
    xs = np.arange(0.0, ex + 0.5 * cell, cell)
    ys = np.arange(0.0, ey + 0.5 * cell, cell)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")

    relief = np.zeros_like(gx)
    cx = rng.uniform(0, ex, n_hills)
    cy = rng.uniform(0, ey, n_hills)
    width = rng.uniform(width_range[0], width_range[1], n_hills)
    amp = rng.normal(0.0, amplitude, n_hills)
    for x0, y0, w, a in zip(cx, cy, width, amp):
        # hills contribute nothing measurable beyond 5 widths
        sx = slice(max(0, int((x0 - 5 * w) / cell)), int((x0 + 5 * w) / cell) + 1)
        sy = slice(max(0, int((y0 - 5 * w) / cell)), int((y0 + 5 * w) / cell) + 1)
        relief[sx, sy] += a * np.exp(-0.5 * ((gx[sx, sy] - x0) ** 2 + (gy[sx, sy] - y0) ** 2) / w ** 2)

    slope = rng.normal(0.0, 0.01, 2)
    phase = rng.uniform(0, 2 * np.pi, 2)
    trend = (slope[0] * gx + slope[1] * gy
             + 40.0 * np.sin(2 * np.pi * gx / ex + phase[0]) * np.cos(2 * np.pi * gy / ey + phase[1]))
    return TerrainMap((0.0, 0.0), cell, base + roughness * (relief + trend))


def dcm(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class CvModel:
    """Linear dynamics ``x' = F x + u + w`` with ``w ~ N(0, diag(q))``."""

    F: np.ndarray
    Q: np.ndarray
    u: np.ndarray = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        d = F.shape[0]
        if F.shape != (d, d) or Q.shape != (d, d):
            raise ShapeMismatchError(f"F {F.shape} and Q {Q.shape} must both be {d}x{d}")
        if abs(np.linalg.det(F)) < 1e-12:
            raise ValueError("dynamics matrix must be invertible")
        if np.any(Q - np.diag(np.diag(Q))) or np.any(np.diag(Q) < 0):
            raise ValueError("process noise covariance must be diagonal and nonnegative")
        u = np.zeros(d) if self.u is None else np.asarray(self.u, dtype=float).reshape(d)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @classmethod
    def nearly_constant_velocity(cls, q_diag=(0.25, 0.25, 0.01, 0.01), dt: float = 1.0):
        F = np.eye(4)
        F[0, 2] = F[1, 3] = dt
        return cls(F, np.diag(q_diag))


@dataclass(frozen=True)
class MeasModel:
    """Diagonal noise covariance for ``[altitude, vbx, vby]``."""

    r_diag: np.ndarray = field(default_factory=lambda: np.array([9.0, 0.09, 0.09]))

    def __post_init__(self):
        r = np.asarray(self.r_diag, dtype=float).reshape(-1)
        if r.shape != (3,) or np.any(r <= 0):
            raise ValueError(f"measurement variances must be three positive numbers, got {r}")
        object.__setattr__(self, "r_diag", r)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r_diag)

    @property
    def sigma_alt(self) -> float:
        return float(np.sqrt(self.r_diag[0]))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    measurements: np.ndarray
    headings: np.ndarray
    seed: int

    def __len__(self):
        return self.states.shape[0]


def measurement_function(terrain: TerrainMap, x, psi):
    """Noise-free measurement for one state or a batch of states ``(..., 4)``."""
    x = np.asarray(x, dtype=float)
    alt = terrain.sample(x[..., 0], x[..., 1])
    vel = x[..., 2:4] @ dcm(psi).T
    return np.concatenate([np.asarray(alt)[..., None], vel], axis=-1)


def heading_angle(vx, vy) -> float:
    """Rotation angle that takes the world velocity onto the body x axis."""
    return -float(np.arctan2(vy, vx))


def simulate(model: CvModel, meas: MeasModel, terrain: TerrainMap, x0, steps: int, seed: int) -> Trajectory:
    """Draw a reference trajectory and its measurements.

    Raises
    ------
    MapExitError
        If the true position leaves the raster.
    """
    rng = np.random.default_rng(seed)
    q_std = np.sqrt(np.diag(model.Q))
    r_std = np.sqrt(meas.r_diag)
    states = np.empty((steps, 4))
    z = np.empty((steps, 3))
    psi = np.empty(steps)
    x = np.asarray(x0, dtype=float).copy()
    for k in range(steps):
        states[k] = x
        psi[k] = heading_angle(x[2], x[3])
        h = measurement_function(terrain, x, psi[k])
        if np.isnan(h[0]):
            raise MapExitError(k, x[:2])
        z[k] = h + r_std * rng.standard_normal(3)
        x = model.F @ x + model.u + q_std * rng.standard_normal(4)
    return Trajectory(states, z, psi, seed)


def likelihood_position_matrix(terrain: TerrainMap, z_alt: float, grid: AxisGrid, sigma_alt: float,
                               modes=POSITION_MODES) -> np.ndarray:
    """Altimeter likelihood on the position block of the grid; 0 off-map."""
    ax, ay = grid.axes[modes[0]], grid.axes[modes[1]]
    h = terrain.sample(ax[:, None], ay[None, :])
    lik = gaussian_density(z_alt, h, sigma_alt ** 2)
    return np.where(np.isnan(h), 0.0, lik)


def likelihood_velocity_matrix(z_vel, psi: float, grid: AxisGrid, r_vel,
                               modes=VELOCITY_MODES) -> np.ndarray:
    """Body-velocity likelihood on the velocity block of the grid."""
    ax, ay = grid.axes[modes[0]], grid.axes[modes[1]]
    c = dcm(psi)
    r_vel = np.asarray(r_vel, dtype=float)
    pred_x = c[0, 0] * ax[:, None] + c[0, 1] * ay[None, :]
    pred_y = c[1, 0] * ax[:, None] + c[1, 1] * ay[None, :]
    return gaussian_density(z_vel[0], pred_x, r_vel[0]) * gaussian_density(z_vel[1], pred_y, r_vel[1])


@dataclass(frozen=True)
class TanModel:
    """Dynamics, measurement noise and terrain bundled for the filters."""

    dynamics: CvModel
    meas: MeasModel
    terrain: TerrainMap

    def likelihood_factors(self, z, psi, grid: AxisGrid):
        """Measurement likelihood as a list of ``(modes, matrix)`` factors
        whose product over the grid is the full likelihood tensor."""
        r = self.meas.r_diag
        return [
            (POSITION_MODES, likelihood_position_matrix(self.terrain, z[0], grid, np.sqrt(r[0]))),
            (VELOCITY_MODES, likelihood_velocity_matrix(z[1:3], psi, grid, r[1:3])),
        ]

    def h(self, x, psi):
        return measurement_function(self.terrain, x, psi)

    def likelihood(self, x, z, psi):
        """Likelihood of ``z`` for a batch of states; 0 off-map."""
        pred = self.h(x, psi)
        r = self.meas.r_diag
        lik = np.prod(gaussian_density(np.asarray(z)[None, :], pred, r[None, :]), axis=-1)
        return np.where(np.isnan(lik), 0.0, lik)


def load_esri_ascii(path) -> TerrainMap:
    """Read an ESRI ASCII grid; NODATA cells become NaN.

    Values are taken at cell centres.  Rows in the file run north to south.
    """
    path = Path(path)
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0
    keys = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value"}
    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if key not in keys:
            break
        if len(parts) != 2:
            raise ValueError(f"{path}:{pos + 1}: malformed header line {lines[pos]!r}")
        header[key] = float(parts[1])
        pos += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise ValueError(f"{path}: header lacks {key}")
    if ("xllcorner" in header) == ("xllcenter" in header) or ("yllcorner" in header) == ("yllcenter" in header):
        raise ValueError(f"{path}: header needs exactly one of xllcorner/xllcenter and yllcorner/yllcenter")
    ncols, nrows, cell = int(header["ncols"]), int(header["nrows"]), header["cellsize"]
    rows = []
    for ln, line in enumerate(lines[pos:], start=pos + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != ncols:
            raise ValueError(f"{path}:{ln}: expected {ncols} values, found {len(parts)}")
        rows.append([float(v) for v in parts])
    if len(rows) != nrows:
        raise ValueError(f"{path}: expected {nrows} data rows, found {len(rows)}")
    data = np.array(rows)
    if "nodata_value" in header:
        data[data == header["nodata_value"]] = np.nan
    x0 = header["xllcenter"] if "xllcenter" in header else header["xllcorner"] + 0.5 * cell
    y0 = header["yllcenter"] if "yllcenter" in header else header["yllcorner"] + 0.5 * cell
    return TerrainMap((x0, y0), cell, data[::-1].T)


def write_esri_ascii(terrain: TerrainMap, path, nodata: float = -9999.0, fmt: str = "%.6f"):
    nx, ny = terrain.heights.shape
    data = terrain.heights.T[::-1]
    data = np.where(np.isnan(data), nodata, data)
    with open(path, "w") as fh:
        fh.write(f"ncols {nx}\nnrows {ny}\n")
        fh.write(f"xllcorner {terrain.origin[0] - 0.5 * terrain.cell!r}\n")
        fh.write(f"yllcorner {terrain.origin[1] - 0.5 * terrain.cell!r}\n")
        fh.write(f"cellsize {terrain.cell!r}\nNODATA_value {nodata!r}\n")
        np.savetxt(fh, data, fmt=fmt)


def write_trajectory_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k in range(len(traj)):
            w.writerow([k, *map(repr, traj.states[k].tolist()),
                        *map(repr, traj.measurements[k].tolist()), repr(float(traj.headings[k]))])
