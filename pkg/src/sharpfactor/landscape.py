"""Two-dimensional slices of the loss around a minimizer.

A slice is defined by two unit vectors in the flattened parameter space and
sampled exactly, with no interpolation:

    p(x, y) = loss(w* + x * zeta + y * gamma) .

Random slices tend to be dominated by the minimizer manifold's flat
directions, so the informative choice pins ``zeta`` and ``gamma`` to the
top and bottom eigenvectors of the dense Hessian. Gradient-descent
trajectories project onto the slice as inner products of the iterate
offsets with the basis vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import ShapeError, ValidationError
from .factors import FactorChain, check_target, loss
from .hessian_oracle import DenseHessian
from .serialize import fmt17, json_dump

MODE_RANDOM = "random"
MODE_HESSIAN = "hessian_v1_vN"
DEFAULT_RESOLUTION = (201, 201)


@dataclass(frozen=True)
class ProjectionBasis:
    """Slice plane: two unit vectors and the flattened origin point."""

    zeta: np.ndarray
    gamma: np.ndarray
    origin: np.ndarray
    mode: str

    def __post_init__(self):
        zeta = np.asarray(self.zeta, dtype=float).reshape(-1)
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        origin = np.asarray(self.origin, dtype=float).reshape(-1)
        if not (zeta.size == gamma.size == origin.size):
            raise ShapeError("basis vectors and origin must have equal length")
        for name, vec in (("zeta", zeta), ("gamma", gamma)):
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-12:
                raise ValidationError(f"{name} must be unit norm, got {norm!r}")
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "origin", origin)


def random_basis(chain: FactorChain, seed: int) -> ProjectionBasis:
    """Two independent normalized standard-normal vectors, seeded."""
    rng = np.random.default_rng(seed)
    n = chain.num_params
    zeta = rng.standard_normal(n)
    gamma = rng.standard_normal(n)
    return ProjectionBasis(
        zeta=zeta / np.linalg.norm(zeta),
        gamma=gamma / np.linalg.norm(gamma),
        origin=chain.flatten(),
        mode=MODE_RANDOM,
    )


def hessian_basis(chain: FactorChain, hessian: DenseHessian) -> ProjectionBasis:
    """Top and bottom Hessian eigenvectors as the slice plane."""
    zeta = hessian.top_vector
    gamma = hessian.bottom_vector
    if zeta.size != chain.num_params:
        raise ShapeError(
            f"hessian dimension {zeta.size} != parameter count {chain.num_params}"
        )
    overlap = abs(float(zeta @ gamma))
    if overlap > 1e-8:
        raise ValidationError(f"eigenvector overlap {overlap:.3e} > 1e-8")
    return ProjectionBasis(zeta=zeta, gamma=gamma, origin=chain.flatten(), mode=MODE_HESSIAN)


@dataclass(frozen=True)
class ContourGrid:
    """Sampled loss values over the slice; ``values[i, j] = p(xs[i], ys[j])``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray


def contour_grid(chain: FactorChain, target, basis: ProjectionBasis,
                 x_range=(-1.0, 1.0), y_range=(-1.0, 1.0),
                 resolution=DEFAULT_RESOLUTION) -> ContourGrid:
    """Exact loss evaluations over a rectangular slice grid.

    Resolution must be at least 2 x 2. With symmetric ranges and odd
    resolution the grid contains the origin, where the value is the loss at
    the base point itself (zero at a minimizer).
    """
    target = check_target(chain, target)
    dims = chain.dims
    origin = basis.origin
    if origin.size != chain.num_params:
        raise ShapeError(
            f"basis dimension {origin.size} != parameter count {chain.num_params}"
        )
    nx, ny = (int(r) for r in resolution)
    if nx < 2 or ny < 2:
        raise ValidationError(f"resolution must be at least 2x2, got {resolution}")
    xs = np.linspace(float(x_range[0]), float(x_range[1]), nx)
    ys = np.linspace(float(y_range[0]), float(y_range[1]), ny)
    values = np.empty((nx, ny))
    for i, x in enumerate(xs):
        along_x = origin + x * basis.zeta
        for j, y in enumerate(ys):
            point = FactorChain.from_flat(dims, along_x + y * basis.gamma)
            values[i, j] = loss(point, target)
    return ContourGrid(xs=xs, ys=ys, values=values)


def project_trajectory(traj: Trajectory, basis: ProjectionBasis) -> np.ndarray:
    """Slice coordinates ``(<w_k - origin, zeta>, <w_k - origin, gamma>)``.

    Requires the trajectory to carry parameter snapshots. The computed
    coordinates are also attached to the trajectory's ``proj`` field.
    """
    if traj.params is None:
        raise ValidationError(
            "trajectory has no parameter snapshots; rerun with record_params=True"
        )
    coords = np.empty((len(traj.params), 2))
    for row, params in enumerate(traj.params):
        offset = params - basis.origin
        coords[row, 0] = float(offset @ basis.zeta)
        coords[row, 1] = float(offset @ basis.gamma)
    traj.proj = coords
    return coords


def fit_ranges(coords: np.ndarray, pad_factor: float = 5.0,
               fallback: float = 1.0) -> tuple[tuple[float, float], tuple[float, float]]:
    """Symmetric per-axis ranges covering a projected trajectory.

    Each half-range is ``pad_factor`` times the trajectory's largest
    excursion along that axis, falling back to ``fallback`` for an axis the
    trajectory never leaves.
    """
    coords = np.asarray(coords, dtype=float)
    half_x = pad_factor * float(np.max(np.abs(coords[:, 0]))) if coords.size else 0.0
    half_y = pad_factor * float(np.max(np.abs(coords[:, 1]))) if coords.size else 0.0
    if half_x == 0.0:
        half_x = fallback
    if half_y == 0.0:
        half_y = fallback
    return (-half_x, half_x), (-half_y, half_y)


def grid_to_csv(grid: ContourGrid, path) -> None:
    """CSV with header ``x,y,p``, row-major over the grid."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,p\n")
        for i, x in enumerate(grid.xs):
            for j, y in enumerate(grid.ys):
                fh.write(f"{fmt17(x)},{fmt17(y)},{fmt17(grid.values[i, j])}\n")


def basis_to_json(basis: ProjectionBasis, path, origin_ref: str) -> None:
    """Sidecar JSON naming the slice mode, vectors, and the origin file."""
    json_dump({
        "mode": basis.mode,
        "zeta": basis.zeta.tolist(),
        "gamma": basis.gamma.tolist(),
        "origin_ref": origin_ref,
    }, path)


def basis_from_json(path, origin: np.ndarray) -> ProjectionBasis:
    import json as _json

    with open(path, "r", encoding="utf-8") as fh:
        doc = _json.load(fh)
    return ProjectionBasis(
        zeta=np.asarray(doc["zeta"], dtype=float),
        gamma=np.asarray(doc["gamma"], dtype=float),
        origin=origin,
        mode=str(doc["mode"]),
    )
