"""Dense, assembly-based curvature references.

At a zero-loss chain the loss Hessian factors exactly through the Jacobian
``J`` of the end-to-end product with respect to the stacked parameters:
``H = 2 J.T J``. With column-major vectorization the Jacobian block for
layer ``i`` is the Kronecker product ``below_i.T (x) above_i``, so
``J @ flatten(U) = vec(sum_i above_i @ U_i @ below_i)`` for any direction.

This module materializes ``J``, the dense Hessian and its spectrum, and a
finite-difference Hessian built from central differences of the gradient,
which stays valid away from minima (where ``2 J.T J`` alone does not).
Because ``H = 2 J.T J`` has rank at most ``d_L * d_0``, every minimizer's
Hessian carries at least ``N - d_L * d_0`` (near-)zero eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from .directional import blocks_from_flat, fd_hessian_vector, flatten_blocks
from .errors import ShapeError, SizeError, ValidationError
from .factors import FactorChain, check_target, partial_products
from .serialize import json_dump
from .sharpness import certify_minimizer

DEFAULT_ENTRY_CAP = 10_000_000
DEFAULT_FULL_EIG_CAP = 2000
NULLITY_TOL_FACTOR = 1e-8


@dataclass(frozen=True)
class ProductJacobian:
    """Jacobian of the chain product in stacked coordinates.

    ``blocks[i]`` is ``below_i.T (x) above_i`` with shape
    ``(d_L * d_0, d_{i+1} * d_i)``; ``matrix`` is their horizontal
    concatenation, shape ``(d_L * d_0, N)``.
    """

    blocks: tuple[np.ndarray, ...]
    matrix: np.ndarray


def product_jacobian(chain: FactorChain, cap_entries: int = DEFAULT_ENTRY_CAP) -> ProductJacobian:
    """Assemble the product Jacobian by explicit Kronecker expansion.

    Valid at any point in parameter space. Refuses assemblies larger than
    ``cap_entries`` matrix entries; use the matrix-free Kronecker-sum
    operator for such sizes.
    """
    dims = chain.dims
    n_params = chain.num_params
    out_dim = dims[-1] * dims[0]
    if n_params * out_dim > cap_entries:
        raise SizeError(
            f"dense Jacobian needs {n_params * out_dim} entries > cap {cap_entries}; "
            "use the matrix-free operator path instead"
        )
    parts = partial_products(chain)
    blocks = tuple(np.kron(parts.below[i].T, parts.above[i]) for i in range(chain.depth))
    return ProductJacobian(blocks=blocks, matrix=np.hstack(blocks))


@dataclass(frozen=True)
class DenseHessian:
    """Symmetric Hessian with its (full or partial) eigendecomposition.

    ``eigenvalues`` are descending. When ``full_spectrum`` is false only the
    top eigenvalue was computed and ``basis`` is ``None``; otherwise
    ``basis`` columns align with ``eigenvalues``.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray | None
    full_spectrum: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min(self) -> float:
        if not self.full_spectrum:
            raise ValidationError("lambda_min requires the full spectrum")
        return float(self.eigenvalues[-1])

    @property
    def top_vector(self) -> np.ndarray:
        if self.basis is None:
            raise ValidationError("eigenvectors were not computed")
        return self.basis[:, 0]

    @property
    def bottom_vector(self) -> np.ndarray:
        if self.basis is None:
            raise ValidationError("eigenvectors were not computed")
        return self.basis[:, -1]

    def nullity(self, tol_factor: float = NULLITY_TOL_FACTOR) -> int:
        """Count of eigenvalues at or below ``tol_factor * lambda_max``."""
        if not self.full_spectrum:
            raise ValidationError("nullity requires the full spectrum")
        return int(np.sum(self.eigenvalues <= tol_factor * max(self.lambda_max, 0.0)))


def _eig_dense(matrix: np.ndarray, full_eig_cap: int) -> DenseHessian:
    n = matrix.shape[0]
    if n <= full_eig_cap:
        eigvals, eigvecs = np.linalg.eigh(matrix)
        return DenseHessian(
            matrix=matrix,
            eigenvalues=eigvals[::-1].copy(),
            basis=eigvecs[:, ::-1].copy(),
            full_spectrum=True,
        )
    v0 = np.ones(n) / np.sqrt(n)
    top = eigsh(matrix, k=1, which="LA", tol=0, v0=v0, return_eigenvectors=False)
    return DenseHessian(
        matrix=matrix,
        eigenvalues=np.array([float(top[0])]),
        basis=None,
        full_spectrum=False,
    )


def dense_hessian_at_minimum(chain: FactorChain, target,
                             cap_entries: int = DEFAULT_ENTRY_CAP,
                             full_eig_cap: int = DEFAULT_FULL_EIG_CAP) -> DenseHessian:
    """Exact Hessian ``2 J.T J`` at a certified minimizer, eigendecomposed."""
    certify_minimizer(chain, target)
    jac = product_jacobian(chain, cap_entries=cap_entries)
    n = jac.matrix.shape[1]
    if n * n > cap_entries:
        raise SizeError(
            f"dense Hessian needs {n * n} entries > cap {cap_entries}; "
            "use the matrix-free operator path instead"
        )
    hessian = 2.0 * (jac.matrix.T @ jac.matrix)
    return _eig_dense(hessian, full_eig_cap)


def fd_dense_hessian(chain: FactorChain, target, step: float = 1e-4,
                     cap_entries: int = DEFAULT_ENTRY_CAP,
                     full_eig_cap: int = DEFAULT_FULL_EIG_CAP) -> DenseHessian:
    """Finite-difference Hessian from gradient central differences.

    Column ``j`` is the Hessian-vector product along coordinate direction
    ``e_j``; the result is symmetrized as ``(H + H.T) / 2``. Valid at any
    point, minimizer or not.
    """
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step}")
    target = check_target(chain, target)
    n = chain.num_params
    if n * n > cap_entries:
        raise SizeError(
            f"finite-difference Hessian needs {n * n} entries > cap {cap_entries}"
        )
    dims = chain.dims
    hessian = np.empty((n, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        column = fd_hessian_vector(chain, target, blocks_from_flat(dims, basis), step=step)
        hessian[:, j] = flatten_blocks(column)
        basis[j] = 0.0
    hessian = 0.5 * (hessian + hessian.T)
    return _eig_dense(hessian, full_eig_cap)


def eigen_summary(hessian: DenseHessian, nullity_tol: float = NULLITY_TOL_FACTOR) -> dict:
    """JSON-ready spectral summary of the dense Hessian."""
    doc = {
        "n": hessian.dim,
        "lambda_max": hessian.lambda_max,
        "lambda_min": hessian.lambda_min if hessian.full_spectrum else None,
        "nullity_tol": nullity_tol,
        "nullity": hessian.nullity(nullity_tol) if hessian.full_spectrum else None,
    }
    return doc


def save_eigenvectors(path_data, path_sidecar, basis: np.ndarray) -> None:
    """Row-major little-endian float64 dump with a JSON shape sidecar."""
    basis = np.ascontiguousarray(np.asarray(basis, dtype="<f8"))
    if basis.ndim != 2:
        raise ShapeError(f"expected a matrix of eigenvector columns, got ndim={basis.ndim}")
    with open(path_data, "wb") as fh:
        fh.write(basis.tobytes(order="C"))
    json_dump({
        "shape": list(basis.shape),
        "dtype": "<f8",
        "order": "row_major",
    }, path_sidecar)


def load_eigenvectors(path_data, path_sidecar) -> np.ndarray:
    import json as _json

    with open(path_sidecar, "r", encoding="utf-8") as fh:
        meta = _json.load(fh)
    shape = tuple(int(s) for s in meta["shape"])
    with open(path_data, "rb") as fh:
        raw = fh.read()
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
