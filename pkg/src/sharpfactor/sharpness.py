"""Closed-form top Hessian eigenvalue at zero-loss chains.

At any chain whose product equals the target, the Hessian quadratic form is
``2 * || sum_i above_i @ U_i @ below_i ||_F^2``. Maximizing over unit-norm
directions gives

    lambda_max = 2 * sigma_max( sum_i  below_i.T below_i  (x)  above_i above_i.T )

where ``(x)`` is the Kronecker product. The operator inside is a sum of
Kronecker products of PSD Gram matrices, so it is symmetric PSD and is
applied matrix-free as ``X -> sum_i (above_i above_i.T) @ X @ (below_i.T below_i)``
on product-shaped matrices ``X`` of shape ``(d_L, d_0)``.

Two specializations avoid the eigenvalue solve entirely:

* scalar chains (``d_0 = d_L = 1``):
  ``lambda_max = 2 * sum_i sigma_max(above_i)^2 sigma_max(below_i)^2``
* depth 2 with ``target = left @ right.T``:
  ``lambda_max = 2 * (sigma_max(left)^2 + sigma_max(right)^2)``

Each method can also return a unit-norm direction achieving the maximum:
rank-one singular-vector constructions for the two specializations, and the
adjoint lift ``U_i = above_i.T @ V @ below_i.T`` of the operator's top
eigenvector ``V`` in the general case.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import (CertificationError, ConvergenceError, FeasibilityError,
                     ShapeError, ValidationError)
from .factors import FactorChain, check_target, loss, partial_products

CERTIFY_TOL_FACTOR = 1e-10
DEGENERACY_REL_GAP = 1e-8
POWER_REL_TOL = 1e-12
POWER_RESIDUAL_TOL = 1e-10
DENSE_OPERATOR_MAX_DIM = 64


def spectral_norm(a) -> float:
    """Largest singular value via the smaller of the two Gram matrices."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got ndim={a.ndim}")
    if a.size == 0:
        return 0.0
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    top = float(np.linalg.eigvalsh(gram)[-1])
    return float(np.sqrt(max(top, 0.0)))


def top_singular_triplet(a) -> tuple[float, np.ndarray, np.ndarray]:
    """(sigma_max, left vector, right vector); ties broken by LAPACK order."""
    a = np.asarray(a, dtype=float)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return float(s[0]), u[:, 0], vt[0, :]


def certify_minimizer(chain: FactorChain, target, tol_factor: float = CERTIFY_TOL_FACTOR) -> float:
    """Require loss <= tol_factor * max(1, ||target||_F^2); return the loss.

    The closed forms hold only on the zero-loss set, so near-minimizers
    outside this band are refused instead of silently extrapolated.
    """
    target = check_target(chain, target)
    value = loss(chain, target)
    bound = tol_factor * max(1.0, float(np.sum(target * target)))
    if value > bound:
        raise CertificationError(
            f"loss {value:.3e} exceeds certification bound {bound:.3e}; "
            "input is not a certified minimizer"
        )
    return value


@dataclass(frozen=True)
class KroneckerSumOperator:
    """Matrix-free ``sum_i input_grams[i] (x) output_grams[i]``.

    ``input_grams[i] = below_i.T @ below_i`` (shape ``d_0 x d_0``) and
    ``output_grams[i] = above_i @ above_i.T`` (shape ``d_L x d_L``) are PSD,
    so the operator is symmetric PSD on the product space. ``apply`` acts on
    product-shaped matrices; column-major vectorization links it to the
    explicit Kronecker-sum matrix.
    """

    input_grams: tuple[np.ndarray, ...]
    output_grams: tuple[np.ndarray, ...]

    @classmethod
    def from_chain(cls, chain: FactorChain) -> "KroneckerSumOperator":
        parts = partial_products(chain)
        return cls(
            input_grams=tuple(b.T @ b for b in parts.below),
            output_grams=tuple(a @ a.T for a in parts.above),
        )

    @property
    def product_shape(self) -> tuple[int, int]:
        return (self.output_grams[0].shape[0], self.input_grams[0].shape[0])

    @property
    def dim(self) -> int:
        rows, cols = self.product_shape
        return rows * cols

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.product_shape:
            raise ShapeError(f"operand shape {x.shape} != {self.product_shape}")
        out = np.zeros_like(x)
        for g_in, g_out in zip(self.input_grams, self.output_grams):
            out += g_out @ x @ g_in
        return out


@dataclass
class SharpnessReport:
    """Top Hessian eigenvalue plus how it was obtained.

    ``residual`` is the eigen-residual ``||Op v - mu v||_2`` of the
    operator's top eigenpair (``mu = lambda_max / 2``); it is 0 for the
    closed-form specializations. ``degenerate`` flags a top eigenvalue whose
    two largest estimates differ by less than 1e-8 relative, in which case
    the extremal direction is one maximizer among many.
    """

    lambda_max: float
    method: str
    iterations: int
    residual: float
    extremal_direction: list[np.ndarray] | None = None
    degenerate: bool = False

    def to_json_dict(self) -> dict:
        doc = {
            "lambda_max": self.lambda_max,
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "degenerate": self.degenerate,
        }
        if self.extremal_direction is not None:
            doc["direction"] = [b.reshape(-1, order="C").tolist()
                                for b in self.extremal_direction]
        return doc


def _start_matrix(shape: tuple[int, int]) -> np.ndarray:
    """Deterministic start: all ones plus tiny fixed-seed noise."""
    noise = np.random.default_rng(0).standard_normal(shape)
    start = np.ones(shape) + 1e-3 * noise
    return start / np.linalg.norm(start)


def _power_iteration(op: KroneckerSumOperator, start: np.ndarray, max_iters: int,
                     rel_tol: float = POWER_REL_TOL,
                     residual_tol: float = POWER_RESIDUAL_TOL):
    """Power iteration on the PSD operator; returns (value, vector, iters, residual).

    Raises ConvergenceError (carrying the best estimate) when the budget is
    exhausted before both the relative eigenvalue change and the residual
    tolerance are met.
    """
    x = start / np.linalg.norm(start)
    value = 0.0
    for it in range(1, max_iters + 1):
        y = op.apply(x)
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            return 0.0, x, it, 0.0
        new_value = float(np.sum(x * y))
        x = y / norm_y
        change = abs(new_value - value)
        value = new_value
        if change <= rel_tol * max(abs(value), 1e-300):
            residual = float(np.linalg.norm(op.apply(x) - value * x))
            if residual <= residual_tol * max(abs(value), 1e-300):
                return value, x, it, residual
    residual = float(np.linalg.norm(op.apply(x) - value * x))
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(best estimate {value:.17g}, residual {residual:.3e})",
        best_estimate=value, iterations=max_iters,
    )


def top_eigenpair(op: KroneckerSumOperator):
    """Top eigenpair of the PSD operator plus a second-eigenvalue estimate.

    Returns ``(value, matrix eigenvector, second_value or None, applies,
    residual)``. Small operators are materialized against the canonical
    basis and solved densely; larger ones go through a Krylov solve with a
    deterministic start vector, falling back to plain power iteration if
    that fails to converge.
    """
    rows, cols = op.product_shape
    n = op.dim
    applies = 0

    if n == 1:
        x = np.ones((rows, cols))
        value = float(op.apply(x)[0, 0])
        return value, x, None, 1, 0.0

    if n <= DENSE_OPERATOR_MAX_DIM:
        dense = np.empty((n, n))
        for j in range(n):
            basis = np.zeros(n)
            basis[j] = 1.0
            dense[:, j] = op.apply(basis.reshape((rows, cols), order="F")).reshape(-1, order="F")
        applies = n
        dense = 0.5 * (dense + dense.T)
        eigvals, eigvecs = np.linalg.eigh(dense)
        value = float(eigvals[-1])
        second = float(eigvals[-2])
        x = eigvecs[:, -1].reshape((rows, cols), order="F")
        residual = float(np.linalg.norm(op.apply(x) - value * x))
        return value, x, second, applies + 1, residual

    start = _start_matrix((rows, cols))
    counter = {"applies": 0}

    def matvec(v):
        counter["applies"] += 1
        return op.apply(v.reshape((rows, cols), order="F")).reshape(-1, order="F")

    linop = LinearOperator((n, n), matvec=matvec, dtype=float)
    try:
        eigvals, eigvecs = eigsh(linop, k=2, which="LA", tol=0,
                                 v0=start.reshape(-1, order="F"))
        order = np.argsort(eigvals)
        value = float(eigvals[order[-1]])
        second = float(eigvals[order[-2]])
        x = eigvecs[:, order[-1]].reshape((rows, cols), order="F")
        residual = float(np.linalg.norm(op.apply(x) - value * x))
        return value, x, second, counter["applies"] + 1, residual
    except ArpackNoConvergence:
        max_iters = 100 * n
        value, x, iters, residual = _power_iteration(op, start, max_iters)
        second = _deflated_second_estimate(op, value, x, max_iters=min(200, max_iters))
        return value, x, second, counter["applies"] + iters, residual


def _deflated_second_estimate(op, value, top_vec, max_iters):
    """Best-effort second eigenvalue via deflated power iteration."""
    rows, cols = op.product_shape
    start = np.ones((rows, cols)) + 1e-3 * np.random.default_rng(1).standard_normal((rows, cols))
    start -= float(np.sum(start * top_vec)) * top_vec
    norm = np.linalg.norm(start)
    if norm == 0.0:
        return None
    x = start / norm
    second = 0.0
    for _ in range(max_iters):
        y = op.apply(x) - value * float(np.sum(top_vec * x)) * top_vec
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            return 0.0
        second = float(np.sum(x * y))
        x = y / norm_y
    return second


def _fallback_unit_direction(chain: FactorChain) -> list[np.ndarray]:
    """Arbitrary unit direction for the zero-curvature degenerate case."""
    blocks = [np.zeros_like(f) for f in chain.factors]
    blocks[0][0, 0] = 1.0
    return blocks


def lambda_max_general(chain: FactorChain, target, want_direction: bool = False) -> SharpnessReport:
    """Top Hessian eigenvalue at a certified minimizer, any depth and shape.

    Computes twice the top eigenvalue of the Kronecker-sum operator. When
    ``want_direction`` is set, the operator's top eigenvector ``V`` is
    lifted blockwise to ``U_i = above_i.T @ V @ below_i.T`` and normalized
    to a unit-norm direction achieving the eigenvalue.
    """
    certify_minimizer(chain, target)
    op = KroneckerSumOperator.from_chain(chain)
    value, top_vec, second, applies, residual = top_eigenpair(op)
    value = max(value, 0.0)
    degenerate = second is not None and (value - second) <= DEGENERACY_REL_GAP * max(value, 0.0)

    direction = None
    if want_direction:
        parts = partial_products(chain)
        blocks = [parts.above[i].T @ top_vec @ parts.below[i].T for i in range(chain.depth)]
        norm = float(np.sqrt(sum(np.sum(np.square(b)) for b in blocks)))
        if norm == 0.0:
            direction = _fallback_unit_direction(chain)
            degenerate = True
        else:
            direction = [b / norm for b in blocks]

    return SharpnessReport(
        lambda_max=2.0 * value,
        method="general_kron",
        iterations=applies,
        residual=residual,
        extremal_direction=direction,
        degenerate=degenerate,
    )


def lambda_max_scalar_chain(chain: FactorChain, target, want_direction: bool = False) -> SharpnessReport:
    """Closed form for chains with scalar ends (``d_0 = d_L = 1``).

    ``lambda_max = 2 * sum_i sigma_max(above_i)^2 sigma_max(below_i)^2``.
    The achieving direction places, in each layer, a rank-one outer product
    of the relevant top singular vectors, weighted by the layer's own
    sigma-product and jointly normalized.
    """
    dims = chain.dims
    if dims[0] != 1 or dims[-1] != 1:
        raise ValidationError(
            f"scalar-chain formula needs end dimensions 1, got d0={dims[0]}, dL={dims[-1]}"
        )
    certify_minimizer(chain, target)
    parts = partial_products(chain)
    sigmas_above = [spectral_norm(a) for a in parts.above]
    sigmas_below = [spectral_norm(b) for b in parts.below]
    weights = np.array([sa * sb for sa, sb in zip(sigmas_above, sigmas_below)])
    value = 2.0 * float(np.sum(weights**2))

    direction = None
    degenerate = False
    if want_direction:
        total = float(np.linalg.norm(weights))
        if total == 0.0:
            direction = _fallback_unit_direction(chain)
            degenerate = True
        else:
            direction = []
            for i in range(chain.depth):
                _, scalar_left, right_of_above = top_singular_triplet(parts.above[i])
                _, left_of_below, scalar_right = top_singular_triplet(parts.below[i])
                # orient each pair so the scalar-side singular vector is +1;
                # all layer contributions then add with the same sign.
                if scalar_left[0] < 0:
                    right_of_above = -right_of_above
                if scalar_right[0] < 0:
                    left_of_below = -left_of_below
                direction.append((weights[i] / total) * np.outer(right_of_above, left_of_below))

    return SharpnessReport(
        lambda_max=value,
        method="scalar_chain",
        iterations=0,
        residual=0.0,
        extremal_direction=direction,
        degenerate=degenerate,
    )


def lambda_max_depth2(left, right, target, want_direction: bool = False) -> SharpnessReport:
    """Closed form for a two-factor chain written as ``target = left @ right.T``.

    ``left`` has shape ``(d_L, k)`` and ``right`` has shape ``(d_0, k)``
    with ``k >= min(d_0, d_L)``. Equals
    ``2 * (sigma_max(left)^2 + sigma_max(right)^2)``. The returned direction
    blocks are for the chain parametrization ``(right.T, left)``.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    target = np.asarray(target, dtype=float)
    if left.ndim != 2 or right.ndim != 2:
        raise ShapeError("left and right must be matrices")
    if left.shape[1] != right.shape[1]:
        raise ShapeError(f"inner dimensions differ: {left.shape[1]} vs {right.shape[1]}")
    d_out, k = left.shape
    d_in = right.shape[0]
    if k < min(d_in, d_out):
        raise FeasibilityError(f"inner dimension {k} < min(d0, dL) = {min(d_in, d_out)}")
    if target.shape != (d_out, d_in):
        raise ShapeError(f"target shape {target.shape} != {(d_out, d_in)}")
    residual = target - left @ right.T
    bound = CERTIFY_TOL_FACTOR * max(1.0, float(np.sum(target * target)))
    if float(np.sum(residual * residual)) > bound:
        raise CertificationError("left @ right.T does not reproduce the target")

    sigma_left = spectral_norm(left)
    sigma_right = spectral_norm(right)
    value = 2.0 * (sigma_left**2 + sigma_right**2)

    direction = None
    degenerate = False
    if want_direction:
        total = float(np.sqrt(sigma_left**2 + sigma_right**2))
        if total == 0.0:
            chain = FactorChain((right.T, left))
            direction = _fallback_unit_direction(chain)
            degenerate = True
        else:
            _, u_left, v_left = top_singular_triplet(left)
            _, u_right, v_right = top_singular_triplet(right)
            # block for the first factor (right.T) and the second (left)
            direction = [
                (sigma_left / total) * np.outer(v_left, u_right),
                (sigma_right / total) * np.outer(u_left, v_right),
            ]

    return SharpnessReport(
        lambda_max=value,
        method="depth2",
        iterations=0,
        residual=0.0,
        extremal_direction=direction,
        degenerate=degenerate,
    )


def extremal_direction(chain: FactorChain, target) -> tuple[list[np.ndarray], SharpnessReport]:
    """Unit-norm direction maximizing the Hessian quadratic form at a minimizer.

    Dispatches to the constructive singular-vector formulas for scalar-ended
    and depth-2 chains, otherwise to the general eigenvector lift. Returns
    the direction together with the full report.
    """
    dims = chain.dims
    if dims[0] == 1 and dims[-1] == 1:
        report = lambda_max_scalar_chain(chain, target, want_direction=True)
    elif chain.depth == 2:
        report = lambda_max_depth2(chain.factors[1], chain.factors[0].T, target,
                                   want_direction=True)
    else:
        report = lambda_max_general(chain, target, want_direction=True)
    return report.extremal_direction, report
