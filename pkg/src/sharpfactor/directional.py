"""First- and second-order directional structure of the chain loss.

A direction is a list of blocks ``(U_1, ..., U_L)`` matching the chain's
factor shapes. The map ``t -> loss(W + t U)`` is a polynomial in ``t``;
this module evaluates its derivative and exact second derivative at
``t = 0``, plus central-difference counterparts used as independent checks.

With ``above_i`` / ``below_i`` the partial products around layer ``i`` and
``R = product - target`` the residual, the gradient block for layer ``i``
is ``2 * above_i.T @ R @ below_i.T``, and the second derivative along a
direction ``U`` is

    2 * || sum_i above_i @ U_i @ below_i ||_F^2
      + 4 * < R , sum_{k<i} above_i @ U_i @ (W_{i-1} .. W_{k+1}) @ U_k @ below_k > .

The cross term vanishes at zero-loss points, where the quadratic form
reduces to the first (nonnegative) term.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError
from .factors import FactorChain, check_target, partial_products, validate_dims


def check_direction(chain: FactorChain, blocks) -> list[np.ndarray]:
    """Validate that the blocks match the chain's factor shapes."""
    if len(blocks) != chain.depth:
        raise ShapeError(f"direction has {len(blocks)} blocks, chain depth is {chain.depth}")
    out = []
    for i, (block, factor) in enumerate(zip(blocks, chain.factors)):
        block = np.asarray(block, dtype=float)
        if block.shape != factor.shape:
            raise ShapeError(f"block {i} shape {block.shape} != factor shape {factor.shape}")
        out.append(block)
    return out


def flatten_blocks(blocks) -> np.ndarray:
    """Stack blocks into one vector, column-major within each block."""
    return np.concatenate([np.asarray(b, dtype=float).reshape(-1, order="F") for b in blocks])


def blocks_from_flat(dims, vec) -> list[np.ndarray]:
    """Inverse of :func:`flatten_blocks` for a given dimension signature."""
    dims = validate_dims(dims)
    vec = np.asarray(vec, dtype=float).reshape(-1)
    blocks = []
    offset = 0
    for i in range(len(dims) - 1):
        rows, cols = dims[i + 1], dims[i]
        blocks.append(vec[offset:offset + rows * cols].reshape((rows, cols), order="F"))
        offset += rows * cols
    if offset != vec.size:
        raise ShapeError(f"vector length {vec.size} != parameter count {offset}")
    return blocks


def zero_direction(dims) -> list[np.ndarray]:
    dims = validate_dims(dims)
    return [np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]


def direction_norm(blocks) -> float:
    """Joint Frobenius norm sqrt(sum_i ||U_i||_F^2)."""
    return float(np.sqrt(sum(float(np.sum(np.square(b))) for b in blocks)))


def unit_direction(blocks) -> list[np.ndarray]:
    norm = direction_norm(blocks)
    if norm == 0.0:
        raise ValidationError("cannot normalize a zero direction")
    return [np.asarray(b, dtype=float) / norm for b in blocks]


def random_unit_direction(dims, rng) -> list[np.ndarray]:
    dims = validate_dims(dims)
    blocks = [rng.standard_normal((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    return unit_direction(blocks)


def perturb(chain: FactorChain, blocks, t: float) -> FactorChain:
    """Chain at ``W + t U``."""
    blocks = check_direction(chain, blocks)
    return FactorChain(tuple(f + t * b for f, b in zip(chain.factors, blocks)))


def gradient_and_loss(chain: FactorChain, target) -> tuple[list[np.ndarray], float]:
    """Gradient blocks and loss in one pass over the partial products."""
    target = check_target(chain, target)
    parts = partial_products(chain)
    full = parts.above[0] @ chain.factors[0] @ parts.below[0]
    residual = full - target
    grad = [2.0 * (parts.above[i].T @ residual @ parts.below[i].T)
            for i in range(chain.depth)]
    return grad, float(np.sum(residual * residual))


def gradient(chain: FactorChain, target) -> list[np.ndarray]:
    """Blockwise gradient of the loss; identically zero at minimizers."""
    return gradient_and_loss(chain, target)[0]


def second_directional(chain: FactorChain, target, blocks) -> float:
    """Exact second derivative of ``t -> loss(W + t U)`` at ``t = 0``.

    Valid at every point in parameter space. At zero-loss points this is the
    Hessian quadratic form ``2 * || sum_i above_i @ U_i @ below_i ||_F^2``;
    away from them a residual-weighted cross term over layer pairs
    contributes as well.
    """
    target = check_target(chain, target)
    blocks = check_direction(chain, blocks)
    factors = chain.factors
    depth = chain.depth
    dims = chain.dims
    parts = partial_products(chain)

    first_order = sum(parts.above[i] @ blocks[i] @ parts.below[i] for i in range(depth))
    value = 2.0 * float(np.sum(first_order * first_order))

    residual = parts.above[0] @ factors[0] @ parts.below[0] - target
    if np.any(residual):
        cross = np.zeros_like(residual)
        for i in range(1, depth):
            head = parts.above[i] @ blocks[i]
            # inner runs over products of the factors strictly between the
            # layer pair, extended one factor at a time as k walks down.
            inner = np.eye(dims[i])
            for k in range(i - 1, -1, -1):
                cross += head @ inner @ blocks[k] @ parts.below[k]
                if k > 0:
                    inner = inner @ factors[k]
        value += 4.0 * float(np.sum(residual * cross))
    return value


def fd_hessian_vector(chain: FactorChain, target, blocks, step: float = 1e-4) -> list[np.ndarray]:
    """Central-difference Hessian-vector product from two gradient calls.

    Returns ``(grad(W + h U) - grad(W - h U)) / (2 h)`` blockwise. Serves as
    an oracle independent of :func:`second_directional`.
    """
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step}")
    blocks = check_direction(chain, blocks)
    g_plus = gradient(perturb(chain, blocks, step), target)
    g_minus = gradient(perturb(chain, blocks, -step), target)
    return [(p - m) / (2.0 * step) for p, m in zip(g_plus, g_minus)]
