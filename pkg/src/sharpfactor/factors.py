"""Factor chains and the squared-error factorization objective.

A chain is an ordered list of factors (layers) ``W_1 .. W_L``, factor ``i``
of shape ``(d_i, d_{i-1})``, scored against a target of shape
``(d_L, d_0)`` by

    loss(chain, target) = || target - W_L @ ... @ W_1 ||_F^2 .

The minimizer set consists of every chain whose end-to-end product equals
the target. ``partial_products`` exposes, for each layer, the product of
all factors above it and all factors below it; these two families drive
every curvature computation in the package.

Parameter vectors flatten each factor column-major (Fortran order), blocks
concatenated in layer order. All helpers here are pure functions over
arrays that are treated as immutable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FeasibilityError, ShapeError, ValidationError

DEFAULT_RANDOM_DIM_RANGE = (1, 32)


def validate_dims(dims) -> tuple[int, ...]:
    """Check a dimension signature ``(d_0, ..., d_L)`` and return it as ints.

    Requirements: integer entries, all positive, depth ``L >= 2``, and every
    dimension at least ``min(d_0, d_L)``. The last condition makes every
    target of shape ``(d_L, d_0)`` reachable, since the product rank is
    capped by the smallest intermediate dimension.
    """
    try:
        out = tuple(int(d) for d in dims)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"dimension signature must be integers: {dims!r}") from exc
    if any(d != orig for d, orig in zip(out, dims)):
        raise ValidationError(f"dimension signature must be integers: {dims!r}")
    if len(out) < 3:
        raise FeasibilityError(f"need depth >= 2, got {len(out) - 1} factors")
    if any(d <= 0 for d in out):
        raise FeasibilityError(f"dimensions must be positive: {out}")
    needed = min(out[0], out[-1])
    if min(out) < needed:
        raise FeasibilityError(
            f"bottleneck dimension {min(out)} < min of end dimensions {needed}: {out}"
        )
    return out


def num_params(dims) -> int:
    """Total parameter count: sum of d_i * d_{i-1} over layers."""
    dims = validate_dims(dims)
    return sum(dims[i + 1] * dims[i] for i in range(len(dims) - 1))


def random_dims(seed: int, depth: int, d0: int | None = None, d_last: int | None = None,
                low: int = DEFAULT_RANDOM_DIM_RANGE[0],
                high: int = DEFAULT_RANDOM_DIM_RANGE[1]) -> tuple[int, ...]:
    """Draw a feasible random signature of the given depth.

    Interior dimensions are uniform integers in ``[low, high]``, floored at
    ``min(d0, d_last)`` to keep the signature feasible. End dimensions are
    drawn the same way when not fixed by the caller.
    """
    if depth < 2:
        raise FeasibilityError(f"need depth >= 2, got {depth}")
    rng = np.random.default_rng(seed)
    first = int(d0) if d0 is not None else int(rng.integers(low, high + 1))
    last = int(d_last) if d_last is not None else int(rng.integers(low, high + 1))
    floor = max(low, min(first, last))
    interior = [int(rng.integers(floor, high + 1)) for _ in range(depth - 1)]
    return validate_dims((first, *interior, last))


@dataclass(frozen=True)
class FactorChain:
    """Ordered factors of a deep factorization; the point in parameter space.

    Factor ``i`` (0-based) has shape ``(dims[i+1], dims[i])``. Arrays are
    converted to float64 on construction and must not be mutated afterwards.
    """

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.asarray(f, dtype=float) for f in self.factors)
        if len(factors) < 2:
            raise FeasibilityError(f"need depth >= 2, got {len(factors)} factors")
        for i, f in enumerate(factors):
            if f.ndim != 2:
                raise ShapeError(f"factor {i} must be a matrix, got ndim={f.ndim}")
        for i in range(len(factors) - 1):
            if factors[i + 1].shape[1] != factors[i].shape[0]:
                raise ShapeError(
                    f"factor {i + 1} has {factors[i + 1].shape[1]} columns but "
                    f"factor {i} has {factors[i].shape[0]} rows"
                )
        object.__setattr__(self, "factors", factors)
        validate_dims(self.dims)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.factors[0].shape[1],) + tuple(f.shape[0] for f in self.factors)

    @property
    def depth(self) -> int:
        return len(self.factors)

    @property
    def num_params(self) -> int:
        return sum(f.size for f in self.factors)

    def flatten(self) -> np.ndarray:
        """Stack all factors into one vector, column-major within each block."""
        return np.concatenate([f.reshape(-1, order="F") for f in self.factors])

    @classmethod
    def from_flat(cls, dims, vec) -> "FactorChain":
        dims = validate_dims(dims)
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != num_params(dims):
            raise ShapeError(f"vector length {vec.size} != parameter count {num_params(dims)}")
        factors = []
        offset = 0
        for i in range(len(dims) - 1):
            rows, cols = dims[i + 1], dims[i]
            block = vec[offset:offset + rows * cols].reshape((rows, cols), order="F")
            factors.append(block)
            offset += rows * cols
        return cls(tuple(factors))

    @classmethod
    def identity(cls, dims) -> "FactorChain":
        """Chain of (rectangular) identity factors."""
        dims = validate_dims(dims)
        return cls(tuple(np.eye(dims[i + 1], dims[i]) for i in range(len(dims) - 1)))


@dataclass(frozen=True)
class PartialProducts:
    """Products of factors strictly above / strictly below each layer.

    ``above[i] = W_L ... W_{i+2}`` with shape ``(d_L, d_{i+1})`` and
    ``below[i] = W_i ... W_1`` with shape ``(d_i, d_0)`` in 0-based layer
    index ``i``; empty products are identities, so ``above[-1]`` and
    ``below[0]`` are identity matrices. For every layer,
    ``above[i] @ factors[i] @ below[i]`` equals the full chain product.
    """

    above: tuple[np.ndarray, ...]
    below: tuple[np.ndarray, ...]


def product(chain: FactorChain) -> np.ndarray:
    """End-to-end product ``W_L @ ... @ W_1``, shape ``(d_L, d_0)``."""
    out = chain.factors[0]
    for f in chain.factors[1:]:
        out = f @ out
    return out


def partial_products(chain: FactorChain) -> PartialProducts:
    """All above/below products in two cumulative passes (O(L) multiplies)."""
    factors = chain.factors
    depth = len(factors)
    dims = chain.dims
    below = [np.eye(dims[0])]
    for i in range(1, depth):
        below.append(factors[i - 1] @ below[i - 1])
    above = [None] * depth
    above[depth - 1] = np.eye(dims[-1])
    for i in range(depth - 2, -1, -1):
        above[i] = above[i + 1] @ factors[i + 1]
    return PartialProducts(above=tuple(above), below=tuple(below))


def check_target(chain: FactorChain, target) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    expected = (chain.dims[-1], chain.dims[0])
    if target.shape != expected:
        raise ShapeError(f"target shape {target.shape} != {expected}")
    return target


def loss(chain: FactorChain, target) -> float:
    """Squared Frobenius norm of the residual ``target - product(chain)``."""
    target = check_target(chain, target)
    residual = target - product(chain)
    return float(np.sum(residual * residual))


def make_minimizer(dims, seed: int, scale: float = 1.0) -> tuple[FactorChain, np.ndarray]:
    """Random chain with standard-normal entries and the target it attains.

    The target is the chain's own product, so the pair is an exact global
    minimizer (zero loss up to nothing: the residual is computed from the
    identical product). Same signature and seed always give the same chain;
    factors are generated in layer order. ``scale`` multiplies every entry.
    """
    dims = validate_dims(dims)
    rng = np.random.default_rng(seed)
    factors = tuple(
        scale * rng.standard_normal((dims[i + 1], dims[i]))
        for i in range(len(dims) - 1)
    )
    chain = FactorChain(factors)
    return chain, product(chain)


def rescale_adjacent(chain: FactorChain, index: int, c: float) -> FactorChain:
    """Scale layer ``index`` by ``c`` and layer ``index + 1`` by ``1/c``.

    The end-to-end product is unchanged (exactly so when ``c`` is a power of
    two), so the result stays on the minimizer manifold while its curvature
    generally changes.
    """
    if not 0 <= index < chain.depth - 1:
        raise ValidationError(f"index {index} out of range for depth {chain.depth}")
    if c == 0:
        raise ValidationError("rescale constant must be nonzero")
    factors = list(chain.factors)
    factors[index] = c * factors[index]
    factors[index + 1] = factors[index + 1] / c
    return FactorChain(tuple(factors))


def instance_to_dict(chain: FactorChain, target, seed: int | None = None) -> dict:
    """JSON-ready document: dims, row-major factors, row-major target, seed."""
    target = check_target(chain, target)
    return {
        "dims": list(chain.dims),
        "factors": [f.reshape(-1, order="C").tolist() for f in chain.factors],
        "target": target.reshape(-1, order="C").tolist(),
        "seed": seed,
    }


def instance_from_dict(doc: dict) -> tuple[FactorChain, np.ndarray, int | None]:
    try:
        dims = validate_dims(doc["dims"])
        raw_factors = doc["factors"]
        raw_target = doc["target"]
        seed = doc.get("seed")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed instance document: {exc}") from exc
    if len(raw_factors) != len(dims) - 1:
        raise ShapeError(f"expected {len(dims) - 1} factors, got {len(raw_factors)}")
    factors = []
    for i, flat in enumerate(raw_factors):
        rows, cols = dims[i + 1], dims[i]
        flat = np.asarray(flat, dtype=float)
        if flat.size != rows * cols:
            raise ShapeError(f"factor {i} has {flat.size} entries, expected {rows * cols}")
        factors.append(flat.reshape((rows, cols), order="C"))
    target = np.asarray(raw_target, dtype=float)
    if target.size != dims[-1] * dims[0]:
        raise ShapeError(f"target has {target.size} entries, expected {dims[-1] * dims[0]}")
    target = target.reshape((dims[-1], dims[0]), order="C")
    chain = FactorChain(tuple(factors))
    return chain, target, None if seed is None else int(seed)
