import numpy as np
import pytest

from sharpfactor import (FactorChain, ShapeError, blocks_from_flat,
                         fd_hessian_vector, flatten_blocks, gradient, loss,
                         perturb, random_unit_direction, second_directional,
                         zero_direction)

from conftest import random_minimizer


def fd_gradient_per_coordinate(chain, target, eps=1e-6):
    """Loss-based central differences, one coordinate at a time."""
    dims = chain.dims
    base = chain.flatten()
    out = np.empty(base.size)
    for j in range(base.size):
        bumped = base.copy()
        bumped[j] += eps
        plus = loss(FactorChain.from_flat(dims, bumped), target)
        bumped[j] -= 2 * eps
        minus = loss(FactorChain.from_flat(dims, bumped), target)
        out[j] = (plus - minus) / (2 * eps)
    return out


def fd_second_difference(chain, target, blocks, h=1e-4):
    """Loss-based second difference along a direction."""
    plus = loss(perturb(chain, blocks, h), target)
    minus = loss(perturb(chain, blocks, -h), target)
    mid = loss(chain, target)
    return (plus - 2 * mid + minus) / h**2


def random_point(seed, dims=(2, 4, 3, 2)):
    """A generic non-minimum point with its own random target."""
    rng = np.random.default_rng(seed)
    chain = FactorChain(tuple(
        rng.standard_normal((dims[i + 1], dims[i])) for i in range(len(dims) - 1)
    ))
    target = rng.standard_normal((dims[-1], dims[0]))
    return chain, target


class TestFlatten:
    def test_roundtrip(self, rng):
        chain, _ = random_minimizer(1)
        blocks = random_unit_direction(chain.dims, rng)
        vec = flatten_blocks(blocks)
        back = blocks_from_flat(chain.dims, vec)
        for a, b in zip(blocks, back):
            assert np.array_equal(a, b)

    def test_chain_flatten_agrees_with_blocks(self):
        chain, _ = random_minimizer(2)
        assert np.array_equal(chain.flatten(), flatten_blocks(chain.factors))


class TestGradient:
    def test_zero_on_minimizer(self):
        for seed in range(5):
            chain, target = random_minimizer(seed)
            scale = np.sqrt(float(np.sum(target * target)))
            worst = max(np.max(np.abs(g)) for g in gradient(chain, target))
            assert worst <= 1e-10 * max(scale, 1.0)

    def test_scalar_hand_value(self):
        chain = FactorChain((np.array([[1.0]]), np.array([[1.0]])))
        blocks = gradient(chain, np.array([[4.0]]))
        assert blocks[0] == np.array([[-6.0]])
        assert blocks[1] == np.array([[-6.0]])

    @pytest.mark.parametrize("seed", [3, 14, 15])
    def test_matches_fd_per_coordinate(self, seed):
        chain, target = random_point(seed)
        expected = fd_gradient_per_coordinate(chain, target)
        got = flatten_blocks(gradient(chain, target))
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(got - expected)) <= 1e-5 * max(scale, 1.0)


class TestSecondDirectional:
    def test_zero_direction(self):
        chain, target = random_minimizer(0)
        assert second_directional(chain, target, zero_direction(chain.dims)) == 0.0

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_matches_second_difference_at_non_minimum(self, seed, rng):
        # exercises the residual-weighted cross term
        chain, target = random_point(seed)
        blocks = random_unit_direction(chain.dims, rng)
        exact = second_directional(chain, target, blocks)
        approx = fd_second_difference(chain, target, blocks)
        assert approx == pytest.approx(exact, rel=1e-4)

    @pytest.mark.parametrize("seed", [4, 5])
    def test_matches_second_difference_at_minimum(self, seed, rng):
        chain, target = random_minimizer(seed)
        blocks = random_unit_direction(chain.dims, rng)
        exact = second_directional(chain, target, blocks)
        approx = fd_second_difference(chain, target, blocks)
        assert approx == pytest.approx(exact, rel=1e-4, abs=1e-8)

    def test_quadratic_scaling(self, rng):
        chain, target = random_point(8)
        blocks = random_unit_direction(chain.dims, rng)
        base = second_directional(chain, target, blocks)
        for c in (0.5, 3.0, -2.0):
            scaled = second_directional(chain, target, [c * b for b in blocks])
            assert scaled == pytest.approx(c**2 * base, rel=1e-12)

    def test_psd_at_minima(self, rng):
        chain, target = random_minimizer(10)
        for _ in range(50):
            blocks = random_unit_direction(chain.dims, rng)
            assert second_directional(chain, target, blocks) >= 0.0

    def test_shape_mismatch(self):
        chain, target = random_minimizer(0)
        bad = [np.zeros((1, 1))] * chain.depth
        with pytest.raises(ShapeError):
            second_directional(chain, target, bad)


class TestFdHessianVector:
    def test_zero_direction(self):
        chain, target = random_point(0)
        out = fd_hessian_vector(chain, target, zero_direction(chain.dims))
        assert all(np.array_equal(b, np.zeros_like(b)) for b in out)

    @pytest.mark.parametrize("seed", [6, 7])
    def test_symmetry(self, seed, rng):
        chain, target = random_point(seed)
        u = random_unit_direction(chain.dims, rng)
        v = random_unit_direction(chain.dims, rng)
        left = float(flatten_blocks(fd_hessian_vector(chain, target, u)) @ flatten_blocks(v))
        right = float(flatten_blocks(fd_hessian_vector(chain, target, v)) @ flatten_blocks(u))
        assert left == pytest.approx(right, rel=1e-6)

    @pytest.mark.parametrize("seed", [8, 9])
    def test_quadratic_form_consistency(self, seed, rng):
        chain, target = random_point(seed)
        u = random_unit_direction(chain.dims, rng)
        via_hvp = float(flatten_blocks(fd_hessian_vector(chain, target, u)) @ flatten_blocks(u))
        exact = second_directional(chain, target, u)
        assert via_hvp == pytest.approx(exact, rel=1e-4)
