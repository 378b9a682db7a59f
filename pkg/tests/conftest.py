import numpy as np
import pytest

from sharpfactor import make_minimizer, num_params


def random_feasible_dims(rng, depth_range=(2, 6), dim_max=8, n_max=200,
                         d0=None, d_last=None):
    """Random signature with bounded depth, dims, and parameter count."""
    while True:
        depth = int(rng.integers(depth_range[0], depth_range[1] + 1))
        first = d0 if d0 is not None else int(rng.integers(1, dim_max + 1))
        last = d_last if d_last is not None else int(rng.integers(1, dim_max + 1))
        floor = max(1, min(first, last))
        dims = (first, *(int(rng.integers(floor, dim_max + 1)) for _ in range(depth - 1)), last)
        if num_params(dims) <= n_max:
            return dims


def random_minimizer(seed, **kwargs):
    """Seeded random (chain, target) minimizer pair with bounded size."""
    rng = np.random.default_rng(seed)
    dims = random_feasible_dims(rng, **kwargs)
    return make_minimizer(dims, seed=int(rng.integers(0, 2**31)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
