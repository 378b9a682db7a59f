import numpy as np
import pytest

from sharpfactor import (GDConfig, ValidationError, blocks_from_flat,
                         classify_stability, dense_hessian_at_minimum,
                         escape_experiment, gd_run, linearized_run,
                         make_minimizer, perturb, perturbed_start,
                         trajectory_to_csv)
from sharpfactor.sharpness import extremal_direction

SCALAR_15_DIMS = (1, 7, 2, 1, 6, 3, 4, 1, 3, 6, 3, 7, 7, 6, 8, 1)
DEPTH2_DIMS = (20, 20, 10)


class TestGDConfig:
    def test_rejects_negative_step(self):
        with pytest.raises(ValidationError):
            GDConfig(step_size=-1.0)

    def test_rejects_zero_radius(self):
        with pytest.raises(ValidationError):
            GDConfig(step_size=0.1, init_radius=0.0)

    def test_rejects_zero_record_every(self):
        with pytest.raises(ValidationError):
            GDConfig(step_size=0.1, record_every=0)


class TestGdRun:
    def test_zero_step_size_freezes_iterates(self):
        chain, target = make_minimizer((2, 3, 2), seed=0)
        blocks, _ = extremal_direction(chain, target)
        start = perturb(chain, blocks, 0.1)
        config = GDConfig(step_size=0.0, max_iters=5, record_params=True,
                          stop_on_converged=False)
        traj = gd_run(start, target, config, reference=chain)
        for params in traj.params:
            assert np.array_equal(params, start.flatten())

    def test_minimizer_is_fixed_point(self):
        chain, target = make_minimizer((2, 4, 3), seed=1)
        for step in (1e-3, 0.1, 10.0):
            config = GDConfig(step_size=step, max_iters=20, record_params=True,
                              stop_on_converged=False)
            traj = gd_run(chain, target, config, reference=chain)
            assert np.array_equal(traj.final_params, chain.flatten())
            assert float(np.max(traj.norm_dist)) == 0.0

    def test_stable_step_contracts(self):
        chain, target = make_minimizer(SCALAR_15_DIMS, seed=0)
        blocks, report = extremal_direction(chain, target)
        step = 0.9 * 2.0 / report.lambda_max
        start = perturb(chain, blocks, 1e-9)
        config = GDConfig(step_size=step, max_iters=3000, stop_on_converged=False)
        traj = gd_run(start, target, config, reference=chain)
        assert traj.norm_dist[-1] <= traj.norm_dist[0]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_stable_regime_loss_non_increasing_after_warmup(self, seed):
        chain, target = make_minimizer((4, 6, 5, 4), seed=seed)
        blocks, report = extremal_direction(chain, target)
        step = 0.9 * 2.0 / report.lambda_max
        start = perturb(chain, blocks, 1e-9)
        config = GDConfig(step_size=step, max_iters=500, stop_on_converged=False)
        traj = gd_run(start, target, config, reference=chain)
        increases = np.diff(traj.loss[10:])
        assert np.all(increases <= 1e-12)

    def test_divergence_flagged_not_raised(self):
        chain, target = make_minimizer((2, 3, 2), seed=3)
        blocks, report = extremal_direction(chain, target)
        start = perturb(chain, blocks, 0.5)
        config = GDConfig(step_size=100.0 / report.lambda_max, max_iters=10_000,
                          stop_on_converged=False)
        traj = gd_run(start, target, config, reference=chain)
        assert traj.diverged
        assert not traj.converged

    def test_converged_early_stop(self):
        chain, target = make_minimizer((3, 4, 3), seed=4)
        blocks, report = extremal_direction(chain, target)
        start = perturb(chain, blocks, 1e-3)
        step = 0.5 * 2.0 / report.lambda_max
        config = GDConfig(step_size=step, max_iters=100_000)
        traj = gd_run(start, target, config, reference=chain)
        assert traj.converged
        assert traj.total_iters < 100_000

    def test_record_every_and_final_row(self):
        chain, target = make_minimizer((2, 3, 2), seed=5)
        blocks, _ = extremal_direction(chain, target)
        start = perturb(chain, blocks, 1e-3)
        config = GDConfig(step_size=1e-6, max_iters=7, record_every=3,
                          stop_on_converged=False)
        traj = gd_run(start, target, config)
        assert traj.iterations.tolist() == [0, 3, 6, 7]


@pytest.fixture(scope="module")
def setup():
    chain, target = make_minimizer((3, 4, 3), seed=5)
    hess = dense_hessian_at_minimum(chain, target)
    return chain, target, hess


class TestLinearizedRun:
    def test_null_direction_is_constant(self, setup):
        chain, target, hess = setup
        start = perturb(chain, blocks_from_flat(chain.dims, hess.bottom_vector), 1e-6)
        eta = 2.2 / hess.lambda_max
        traj = linearized_run(start, chain, hess, eta, 50, target=target)
        d0 = np.linalg.norm(traj.params[0] - chain.flatten())
        d_end = np.linalg.norm(traj.params[-1] - chain.flatten())
        assert d_end == pytest.approx(d0, rel=1e-8)

    def test_top_component_growth_factor(self, setup):
        chain, target, hess = setup
        start = perturb(chain, blocks_from_flat(chain.dims, hess.top_vector), 1e-8)
        eta = 2.2 / hess.lambda_max
        traj = linearized_run(start, chain, hess, eta, 50, target=target)
        d0 = np.linalg.norm(traj.params[0] - chain.flatten())
        d_end = np.linalg.norm(traj.params[-1] - chain.flatten())
        assert d_end / d0 == pytest.approx(1.2**50, rel=1e-10)

    def test_threshold_step_oscillates_with_constant_magnitude(self, setup):
        chain, target, hess = setup
        start = perturb(chain, blocks_from_flat(chain.dims, hess.top_vector), 1e-8)
        eta = 2.0 / hess.lambda_max
        traj = linearized_run(start, chain, hess, eta, 50, target=target)
        offsets = [params - chain.flatten() for params in traj.params]
        d0 = np.linalg.norm(offsets[0])
        assert np.linalg.norm(offsets[-1]) == pytest.approx(d0, rel=1e-10)
        # consecutive iterates flip sign along the top eigenvector
        c0 = float(hess.top_vector @ offsets[0])
        c1 = float(hess.top_vector @ offsets[1])
        assert c1 == pytest.approx(-c0, rel=1e-10)

    def test_all_components_scale_by_their_multipliers(self, setup):
        chain, target, hess = setup
        rng = np.random.default_rng(7)
        start_vec = chain.flatten() + 1e-8 * rng.standard_normal(chain.num_params)
        from sharpfactor import FactorChain
        start = FactorChain.from_flat(chain.dims, start_vec)
        offset0 = start.flatten() - chain.flatten()
        eta = 2.2 / hess.lambda_max
        steps = 50
        traj = linearized_run(start, chain, hess, eta, steps, target=target)
        multipliers = (1.0 - eta * hess.eigenvalues) ** steps
        predicted = hess.basis @ (multipliers * (hess.basis.T @ offset0))
        observed = traj.params[-1] - chain.flatten()
        rel = np.linalg.norm(observed - predicted) / np.linalg.norm(predicted)
        assert rel <= 1e-10


class TestClassifyStability:
    def test_regimes(self):
        assert classify_stability(10.0, 0.9 * 2.0 / 10.0) == "stable"
        assert classify_stability(10.0, 1.1 * 2.0 / 10.0) == "unstable"
        assert classify_stability(10.0, 2.0 / 10.0) == "marginal"

    def test_marginal_band_is_tight(self):
        lam = 10.0
        # eta slightly below 2/lambda lowers the threshold side: stable
        assert classify_stability(lam, 2.0 / (lam * (1 + 1e-8))) == "stable"
        assert classify_stability(lam, 2.0 / (lam * (1 - 1e-8))) == "unstable"


class TestEscapeExperiment:
    def test_validation(self):
        with pytest.raises(ValidationError):
            escape_experiment(DEPTH2_DIMS, seeds=[], eta_multipliers=[1.1], radius=1e-9)
        with pytest.raises(ValidationError):
            escape_experiment(DEPTH2_DIMS, seeds=[0], eta_multipliers=[], radius=1e-9)
        with pytest.raises(ValidationError):
            escape_experiment(DEPTH2_DIMS, seeds=[0], eta_multipliers=[-1.0], radius=1e-9)

    def test_depth2_regimes(self):
        result = escape_experiment(DEPTH2_DIMS, seeds=[0, 1],
                                   eta_multipliers=[0.9, 1.0, 1.1], radius=1e-9,
                                   max_iters=3000)
        by_cell = {(v.seed, v.eta_multiplier): v for v in result.verdicts}
        for seed in (0, 1):
            stable = by_cell[(seed, 0.9)]
            assert stable.classification == "stable"
            assert not stable.escaped
            assert stable.final_distance <= stable.initial_distance
            marginal = by_cell[(seed, 1.0)]
            assert marginal.classification == "marginal"
            unstable = by_cell[(seed, 1.1)]
            assert unstable.classification == "unstable"
            assert unstable.escaped
            assert unstable.catapult

    def test_report_schema(self):
        result = escape_experiment(DEPTH2_DIMS, seeds=[0], eta_multipliers=[2.0],
                                   radius=1e-9, max_iters=2000)
        report = result.report
        assert report["dims"] == list(DEPTH2_DIMS)
        cell = report["cells"][0]
        assert cell["classification"] == "unstable"
        assert cell["escaped"] is True
        assert isinstance(cell["escape_iteration"], int)
        assert cell["threshold"] == pytest.approx(cell["lambda_max"] / 2.0)

    def test_parallel_cells_match_serial(self):
        kwargs = dict(seeds=[0, 1], eta_multipliers=[0.9, 1.1], radius=1e-9,
                      max_iters=500)
        serial = escape_experiment((4, 5, 4), threads=1, **kwargs)
        parallel = escape_experiment((4, 5, 4), threads=2, **kwargs)
        assert serial.report == parallel.report

    def test_thread_budget_env(self, monkeypatch):
        from sharpfactor.dynamics import thread_budget
        monkeypatch.setenv("SHARPFACTOR_THREADS", "3")
        assert thread_budget() == 3
        monkeypatch.setenv("SHARPFACTOR_THREADS", "zebra")
        with pytest.raises(ValidationError):
            thread_budget()

    def test_follow_after_escape_reaches_another_minimum(self):
        # with the escape stop disabled, the run settles at a different
        # zero-loss point far from the original minimizer
        result = escape_experiment((4, 5, 4), seeds=[1],
                                   eta_multipliers=[1.2], radius=1e-9,
                                   max_iters=60_000, stop_at_escape=False)
        verdict = result.verdicts[0]
        assert verdict.escaped
        assert verdict.converged_elsewhere


class TestPerturbedStart:
    def test_radius_is_exact_along_unit_direction(self):
        chain, target = make_minimizer(DEPTH2_DIMS, seed=0)
        start, blocks = perturbed_start(chain, target, radius=1e-3)
        offset = start.flatten() - chain.flatten()
        assert np.linalg.norm(offset) == pytest.approx(1e-3, rel=1e-10)

    def test_random_direction_seeded(self):
        chain, target = make_minimizer((2, 3, 2), seed=0)
        a, _ = perturbed_start(chain, target, init_direction="random_unit",
                               radius=1e-3, seed=5)
        b, _ = perturbed_start(chain, target, init_direction="random_unit",
                               radius=1e-3, seed=5)
        assert np.array_equal(a.flatten(), b.flatten())

    def test_unknown_direction(self):
        chain, target = make_minimizer((2, 3, 2), seed=0)
        with pytest.raises(ValidationError):
            perturbed_start(chain, target, init_direction="sideways")


class TestTrajectoryCsv:
    def test_header_and_rows(self, tmp_path):
        chain, target = make_minimizer((2, 3, 2), seed=2)
        blocks, _ = extremal_direction(chain, target)
        start = perturb(chain, blocks, 1e-6)
        config = GDConfig(step_size=1e-8, max_iters=3, stop_on_converged=False)
        traj = gd_run(start, target, config, reference=chain)
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,loss,norm_loss,norm_dist,proj_x,proj_y"
        assert len(lines) == 1 + traj.iterations.size
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[4] == "" and first[5] == ""
        assert float(first[1]) == traj.loss[0]
