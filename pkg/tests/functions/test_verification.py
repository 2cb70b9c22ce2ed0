import math

import numpy as np
import pytest
from scipy import stats

from src.functions.compensators.intensities import (intensity_deterministic_obs, intensity_jump_diffusion,
                                                    intensity_regime_switching)
from src.functions.compensators.kernels import ExponentialKernel, GbmSurvivalKernel, kernel_for_window
from src.functions.compensators.windows import CompensatorPath, DelayLaw, LocalJumpWindow
from src.functions.levy.levy_system import LevySystemSpec, intensity_default_region
from src.functions.models.model_spec import (JumpLaw, ModelKind, ModelSpec, ObservationSchedule,
                                             StoppingRule, validate_generator)
from src.functions.verification import harness
from src.functions.verification.harness import (PathRecord, VerificationSetup, evaluate_path,
                                                information_buckets, records_frame, resolve_workers,
                                                run_paths, verify, with_sigma)
from src.functions.verification.martingale import (martingale_residual_test, orthogonality_test,
                                                   widened_threshold)
from src.functions.verification.oracles import laplacian_intensity, mc_survival
from src.lib.errors import DomainError, ValidationError

TIMES = (0.5, 1.0, 2.0)


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv('HAZARDLAB_THREADS', '1')


def exponential_sample(rate, n, seed):
    events = np.random.default_rng(seed).exponential(1.0 / rate, n)
    return events, rate * np.minimum(np.asarray(TIMES)[None, :], events[:, None])


def chain_model():
    return ModelSpec(ModelKind.CHAIN_ONLY, validate_generator([[-1.0, 1.0], [0.5, -0.5]]), (0.0, 0.0),
                     (1.0, 1.0), 1.0, 2.0, regime0=1, stopping_rule=StoppingRule.CHAIN_HIT)


def regime_model():
    return ModelSpec(ModelKind.REGIME_SWITCHING, validate_generator([[-0.5, 0.5], [1.0, -1.0]]),
                     (0.05, -0.1), (0.2, 0.4), 0.8, 1.0)


def region_model():
    return ModelSpec(ModelKind.REGIME_SWITCHING, validate_generator([[-0.5, 0.5], [0.5, -0.5]]),
                     (0.0, 0.0), (0.3, 0.3), 0.9, 1.0, regime0=1,
                     stopping_rule=StoppingRule.DEFAULT_REGION, target_regimes=(0,))


def unit_gbm_model():
    return ModelSpec(ModelKind.PLAIN_GBM, validate_generator([[0.0]]), (0.5,), (1.0,), 1.0, math.e)


def setup_for(model, **overrides):
    return VerificationSetup(model, ObservationSchedule.uniform(0.25, 2.0), TIMES, **overrides)


def jump_model():
    return ModelSpec(ModelKind.JUMP_DIFFUSION, validate_generator([[-0.5, 0.5], [1.0, -1.0]]),
                     (0.05, -0.1), (0.2, 0.4), 0.8, 1.0,
                     jump_laws=(JumpLaw('beta', 5.0, 1.0), JumpLaw('point', value=0.9)))


def three_state_region_model():
    return ModelSpec(ModelKind.REGIME_SWITCHING,
                     validate_generator([[-1.0, 0.6, 0.4], [0.3, -0.5, 0.2], [0.7, 0.8, -1.5]]),
                     (0.0, 0.0, 0.0), (0.3, 0.3, 0.3), 0.9, 1.0, regime0=1,
                     stopping_rule=StoppingRule.DEFAULT_REGION, target_regimes=(0,))


def named_and_oracle(name, rng):
    """Named intensity and its Laplacian estimate at a random state and window time."""
    u = float(rng.uniform(0.2, 1.0))
    v2 = u + float(rng.uniform(0.1, 1.0))
    if name == 'deterministic_obs':
        mu, sigma = float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.5, 1.0))
        x = math.exp(sigma * float(rng.uniform(0.1, 0.8)))
        model = ModelSpec(ModelKind.PLAIN_GBM, validate_generator([[0.0]]), (mu,), (sigma,), 1.0, x)
        return (intensity_deterministic_obs(x, model, u),
                laplacian_intensity(GbmSurvivalKernel(1.0, mu, sigma), x, v2, u))
    if name == 'default_region':
        model = three_state_region_model()
        regime = int(rng.integers(1, 3))
        x = model.barrier * math.exp(-float(rng.uniform(0.05, 0.5)))
        kernel = ExponentialKernel(LevySystemSpec.from_model(model).hit_rate(regime))
        return intensity_default_region(model, x, regime), laplacian_intensity(kernel, x, v2, u)

    model = regime_model() if name == 'regime_switching' else jump_model()
    regime = int(rng.integers(model.n_regimes))
    x = model.barrier * math.exp(model.sigma[regime] * float(rng.uniform(0.1, 0.8)))
    window = LocalJumpWindow(0.0, v2, x, regime, v2, DelayLaw(model.generator.exit_rate(regime), v2))
    oracle = laplacian_intensity(kernel_for_window(window, model), x, v2, u, delay=window.delay)
    if name == 'regime_switching':
        return intensity_regime_switching(window, model, u), oracle
    return intensity_jump_diffusion(window, model, u), oracle


class TestResidualTest:
    def test_true_compensator_passes(self):
        events, matrix = exponential_sample(1.0, 5000, seed=1)
        report = martingale_residual_test(events, matrix, TIMES)
        assert report.all_passed
        assert not report.inconclusive
        assert report.z_threshold == 3.5
        assert list(report.to_frame().columns) == ['t', 'mean', 'se', 'z', 'pass']

    def test_biased_compensator_fails(self):
        events, matrix = exponential_sample(1.0, 5000, seed=1)
        report = martingale_residual_test(events, 1.2 * matrix, TIMES)
        assert not report.all_passed
        assert report.z[-1] < -3.5

    def test_accepts_compensator_paths(self):
        events = np.full(1000, 0.75)
        paths = [CompensatorPath([0.0, 2.0], [1.0, 1.0], [0.0, 2.0], tau=0.75)] * 1000
        report = martingale_residual_test(events, paths, TIMES)
        np.testing.assert_allclose(report.mean, [-0.5, 0.25, 0.25])

    def test_no_events_and_zero_compensator_is_inconclusive(self):
        events = np.full(1000, math.inf)
        report = martingale_residual_test(events, np.zeros((1000, 3)), TIMES)
        assert report.mean == [0.0, 0.0, 0.0]
        assert report.all_passed
        assert report.inconclusive
        assert report.notices

    def test_too_few_paths(self):
        events, matrix = exponential_sample(1.0, 999, seed=2)
        with pytest.raises(ValidationError):
            martingale_residual_test(events, matrix, TIMES)

    def test_shape_mismatch(self):
        events, matrix = exponential_sample(1.0, 1000, seed=2)
        with pytest.raises(ValidationError):
            martingale_residual_test(events, matrix[:, :2], TIMES)


class TestThreshold:
    def test_small_batches_keep_z_max(self):
        assert widened_threshold(3.5, 5) == 3.5

    def test_bonferroni_widening(self):
        # 10 rows: the two-sided level is cut by 10 / 5
        expected = stats.norm.isf(stats.norm.sf(3.5) / 2.0)
        assert widened_threshold(3.5, 10) == pytest.approx(expected)
        assert widened_threshold(3.5, 10) > 3.5


class TestOrthogonality:
    def test_independent_buckets_pass(self):
        rng = np.random.default_rng(3)
        events = rng.exponential(1.0, 6000)
        buckets = rng.choice(['a', 'b', 'c'], 6000)
        report = orthogonality_test(events, np.minimum(events, 0.5), np.minimum(events, 1.0),
                                    0.5, 1.0, buckets)
        assert report.labels == ['a', 'b', 'c']
        assert report.all_passed

    def test_pooled_rate_fails_per_bucket(self):
        rng = np.random.default_rng(4)
        buckets = rng.choice(['slow', 'fast'], 6000)
        rates = np.where(buckets == 'fast', 2.0, 1.0)
        events = rng.exponential(1.0 / rates)
        # one pooled rate for both buckets
        a_s, a_t = 1.5 * np.minimum(events, 0.5), 1.5 * np.minimum(events, 1.0)
        report = orthogonality_test(events, a_s, a_t, 0.5, 1.0, buckets)
        assert not any(report.passed)

    def test_single_path_bucket_is_skipped(self):
        rng = np.random.default_rng(5)
        events = rng.exponential(1.0, 1000)
        buckets = ['lone'] + ['main'] * 999
        report = orthogonality_test(events, np.minimum(events, 0.5), np.minimum(events, 1.0),
                                    0.5, 1.0, buckets)
        assert report.labels == ['main']
        assert any('lone' in n for n in report.notices)

    def test_needs_s_before_t(self):
        events = np.ones(1000)
        with pytest.raises(ValidationError):
            orthogonality_test(events, np.zeros(1000), np.zeros(1000), 1.0, 1.0, ['a'] * 1000)


class TestLaplacianOracle:
    def test_exponential_kernel(self):
        assert laplacian_intensity(ExponentialKernel(0.7), 1.0, 1.0, 0.5) == pytest.approx(0.7, rel=1e-6)

    def test_gbm_kernel_unit_value(self):
        value = laplacian_intensity(GbmSurvivalKernel(1.0, 0.5, 1.0), math.e, 2.0, 1.0)
        assert value == pytest.approx(0.3544373, rel=1e-4)

    def test_vanishes_near_window_start(self):
        value = laplacian_intensity(GbmSurvivalKernel(1.0, 0.5, 1.0), math.e, 2.0, 0.01)
        assert abs(value) <= 1e-9

    def test_rejects_nonpositive_u(self):
        with pytest.raises(DomainError):
            laplacian_intensity(ExponentialKernel(1.0), 1.0, 1.0, 0.0)

    def test_jump_diffusion_with_delay_matches_closed_form(self):
        model = ModelSpec(ModelKind.JUMP_DIFFUSION, validate_generator([[-0.8, 0.8], [0.8, -0.8]]),
                          (0.5, 0.5), (1.0, 1.0), 1.0, math.e,
                          jump_laws=(JumpLaw('beta', 2.0, 1.0), JumpLaw('beta', 2.0, 1.0)))
        window = LocalJumpWindow(0.0, 1.0, math.e, 0, 1.0, DelayLaw(0.8, 1.0))
        kernel = kernel_for_window(window, model)
        oracle = laplacian_intensity(kernel, math.e, 1.0, 0.5, delay=window.delay)
        assert oracle == pytest.approx(intensity_jump_diffusion(window, model, 0.5), rel=1e-5)

    @pytest.mark.parametrize('name, seed', [('deterministic_obs', 1), ('regime_switching', 2),
                                            ('jump_diffusion', 3), ('default_region', 4)])
    def test_random_grid_matches_named_intensity(self, name, seed):
        rng = np.random.default_rng(seed)
        for _ in range(15):
            named, oracle = named_and_oracle(name, rng)
            assert oracle == pytest.approx(named, rel=1e-4, abs=1e-10), name


class TestMonteCarloSurvival:
    def test_unit_survival(self):
        p, se = mc_survival(unit_gbm_model(), math.e, 1.0, 20000, np.random.default_rng(11))
        assert abs(p - 0.6826895) <= 4 * se

    @pytest.mark.slow
    def test_unit_survival_large_sample(self):
        p, se = mc_survival(unit_gbm_model(), math.e, 1.0, 100000, np.random.default_rng(12))
        assert abs(p - 0.6826895) <= 4 * se

    def test_edges(self):
        rng = np.random.default_rng(0)
        assert mc_survival(unit_gbm_model(), 0.9, 1.0, 1000, rng) == (0.0, 0.0)
        assert mc_survival(unit_gbm_model(), math.e, 0.0, 1000, rng) == (1.0, 0.0)

    def test_needs_enough_paths(self):
        with pytest.raises(ValidationError):
            mc_survival(unit_gbm_model(), math.e, 1.0, 999, np.random.default_rng(0))


class TestHarness:
    def test_resolve_workers_is_capped(self, monkeypatch):
        monkeypatch.setenv('HAZARDLAB_THREADS', '3')
        assert resolve_workers(8) == 3
        assert resolve_workers() == 3
        monkeypatch.setenv('HAZARDLAB_THREADS', 'many')
        with pytest.raises(ValueError):
            resolve_workers()

    def test_setup_rejects_times_past_horizon(self):
        with pytest.raises(ValidationError):
            VerificationSetup(chain_model(), ObservationSchedule.uniform(0.25, 2.0), (1.0, 3.0))

    def test_chain_hit_passes(self):
        outcome = verify(setup_for(chain_model()), seed=7, n_paths=5000)
        assert outcome.residual.all_passed
        assert outcome.orthogonality.all_passed
        assert all(r.event_time == r.tau for r in outcome.records)

    def test_biased_chain_hit_fails(self):
        outcome = verify(setup_for(chain_model(), bias_factor=1.2), seed=7, n_paths=5000)
        assert not outcome.passed

    def test_regime_switching_passes(self):
        outcome = verify(setup_for(regime_model()), seed=3, n_paths=2000)
        assert outcome.residual.all_passed

    def test_default_region_passes(self):
        outcome = verify(setup_for(region_model()), seed=5, n_paths=2000)
        assert outcome.residual.all_passed
        assert all(r.jump_hit or r.event_time == math.inf for r in outcome.records)

    def test_jump_diffusion_passes(self):
        outcome = verify(setup_for(jump_model()), seed=13, n_paths=1000)
        assert outcome.residual.all_passed
        assert any(r.jump_hit for r in outcome.records)

    def test_wrong_sigma_fails(self):
        wrong = with_sigma(regime_model(), (0.4, 0.2))
        outcome = verify(setup_for(regime_model(), compensator_model=wrong), seed=3, n_paths=2000)
        assert not outcome.residual.all_passed
        assert not outcome.passed

    def test_each_window_is_integrated_once(self, monkeypatch):
        calls = []
        cumulative = harness.window_cumulative

        def counting(window, kernel, u):
            calls.append((window.S, window.T, u))
            return cumulative(window, kernel, u)

        monkeypatch.setattr(harness, 'window_cumulative', counting)
        setup = setup_for(jump_model())
        for index in range(10):
            calls.clear()
            record = evaluate_path(setup, seed=4, index=index)
            assert len(calls) == len(set(calls))
            assert len(calls) <= record.n_windows + len(setup.evaluation_times)

    @pytest.mark.slow
    def test_chain_hit_passes_large_sample(self, monkeypatch):
        monkeypatch.delenv('HAZARDLAB_THREADS')
        outcome = verify(setup_for(chain_model()), seed=42, n_paths=100000)
        assert outcome.passed

    @pytest.mark.slow
    def test_jump_diffusion_passes_large_sample(self, monkeypatch):
        monkeypatch.delenv('HAZARDLAB_THREADS')
        outcome = verify(setup_for(jump_model()), seed=42, n_paths=100000)
        assert outcome.passed

    @pytest.mark.slow
    def test_regime_switching_passes_large_sample(self, monkeypatch):
        monkeypatch.delenv('HAZARDLAB_THREADS')
        outcome = verify(setup_for(regime_model()), seed=42, n_paths=100000)
        assert outcome.passed

    @pytest.mark.slow
    def test_default_region_passes_large_sample(self, monkeypatch):
        monkeypatch.delenv('HAZARDLAB_THREADS')
        outcome = verify(setup_for(region_model()), seed=42, n_paths=100000)
        assert outcome.passed

    def test_records_do_not_depend_on_workers(self, monkeypatch):
        monkeypatch.delenv('HAZARDLAB_THREADS')
        setup = setup_for(regime_model())
        serial = run_paths(setup, seed=9, n_paths=40, workers=1)
        parallel = run_paths(setup, seed=9, n_paths=40, workers=2)
        assert serial == parallel
        assert [r.index for r in parallel] == list(range(40))
        assert records_frame(parallel).shape == (40, 6)

    def test_too_few_paths(self):
        with pytest.raises(ValidationError):
            verify(setup_for(chain_model()), seed=1, n_paths=10)

    def test_information_buckets(self):
        def record(i, regime, price, alive):
            return PathRecord(i, math.inf, False, math.inf, [0.0], 0.0, regime, price, alive, 1, 1, 0)

        records = [record(i, i % 2, 1.0 + i, True) for i in range(20)] + [record(20, 0, 0.5, False)]
        labels = information_buckets(records)
        assert labels[-1] == 'defaulted'
        assert labels[0] == 'r0|d0'
        assert labels[19] == 'r1|d9'
