import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demon_sampling.core import (
    ConfigurationError,
    DensityUnderflowError,
    InvalidStateError,
    MixtureModel,
    ScheduleError,
    diffusion_coeff,
    drift,
    heun_sde_step,
    karras_schedule,
    mixture_log_density,
    mixture_score,
    ode_map,
    sample_prior,
)

from conftest import point_mass, single_gaussian


def fd_log_density_grad(model, x, t, eps=1e-5):
    grad = np.empty_like(x)
    for d in range(x.size):
        e = np.zeros_like(x)
        e[d] = eps
        grad[d] = (
            mixture_log_density(model, x + e, t) - mixture_log_density(model, x - e, t)
        ) / (2 * eps)
    return grad


class TestMixtureScore:
    def test_point_mass_closed_form(self):
        model = point_mass(2)
        x = np.array([1.5, -2.0])
        assert np.allclose(mixture_score(model, x, 3.0), -x / 9.0, rtol=1e-12)

    def test_single_gaussian_identity(self):
        model = single_gaussian([0.7, -0.3, 0.1], 0.4)
        x = np.array([1.0, 2.0, -0.5])
        expected = (model.means[0] - x) / (0.4**2 + 1.3**2)
        assert np.allclose(mixture_score(model, x, 1.3), expected, rtol=1e-12)

    def test_symmetric_two_component_points_toward_heavier(self):
        model = MixtureModel(
            dim=2,
            weights=np.array([0.7, 0.3]),
            means=np.array([[1.0, 0.0], [-1.0, 0.0]]),
            scales=np.array([0.3, 0.3]),
        )
        x = np.array([0.0, 0.8])  # equidistant from both means
        score = mixture_score(model, x, 0.9)
        assert score[0] > 0  # pulls toward the heavier component
        fd = fd_log_density_grad(model, x, 0.9)
        assert np.allclose(score, fd, rtol=1e-5, atol=1e-8)

    def test_matches_finite_differences_on_benchmark(self, gmm2d):
        rng = np.random.default_rng(0)
        for t in (0.05, 0.7, 4.0, 14.0):
            x = rng.standard_normal(2) * (1 + t)
            score = mixture_score(gmm2d, x, t)
            fd = fd_log_density_grad(gmm2d, x, t)
            assert np.allclose(score, fd, rtol=1e-5, atol=1e-7)

    def test_batch_rows_bit_identical_to_single_calls(self, gmm2d):
        rng = np.random.default_rng(3)
        batch = rng.standard_normal((500, 2))
        full = mixture_score(gmm2d, batch, 1.3)
        for i in (0, 123, 499):
            assert np.array_equal(full[i], mixture_score(gmm2d, batch[i], 1.3))

    def test_invalid_state_rejected(self, gmm2d):
        with pytest.raises(InvalidStateError):
            mixture_score(gmm2d, np.array([np.nan, 0.0]), 1.0)
        with pytest.raises(InvalidStateError):
            mixture_score(gmm2d, np.array([np.inf, 0.0]), 1.0)

    def test_density_underflow_raises(self, gmm2d):
        with pytest.raises(DensityUnderflowError):
            mixture_score(gmm2d, np.array([1e200, 1e200]), 0.01)

    def test_far_state_survives_via_log_space(self, gmm2d):
        # far enough that naive exponentials underflow, close enough to stay finite
        score = mixture_score(gmm2d, np.array([400.0, -300.0]), 0.5)
        assert np.all(np.isfinite(score))


class TestDriftDiffusion:
    def test_ode_drift_is_minus_t_score(self, gmm2d):
        x = np.array([0.4, -0.2])
        assert np.allclose(
            drift(gmm2d, x, 1.7, 0.0), -1.7 * mixture_score(gmm2d, x, 1.7), rtol=1e-14
        )

    def test_zero_at_symmetric_stationary_point(self):
        model = MixtureModel(
            dim=2,
            weights=np.array([0.5, 0.5]),
            means=np.array([[1.0, 0.0], [-1.0, 0.0]]),
            scales=np.array([0.3, 0.3]),
        )
        assert np.allclose(drift(model, np.zeros(2), 1.0, 0.7), 0.0, atol=1e-14)

    def test_point_mass_closed_form(self):
        model = point_mass(3)
        x = np.array([1.0, -2.0, 0.5])
        t, beta = 2.0, 0.3
        assert np.allclose(drift(model, x, t, beta), (1 + beta * t) * x / t, rtol=1e-12)

    def test_diffusion_coeff_values(self):
        assert diffusion_coeff(3.0, 0.0) == 0.0
        assert np.isclose(diffusion_coeff(2.0, 0.5), 2.0, rtol=1e-15)
        assert np.isclose(
            diffusion_coeff(14.648, 0.1), np.sqrt(0.2) * 14.648, rtol=1e-15
        )

    def test_negative_beta_rejected(self, gmm2d):
        with pytest.raises(ConfigurationError):
            drift(gmm2d, np.zeros(2), 1.0, -0.1)


class TestKarrasSchedule:
    def test_two_points_are_endpoints(self):
        sched = karras_schedule(2, 7.0, 0.002, 14.648)
        assert sched.times.tolist() == [14.648, 0.002]

    def test_rho_one_is_linear(self):
        sched = karras_schedule(3, 1.0, 1.0, 3.0)
        assert np.allclose(sched.times, [3.0, 2.0, 1.0], rtol=1e-14)

    def test_matches_direct_formula(self):
        sched = karras_schedule(20, 7.0, 0.002, 14.648)
        i = np.arange(20)
        direct = (
            14.648 ** (1 / 7) + i / 19 * (0.002 ** (1 / 7) - 14.648 ** (1 / 7))
        ) ** 7
        assert np.allclose(sched.times[:3], direct[:3], rtol=1e-13)
        assert sched.times[0] == 14.648 and sched.times[-1] == 0.002

    @given(
        n=st.integers(2, 200),
        rho=st.floats(0.5, 10.0),
        t_min=st.floats(1e-4, 0.5),
        span=st.floats(1.5, 1e4),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_with_exact_endpoints(self, n, rho, t_min, span):
        sched = karras_schedule(n, rho, t_min, t_min * span)
        assert sched.times[0] == t_min * span
        assert sched.times[-1] == t_min
        assert np.all(np.diff(sched.times) < 0)
        assert np.all(sched.deltas > 0)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ConfigurationError):
            karras_schedule(1, 7.0, 0.002, 1.0)
        with pytest.raises(ConfigurationError):
            karras_schedule(10, 7.0, 2.0, 1.0)
        with pytest.raises(ConfigurationError):
            karras_schedule(10, -1.0, 0.002, 1.0)


class TestHeunStep:
    def test_beta_zero_ignores_noise(self, gmm2d):
        x = np.array([0.5, 1.0])
        a = heun_sde_step(gmm2d, x, np.array([3.0, -1.0]), 1.0, 0.1, 0.0)
        b = heun_sde_step(gmm2d, x, np.array([-9.0, 2.0]), 1.0, 0.1, 0.0)
        c = heun_sde_step(gmm2d, x, None, 1.0, 0.1, 0.0)
        assert np.array_equal(a, b) and np.array_equal(a, c)

    def test_point_mass_single_step_exact(self):
        # the flow field is linear in x here, so the 2nd-order step is exact
        model = point_mass(2)
        x = np.array([2.0, -1.5])
        for delta in (0.5, 0.25):
            stepped = heun_sde_step(model, x, None, 3.0, delta, 0.0)
            assert np.allclose(stepped, x * (3.0 - delta) / 3.0, rtol=1e-14)

    def test_local_error_third_order(self):
        model = single_gaussian([0.7, -0.3], 0.5)

        def exact(x, t, s):
            return model.means[0] + (x - model.means[0]) * np.sqrt(
                (0.25 + s * s) / (0.25 + t * t)
            )

        x = np.array([1.4, 0.6])
        errs = [
            np.abs(heun_sde_step(model, x, None, 1.0, d, 0.0) - exact(x, 1.0, 1.0 - d)).max()
            for d in (0.2, 0.1)
        ]
        assert 6.0 < errs[0] / errs[1] < 12.0

    def test_global_error_second_order(self):
        model = single_gaussian([0.7, -0.3], 0.5)
        x0 = np.array([2.0, -1.0])
        exact = model.means[0] + (x0 - model.means[0]) * np.sqrt(
            (0.25 + 0.25) / (0.25 + 9.0)
        )

        def run(n):
            ts = np.linspace(3.0, 0.5, n + 1)
            x = x0
            for a, b in zip(ts[:-1], ts[1:]):
                x = heun_sde_step(model, x, None, float(a), float(a - b), 0.0)
            return np.abs(x - exact).max()

        ratio = run(16) / run(32)
        assert 3.5 <= ratio <= 4.5

    def test_small_delta_continuity(self, gmm2d):
        x = np.array([0.3, -0.7])
        stepped = heun_sde_step(gmm2d, x, np.array([1.0, 1.0]), 1.0, 1e-9, 0.2)
        assert np.abs(stepped - x).max() < 1e-4

    def test_step_through_zero_rejected(self, gmm2d):
        with pytest.raises(ScheduleError):
            heun_sde_step(gmm2d, np.zeros(2), np.zeros(2), 0.5, 0.5, 0.1)
        with pytest.raises(ScheduleError):
            heun_sde_step(gmm2d, np.zeros(2), np.zeros(2), 0.5, -0.1, 0.1)

    def test_marginal_variance_preserved(self):
        # the noised marginal of a point mass is N(0, t^2 I) at every t; the
        # stochastic stepper must track its variance within 5%
        model = point_mass(2)
        for beta, n_steps in ((0.05, 64), (0.1, 64), (0.2, 64), (0.5, 128)):
            sched = karras_schedule(n_steps, 7.0, 0.002, 14.648)
            rng = np.random.default_rng(99)
            states = sample_prior(2, 14.648, rng, size=10_000)
            for i, (t, delta) in enumerate(zip(sched.times[:-1], sched.deltas)):
                z = rng.standard_normal(states.shape)
                states = heun_sde_step(model, states, z, float(t), float(delta), beta)
                t_next = float(sched.times[i + 1])
                if t_next > 0.05:
                    rel = abs(states.var(axis=0).mean() - t_next**2) / t_next**2
                    assert rel < 0.05, f"beta={beta} t={t_next}: {rel:.3%}"


class TestOdeMap:
    def test_at_floor_returns_input(self, gmm2d):
        x = np.array([0.4, 0.2])
        assert np.array_equal(ode_map(gmm2d, x, 0.002, 20), x)
        assert np.array_equal(ode_map(gmm2d, x, 0.002 + 1e-16, 20), x)

    def test_matches_analytic_single_gaussian_flow(self):
        model = single_gaussian([0.7, -0.3], 1.0)
        t0 = 0.3
        rng = np.random.default_rng(2)
        for _ in range(8):
            x = model.means[0] + np.sqrt(1 + t0 * t0) * rng.standard_normal(2)
            expected = model.means[0] + (x - model.means[0]) * np.sqrt(
                (1.0 + 0.002**2) / (1.0 + t0 * t0)
            )
            assert np.abs(ode_map(model, x, t0, 20) - expected).max() < 1e-4

    def test_self_convergence_20_vs_200(self, two_comp):
        from conftest import flowed_state

        t0 = 0.25
        states = np.stack([flowed_state(two_comp, t0, 100 + j) for j in range(24)])
        coarse = ode_map(two_comp, states, t0, 20)
        fine = ode_map(two_comp, states, t0, 200)
        assert np.abs(coarse - fine).max() < 1e-3

    def test_pure_function_bit_identical(self, gmm2d):
        x = np.array([1.1, -0.4])
        assert np.array_equal(ode_map(gmm2d, x, 2.0, 20), ode_map(gmm2d, x, 2.0, 20))

    def test_bad_steps_rejected(self, gmm2d):
        with pytest.raises(ConfigurationError):
            ode_map(gmm2d, np.zeros(2), 1.0, 0)


class TestSamplePrior:
    def test_reproducible(self):
        a = sample_prior(5, 14.648, np.random.default_rng(7))
        b = sample_prior(5, 14.648, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_mean_and_variance(self):
        draws = sample_prior(4, 14.648, np.random.default_rng(11), size=100_000)
        assert np.abs(draws.mean(axis=0)).max() < 4 * 14.648 / np.sqrt(100_000)
        assert np.abs(draws.var(axis=0) / 14.648**2 - 1).max() < 0.05

    def test_bad_dim(self):
        with pytest.raises(ConfigurationError):
            sample_prior(0, 1.0, np.random.default_rng(0))


class TestMixtureModelValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            MixtureModel(
                dim=1,
                weights=np.array([0.5, 0.4]),
                means=np.zeros((2, 1)),
                scales=np.array([1.0, 1.0]),
            )

    def test_negative_scale_rejected(self):
        with pytest.raises(ConfigurationError):
            MixtureModel(
                dim=1, weights=np.array([1.0]), means=np.zeros((1, 1)), scales=np.array([-0.1])
            )

    def test_json_round_trip(self, tmp_path, gmm2d):
        path = tmp_path / "model.json"
        import json

        path.write_text(json.dumps(gmm2d.to_dict()))
        loaded = MixtureModel.from_json(path)
        assert loaded.dim == gmm2d.dim
        assert np.array_equal(loaded.weights, gmm2d.weights)
        assert np.array_equal(loaded.means, gmm2d.means)
        assert np.array_equal(loaded.scales, gmm2d.scales)
