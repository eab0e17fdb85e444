"""Reweighting, evidence accumulation, resampling and rejuvenation."""

import math
from dataclasses import replace
from unittest import mock

import numpy as np
import pytest

from preydesign.errors import DegenerateUpdateWarning
from preydesign.models import (
    Observation,
    Params,
    candidate_models,
    sample_observation,
)
from preydesign.smc import (
    MoveConfig,
    ParticleSet,
    d_posterior_precision,
    effective_sample_size,
    init_particle_set,
    log_d_posterior_precision,
    move_count,
    move_step,
    new_design_state,
    posterior_model_probs,
    reweight,
    systematic_resample,
    update_particle_set,
    weighted_covariance,
)

from oracles import GridPosterior

MODELS = candidate_models()
M1, M2, M3, M4 = MODELS
TAU = 24.0


def _simulated_observations(n, designs, seed=123):
    rng = np.random.default_rng(seed)
    truth = Params(math.log(0.5), math.log(0.7))
    return [sample_observation(M3, truth, d, TAU, rng) for d in designs[:n]]


class TestReweight:
    def test_constant_likelihood_keeps_weights(self):
        rng = np.random.default_rng(0)
        ps = init_particle_set(M3, 64, rng)
        # identical particles => identical likelihoods
        ps = replace(ps, particles=np.tile(ps.particles[:1], (64, 1)))
        obs = Observation(20, 7, TAU)
        out = reweight(ps, obs)
        np.testing.assert_allclose(out.weights, ps.weights, rtol=1e-12)
        from preydesign.models import log_likelihood_particles

        const = log_likelihood_particles(M3, ps.particles[:1], obs)[0]
        assert out.log_evidence == pytest.approx(const, abs=1e-12)
        assert out.i == 1

    def test_single_particle(self):
        rng = np.random.default_rng(1)
        ps = init_particle_set(M3, 1, rng)
        obs = Observation(15, 3, TAU)
        out = reweight(ps, obs)
        from preydesign.models import log_likelihood_particles

        assert out.weights[0] == 1.0
        assert out.log_evidence == pytest.approx(
            float(log_likelihood_particles(M3, ps.particles, obs)[0])
        )

    def test_weights_normalized_and_ess_bounded(self):
        rng = np.random.default_rng(2)
        ps = init_particle_set(M1, 500, rng)
        for obs in _simulated_observations(4, [30, 60, 120, 240]):
            ps = reweight(ps, obs)
            assert abs(ps.weights.sum() - 1.0) < 1e-10
            assert 1.0 <= ps.ess <= ps.size + 1e-9

    def test_evidence_telescopes(self):
        rng = np.random.default_rng(3)
        ps = init_particle_set(M3, 400, rng)
        from preydesign.models import log_likelihood_particles

        for obs in _simulated_observations(3, [25, 50, 75]):
            logw = np.log(ps.weights) + log_likelihood_particles(M3, ps.particles, obs)
            shift = logw.max()
            expected_step = shift + math.log(np.exp(logw - shift).sum())
            before = ps.log_evidence
            ps = reweight(ps, obs)
            assert ps.log_evidence - before == pytest.approx(expected_step, abs=1e-12)

    def test_collapse_warns(self):
        rng = np.random.default_rng(4)
        ps = init_particle_set(M3, 200, rng)
        # hand-build a set where one particle dominates absurdly
        ps = replace(ps, particles=np.column_stack([
            np.concatenate([[math.log(0.5)], np.full(199, 8.0)]),
            np.concatenate([[math.log(0.7)], np.full(199, 8.0)]),
        ]))
        obs = Observation(100, 55, TAU)
        with pytest.warns(DegenerateUpdateWarning):
            out = reweight(ps, obs)
        assert out.ess < 1.5


class TestEvidenceAgainstQuadrature:
    def test_five_observation_evidence(self):
        designs = [20, 60, 120, 180, 280]
        observations = _simulated_observations(5, designs, seed=77)
        grid = GridPosterior(M3, observations, n=300)

        state = new_design_state([M3], 5000, seed=11, tau=TAU)
        ps = state.particle_sets[0]
        cfg = MoveConfig()
        hist = []
        for obs in observations:
            hist.append(obs)
            ps, _ = update_particle_set(ps, obs, hist, cfg, state.streams["resample"])
        assert ps.log_evidence == pytest.approx(grid.log_evidence, abs=0.1)


class TestEffectiveSampleSize:
    def test_uniform(self):
        assert effective_sample_size(np.full(100, 0.01)) == pytest.approx(100.0)

    def test_point_mass(self):
        w = np.zeros(50)
        w[3] = 1.0
        assert effective_sample_size(w) == pytest.approx(1.0)

    def test_half_half(self):
        w = np.zeros(10)
        w[0] = w[1] = 0.5
        assert effective_sample_size(w) == pytest.approx(2.0)


class TestSystematicResample:
    def test_uniform_weights_is_permutation(self):
        rng = np.random.default_rng(5)
        ps = init_particle_set(M3, 128, rng)
        out = systematic_resample(ps, rng)
        # every original particle appears exactly once
        orig = {tuple(row) for row in ps.particles}
        new = [tuple(row) for row in out.particles]
        assert len(new) == 128 and set(new) == orig
        assert out.ess == 128.0

    def test_point_mass_duplicates(self):
        rng = np.random.default_rng(6)
        ps = init_particle_set(M3, 32, rng)
        w = np.zeros(32)
        w[7] = 1.0
        ps = replace(ps, weights=w)
        out = systematic_resample(ps, rng)
        assert np.all(out.particles == ps.particles[7])

    def test_replication_counts_within_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = 64
            w = rng.dirichlet(np.ones(n) * 0.3)
            ps = ParticleSet(M3, np.arange(n, dtype=float)[:, None] * np.ones((1, 2)),
                             w, 0.0, effective_sample_size(w), 0)
            out = systematic_resample(ps, rng)
            ids = out.particles[:, 0].astype(int)
            counts = np.bincount(ids, minlength=n)
            assert np.all(counts >= np.floor(n * w) - 1e-9)
            assert np.all(counts <= np.ceil(n * w) + 1e-9)

    def test_mean_preserved(self):
        rng = np.random.default_rng(8)
        n = 256
        ps = init_particle_set(M3, n, rng)
        w = rng.dirichlet(np.ones(n))
        ps = replace(ps, weights=w)
        target = float(w @ ps.particles[:, 0])
        wsd = math.sqrt(float(w @ (ps.particles[:, 0] - target) ** 2))
        means = [systematic_resample(ps, rng).particles[:, 0].mean() for _ in range(1000)]
        assert abs(np.mean(means) - target) < 3 * wsd / math.sqrt(n)


class TestMoveCount:
    def test_reference_values(self):
        assert move_count(0.01, 0.5, 1000) == 7
        assert move_count(0.01, 0.9, 1000) == 2

    def test_floor_at_one_over_j(self):
        assert move_count(0.01, 0.0, 1000) == move_count(0.01, 1.0 / 1000, 1000)

    def test_cap(self):
        assert move_count(0.01, 0.0, 10_000) == 100

    def test_full_acceptance(self):
        assert move_count(0.01, 1.0, 100) == 1


class TestMoveStep:
    def test_invariance_against_quadrature(self):
        observations = _simulated_observations(3, [40, 90, 200], seed=99)
        grid = GridPosterior(M3, observations, n=300)

        state = new_design_state([M3], 2000, seed=21, tau=TAU)
        ps = state.particle_sets[0]
        cfg = MoveConfig()
        hist = []
        for obs in observations:
            hist.append(obs)
            ps, _ = update_particle_set(ps, obs, hist, cfg, state.streams["resample"])
        ps = systematic_resample(ps, state.streams["resample"])
        total_iters = 0
        while total_iters < 50:
            ps, diag = move_step(ps, observations, cfg, state.streams["move"])
            total_iters += diag.n_iterations
        se = grid.sd() / math.sqrt(ps.size)
        mean = ps.weights @ ps.particles
        np.testing.assert_array_less(np.abs(mean - grid.mean()), 3 * se + 0.01)

    def test_symmetric_acceptance_rule(self):
        # flat target accepts every proposal
        rng = np.random.default_rng(9)
        ps = init_particle_set(M3, 100, rng)
        with mock.patch("preydesign.smc._log_target",
                        side_effect=lambda m, t, h: np.zeros(len(t))):
            _, diag = move_step(ps, [], MoveConfig(), rng)
        assert diag.probe_acceptance == 1.0
        assert diag.n_iterations == 1

    def test_stationary_on_gaussian_target(self):
        rng = np.random.default_rng(10)
        ps = init_particle_set(M3, 4000, rng)
        ps = replace(ps, particles=rng.standard_normal((4000, 2)))

        def gaussian(model, theta, history):
            return -0.5 * np.sum(theta**2, axis=1)

        with mock.patch("preydesign.smc._log_target", side_effect=gaussian):
            for _ in range(10):
                ps, _ = move_step(ps, [], MoveConfig(), rng,
                                  proposal_cov=np.eye(2))
        assert abs(ps.particles.mean()) < 3 / math.sqrt(2 * 4000)
        assert ps.particles.var() == pytest.approx(1.0, rel=0.1)

    def test_singular_covariance_falls_back(self):
        rng = np.random.default_rng(11)
        ps = init_particle_set(M3, 50, rng)
        ps = replace(ps, particles=np.zeros((50, 2)))  # zero spread
        out, diag = move_step(ps, _simulated_observations(1, [30]), MoveConfig(), rng)
        assert np.all(np.isfinite(out.particles))


class TestModelProbabilities:
    def test_prior_state(self):
        state = new_design_state(MODELS, 50, seed=1)
        np.testing.assert_allclose(state.model_probabilities(), 0.25)

    def test_minus_inf_evidence(self):
        state = new_design_state(MODELS, 50, seed=2)
        state.particle_sets[2].log_evidence = -math.inf
        probs = posterior_model_probs(state.particle_sets)
        assert probs[2] == 0.0
        assert probs.sum() == pytest.approx(1.0)

    def test_two_model_gap(self):
        models = candidate_models(ids=(1, 3))
        state = new_design_state(models, 10, seed=3)
        state.particle_sets[0].log_evidence = math.log(3.0)
        probs = posterior_model_probs(state.particle_sets)
        np.testing.assert_allclose(probs, [0.75, 0.25], atol=1e-12)


class TestDPosteriorPrecision:
    @staticmethod
    def _set_from(particles):
        n = len(particles)
        return ParticleSet(M3, particles, np.full(n, 1.0 / n), 0.0, float(n), 0)

    def test_identity_covariance(self):
        rng = np.random.default_rng(12)
        z = rng.standard_normal((200_000, 2))
        z = (z - z.mean(0)) / z.std(0)
        # whiten exactly
        cov = np.cov(z.T, bias=True)
        z = z @ np.linalg.inv(np.linalg.cholesky(cov)).T
        ps = self._set_from(z)
        assert log_d_posterior_precision(ps) == pytest.approx(0.0, abs=1e-9)
        assert d_posterior_precision(ps) == pytest.approx(1.0, abs=1e-9)

    def test_scaling_one_coordinate(self):
        rng = np.random.default_rng(13)
        base = rng.standard_normal((5000, 2))
        ps = self._set_from(base)
        scaled = base.copy()
        scaled[:, 1] *= 2.0
        ps2 = self._set_from(scaled)
        ratio = d_posterior_precision(ps2) / d_posterior_precision(ps)
        assert ratio == pytest.approx(0.25, rel=1e-9)

    def test_known_normal(self):
        rng = np.random.default_rng(14)
        cov = np.array([[1.0, 0.3, 0.1], [0.3, 0.8, -0.2], [0.1, -0.2, 1.5]])
        x = rng.multivariate_normal(np.zeros(3), cov, size=10_000)
        ps = self._set_from(x)
        expected = 1.0 / np.linalg.det(cov)
        assert d_posterior_precision(ps) == pytest.approx(expected, rel=0.10)

    def test_degenerate_warns(self):
        ps = self._set_from(np.zeros((10, 2)))
        with pytest.warns(DegenerateUpdateWarning):
            assert log_d_posterior_precision(ps) == math.inf


class TestWeightedCovariance:
    def test_matches_numpy(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((500, 3))
        w = np.full(500, 1 / 500)
        np.testing.assert_allclose(weighted_covariance(x, w), np.cov(x.T, bias=True),
                                   atol=1e-12)
