"""Data-annealed SMC over each candidate model's parameter posterior.

One observation at a time: reweight the particles by the new likelihood,
accumulate the evidence from the normalizing-constant ratio, and when the
effective sample size collapses below its threshold, resample and
rejuvenate with an adaptive random-walk Metropolis kernel whose iteration
count is tuned from a probing pass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateUpdateError, DegenerateUpdateWarning
from .models import (
    ModelSpec,
    Observation,
    log_likelihood_particles,
    prior_log_density_particles,
    prior_sample_particles,
)

# Reweights that leave the ESS this close to a single particle get flagged.
_ESS_COLLAPSE = 1.5


@dataclass(frozen=True)
class MoveConfig:
    """Tuning knobs for the resample-move stage.

    ``c`` is the tolerated probability that a particle never moves during
    rejuvenation; the iteration count is chosen so each particle moves
    with probability 1 - c.  ``ess_threshold_frac`` sets the resampling
    trigger as a fraction of the particle count.
    """

    c: float = 0.01
    ess_threshold_frac: float = 0.5
    proposal_scale: float = 1.0
    r_max: int = 100

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must be in (0, 1), got {self.c}")
        if not 0.0 < self.ess_threshold_frac <= 1.0:
            raise ValueError(
                f"ess_threshold_frac must be in (0, 1], got {self.ess_threshold_frac}"
            )


@dataclass
class ParticleSet:
    """Weighted log-scale parameter particles for one model."""

    model: ModelSpec
    particles: np.ndarray  # (J, p)
    weights: np.ndarray  # (J,), normalized
    log_evidence: float = 0.0
    ess: float = 0.0
    i: int = 0

    @property
    def size(self) -> int:
        return self.particles.shape[0]


def init_particle_set(model: ModelSpec, n_particles: int,
                      rng: np.random.Generator) -> ParticleSet:
    particles = prior_sample_particles(model, n_particles, rng)
    weights = np.full(n_particles, 1.0 / n_particles)
    return ParticleSet(model=model, particles=particles, weights=weights,
                       log_evidence=0.0, ess=float(n_particles), i=0)


def effective_sample_size(weights) -> float:
    """1 / sum of squared normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def reweight(ps: ParticleSet, obs: Observation) -> ParticleSet:
    """Fold one observation into the particle weights and the evidence."""
    loglik = log_likelihood_particles(ps.model, ps.particles, obs)
    with np.errstate(divide="ignore"):
        logw = np.log(ps.weights) + loglik
    shift = float(np.max(logw))
    if not math.isfinite(shift):
        raise DegenerateUpdateError(
            f"every particle weight vanished for {ps.model.label}",
            diagnostics={"model": ps.model.id, "observation": obs,
                         "max_log_likelihood": float(np.max(loglik))},
        )
    w = np.exp(logw - shift)
    total = float(np.sum(w))
    weights = w / total
    ess = effective_sample_size(weights)
    if ess < _ESS_COLLAPSE:
        warnings.warn(
            f"{ps.model.label}: ESS collapsed to {ess:.2f} after reweighting "
            f"(design {obs.n0}, observed {obs.n})",
            DegenerateUpdateWarning,
            stacklevel=2,
        )
    return replace(
        ps,
        weights=weights,
        log_evidence=ps.log_evidence + shift + math.log(total),
        ess=ess,
        i=ps.i + 1,
    )


def _systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against rounding in the final bin
    return np.searchsorted(cumulative, positions, side="left")


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Resample to uniform weights; replication counts stay within 1 of J*W."""
    idx = _systematic_indices(ps.weights, rng)
    n = ps.size
    return replace(
        ps,
        particles=ps.particles[idx],
        weights=np.full(n, 1.0 / n),
        ess=float(n),
    )


def weighted_covariance(particles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mu = weights @ particles
    centered = particles - mu
    return (centered * weights[:, None]).T @ centered


def move_count(c: float, p_accept: float, n_particles: int, r_max: int = 100) -> int:
    """Total MCMC iterations needed so each particle moves w.p. >= 1 - c."""
    p = max(p_accept, 1.0 / n_particles)
    if p >= 1.0:
        return 1
    r = math.ceil(math.log(c) / math.log1p(-p))
    return min(max(r, 1), r_max)


@dataclass
class MoveDiagnostics:
    probe_acceptance: float
    n_iterations: int
    mean_acceptance: float


def _log_target(model: ModelSpec, theta: np.ndarray, history) -> np.ndarray:
    lp = prior_log_density_particles(model, theta)
    for obs in history:
        lp = lp + log_likelihood_particles(model, theta, obs)
    return lp


def _proposal_cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(cov)
        if np.all(np.isfinite(chol)):
            return chol
    except np.linalg.LinAlgError:
        pass
    # degenerate covariance: keep per-coordinate spread, floored
    variances = np.maximum(np.diag(cov), 1e-8)
    return np.diag(np.sqrt(variances))


def move_step(ps: ParticleSet, history, cfg: MoveConfig, rng: np.random.Generator,
              proposal_cov: np.ndarray | None = None) -> tuple[ParticleSet, MoveDiagnostics]:
    """Rejuvenate a just-resampled particle set with random-walk Metropolis.

    The target is the full posterior given ``history``; the proposal is a
    multivariate normal random walk in log-parameter space.  One probing
    sweep estimates the acceptance rate, which sets the total iteration
    count; ``proposal_cov`` should be the weighted particle covariance
    taken before resampling (recomputed from the current set if omitted).
    """
    if proposal_cov is None:
        proposal_cov = weighted_covariance(ps.particles, ps.weights)
    chol = _proposal_cholesky(cfg.proposal_scale * proposal_cov)

    theta = ps.particles.copy()
    lp = _log_target(ps.model, theta, history)

    def sweep():
        proposal = theta + rng.standard_normal(theta.shape) @ chol.T
        prop_lp = _log_target(ps.model, proposal, history)
        # symmetric proposal: accept with probability min(1, exp(delta))
        accept = np.log(rng.random(len(theta))) < prop_lp - lp
        theta[accept] = proposal[accept]
        lp[accept] = prop_lp[accept]
        return float(np.mean(accept))

    probe = sweep()
    total = move_count(cfg.c, probe, ps.size, cfg.r_max)
    rates = [probe]
    for _ in range(total - 1):
        rates.append(sweep())

    moved = replace(ps, particles=theta)
    return moved, MoveDiagnostics(
        probe_acceptance=probe,
        n_iterations=total,
        mean_acceptance=float(np.mean(rates)),
    )


@dataclass
class UpdateDiagnostics:
    ess_after_reweight: float
    resampled: bool
    move: MoveDiagnostics | None
    collapsed: bool


def update_particle_set(ps: ParticleSet, obs: Observation, history, cfg: MoveConfig,
                        rng: np.random.Generator) -> tuple[ParticleSet, UpdateDiagnostics]:
    """Reweight on ``obs`` and resample-move if the ESS dropped below threshold.

    ``history`` must already include ``obs`` (it is the invariant target of
    the move kernel).
    """
    ps = reweight(ps, obs)
    ess_after = ps.ess
    collapsed = ess_after < _ESS_COLLAPSE
    threshold = cfg.ess_threshold_frac * ps.size
    move_diag = None
    resampled = False
    if ps.ess < threshold:
        pre_resample_cov = weighted_covariance(ps.particles, ps.weights)
        ps = systematic_resample(ps, rng)
        ps, move_diag = move_step(ps, history, cfg, rng, proposal_cov=pre_resample_cov)
        resampled = True
    return ps, UpdateDiagnostics(ess_after, resampled, move_diag, collapsed)


def posterior_model_probs(particle_sets) -> np.ndarray:
    """Normalize evidences (times prior model probabilities) into a simplex."""
    sets = getattr(particle_sets, "particle_sets", particle_sets)
    logp = np.array(
        [ps.log_evidence + math.log(ps.model.prior_model_prob) for ps in sets]
    )
    shift = np.max(logp)
    if not np.isfinite(shift):
        raise DegenerateUpdateError("all model evidences are -inf")
    with np.errstate(invalid="ignore"):
        p = np.exp(logp - shift)
    p[np.isnan(p)] = 0.0  # exp(-inf - -inf) guards
    return p / p.sum()


def log_d_posterior_precision(ps: ParticleSet) -> float:
    """Log inverse determinant of the weighted particle covariance."""
    cov = weighted_covariance(ps.particles, ps.weights)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not math.isfinite(logdet):
        warnings.warn(
            f"{ps.model.label}: particle covariance is not positive definite; "
            "reporting infinite precision",
            DegenerateUpdateWarning,
            stacklevel=2,
        )
        return math.inf
    return float(-logdet)


def d_posterior_precision(ps: ParticleSet) -> float:
    log_prec = log_d_posterior_precision(ps)
    return math.exp(log_prec) if math.isfinite(log_prec) else math.inf


@dataclass
class DesignState:
    """Per-session bundle: one particle set per model plus the shared history."""

    particle_sets: list[ParticleSet]
    history: list[Observation] = field(default_factory=list)
    streams: dict = field(default_factory=dict)
    seed: int = 0
    tau: float = 24.0

    @property
    def models(self):
        return [ps.model for ps in self.particle_sets]

    @property
    def i(self) -> int:
        return len(self.history)

    @property
    def model_log_evidences(self) -> np.ndarray:
        return np.array([ps.log_evidence for ps in self.particle_sets])

    def model_probabilities(self) -> np.ndarray:
        return posterior_model_probs(self.particle_sets)


STREAM_NAMES = ("prior", "design", "observe", "resample", "move")


def session_streams(seed: int) -> dict:
    """Named, independently seeded generators for one session."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(c) for name, c in zip(STREAM_NAMES, children)}


def new_design_state(models, n_particles: int, seed: int, tau: float = 24.0) -> DesignState:
    streams = session_streams(seed)
    particle_sets = [init_particle_set(m, n_particles, streams["prior"]) for m in models]
    return DesignState(particle_sets=particle_sets, history=[], streams=streams,
                       seed=seed, tau=tau)
