"""Static (pre-planned) design baseline via Laplace approximations.

The whole multi-trial design is fixed before any data arrives.  Expected
utility is a Monte Carlo average over joint draws of (model, parameters,
responses); each draw's utility comes from a Laplace approximation of the
posterior: a KLD against the prior for parameter estimation, log model
probabilities from Laplace marginal likelihoods for discrimination.  The
design itself is optimized by cyclic per-coordinate exchange with common
random numbers.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import FitFailureError, InvalidParameterError, UnreliableEstimateError
from .models import (
    ModelSpec,
    make_log_joint,
    prior_sample,
    sample_observation,
)
from .utilities import UtilityKind

_HESSIAN_STEP = 1e-4
_EIGVAL_FLOOR = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LaplaceFit:
    """Normal approximation of a posterior at its mode."""

    mode: np.ndarray
    cov: np.ndarray
    log_marginal: float
    n_params: int


def _finite_difference_hessian(fn, x):
    p = len(x)
    steps = _HESSIAN_STEP * (1.0 + np.abs(x))
    hess = np.empty((p, p))
    f0 = fn(x)
    for k in range(p):
        ek = np.zeros(p)
        ek[k] = steps[k]
        hess[k, k] = (fn(x + ek) - 2.0 * f0 + fn(x - ek)) / steps[k] ** 2
        for l in range(k + 1, p):
            el = np.zeros(p)
            el[l] = steps[l]
            mixed = (
                fn(x + ek + el) - fn(x + ek - el) - fn(x - ek + el) + fn(x - ek - el)
            ) / (4.0 * steps[k] * steps[l])
            hess[k, l] = hess[l, k] = mixed
    return hess


def _spd_inverse(neg_hessian):
    """Invert the observed information, flooring eigenvalues if needed."""
    sym = 0.5 * (neg_hessian + neg_hessian.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.maximum(eigvals, _EIGVAL_FLOOR)
    return (eigvecs / eigvals) @ eigvecs.T


def _fd_gradient(fn, x, rel=1e-6):
    steps = rel * (1.0 + np.abs(x))
    grad = np.empty(len(x))
    for k in range(len(x)):
        ek = np.zeros(len(x))
        ek[k] = steps[k]
        grad[k] = (fn(x + ek) - fn(x - ek)) / (2.0 * steps[k])
    return grad


def fit_from_log_joint(log_joint, starts) -> LaplaceFit:
    """Laplace-fit an arbitrary log joint density from multiple starts.

    This is the seam the model-based :func:`laplace_fit` goes through; on
    an exactly quadratic target the result is exact up to the finite
    difference steps.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    best = None
    for x0 in starts:
        res = minimize(lambda x: -log_joint(x), x0, method="BFGS")
        grad_ok = np.all(np.isfinite(res.jac)) and np.linalg.norm(res.jac) < 1e-3
        if not (np.isfinite(res.fun) and (res.success or grad_ok)):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitFailureError("posterior mode search failed from every start")

    # BFGS with numeric gradients stalls around 1e-6; a couple of Newton
    # polish steps off the finite-difference curvature tightens the mode
    mode = best.x
    cov = _spd_inverse(-_finite_difference_hessian(log_joint, mode))
    for _ in range(3):
        step = cov @ _fd_gradient(log_joint, mode)
        if not np.all(np.isfinite(step)) or log_joint(mode + step) < log_joint(mode):
            break
        mode = mode + step
        if np.linalg.norm(step) < 1e-10:
            break
    hess = _finite_difference_hessian(log_joint, mode)
    cov = _spd_inverse(-hess)
    p = len(mode)
    sign, logdet = np.linalg.slogdet(cov)
    log_marginal = 0.5 * p * _LOG_2PI + 0.5 * logdet + float(log_joint(mode))
    return LaplaceFit(mode=mode, cov=cov, log_marginal=log_marginal, n_params=p)


# Log-scale parameters beyond this are ~40 prior sds out, where the prior
# alone is < exp(-700); treating the region as impossible keeps quasi-
# Newton line searches from wandering into overflow territory.
_PARAM_BOX = 55.0


def laplace_fit(model: ModelSpec, observations,
                rng: np.random.Generator | None = None) -> LaplaceFit:
    """Mode, covariance and marginal likelihood for one model's posterior.

    Starts the quasi-Newton search from the prior mean plus four prior
    draws and keeps the best mode found.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    starts = [model.prior_means()] + [
        prior_sample(model, rng).to_array() for _ in range(4)
    ]
    return fit_from_log_joint(make_log_joint(model, observations, box=_PARAM_BOX), starts)


def kld_mvn(mean0, cov0, mean1, cov1) -> float:
    """Closed-form KL(N(mean0, cov0) || N(mean1, cov1))."""
    mean0 = np.asarray(mean0, dtype=float)
    mean1 = np.asarray(mean1, dtype=float)
    cov0 = np.atleast_2d(np.asarray(cov0, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    p = len(mean0)
    try:
        chol1 = np.linalg.cholesky(cov1)
        sign0, logdet0 = np.linalg.slogdet(cov0)
        if sign0 <= 0:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError as err:
        raise InvalidParameterError("covariances must be symmetric positive definite") from err
    sign1, logdet1 = np.linalg.slogdet(cov1)
    solved = np.linalg.solve(cov1, cov0)
    diff = mean1 - mean0
    quad = diff @ np.linalg.solve(cov1, diff)
    return 0.5 * float(np.trace(solved) + quad - p + logdet1 - logdet0)


def prior_normal(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """The prior as an exact multivariate normal on the log scale."""
    return model.prior_means(), np.diag(model.prior_sds() ** 2)


def _model_log_posterior(models, fits):
    log_post = np.array([
        fit.log_marginal + math.log(m.prior_model_prob)
        for m, fit in zip(models, fits)
    ])
    return log_post - logsumexp(log_post)


def static_utility(kind: UtilityKind, models, model_index: int, observations,
                   rng: np.random.Generator | None = None,
                   fits: list[LaplaceFit] | None = None) -> float:
    """Utility of one realized (model, responses) draw under a fixed design."""
    if kind is UtilityKind.PARAMETER_ESTIMATION:
        fit = fits[model_index] if fits else laplace_fit(models[model_index], observations, rng)
        mu1, cov1 = prior_normal(models[model_index])
        return kld_mvn(fit.mode, fit.cov, mu1, cov1)
    if fits is None:
        fits = [laplace_fit(m, observations, rng) for m in models]
    log_probs = _model_log_posterior(models, fits)
    if kind is UtilityKind.MODEL_DISCRIMINATION:
        return float(log_probs[model_index])
    if kind is UtilityKind.TOTAL_ENTROPY:
        mu1, cov1 = prior_normal(models[model_index])
        pe = kld_mvn(fits[model_index].mode, fits[model_index].cov, mu1, cov1)
        return pe + float(log_probs[model_index])
    raise InvalidParameterError(f"unknown utility kind {kind!r}")


@dataclass
class StaticEstimate:
    estimate: float
    se: float
    n_draws: int
    n_failed: int


def _one_draw_utility(models, designs, kind, tau, seed_seq):
    draw_rng, fit_rng = (np.random.default_rng(s) for s in seed_seq.spawn(2))
    probs = [m.prior_model_prob for m in models]
    m_idx = int(draw_rng.choice(len(models), p=probs))
    truth = prior_sample(models[m_idx], draw_rng)
    observations = [
        sample_observation(models[m_idx], truth, int(d), tau, draw_rng)
        for d in designs
    ]
    if kind is UtilityKind.PARAMETER_ESTIMATION:
        fits = None
    else:
        fits = [laplace_fit(m, observations, fit_rng) for m in models]
    return static_utility(kind, models, m_idx, observations, rng=fit_rng, fits=fits)


def expected_static_utility(models, designs, kind: UtilityKind, B: int,
                            tau: float = 24.0, seed: int = 0,
                            max_failure_frac: float = 0.2) -> StaticEstimate:
    """Monte Carlo expected utility of a whole I-point design.

    Deterministic in ``seed``: draw b always uses the b-th child seed, so
    two designs evaluated with the same seed share their random numbers.
    """
    if B < 1:
        raise InvalidParameterError("B must be >= 1")
    children = np.random.SeedSequence(seed).spawn(B)
    values = []
    n_failed = 0
    for child in children:
        try:
            values.append(_one_draw_utility(models, designs, kind, tau, child))
        except FitFailureError:
            n_failed += 1
    if n_failed > max_failure_frac * B:
        raise UnreliableEstimateError(
            f"{n_failed}/{B} Monte Carlo draws failed to fit"
        )
    values = np.asarray(values)
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else math.inf
    return StaticEstimate(float(values.mean()), se, len(values), n_failed)


@dataclass
class StaticDesign:
    """A full pre-planned design with its estimated expected utility."""

    designs: list[int]
    estimate: float
    se: float
    n_failed: int
    n_evaluations: int


def _crn_expected_utility(design_vector, *, models, kind, B, tau, seed):
    return expected_static_utility(models, design_vector, kind, B, tau, seed)


def _sweep_candidates(grid, current, n_candidates):
    grid = np.asarray(sorted(set(int(d) for d in grid)))
    idx = np.unique(np.linspace(0, len(grid) - 1, n_candidates).round().astype(int))
    return sorted(set(grid[idx].tolist()) | {int(current)})


def coordinate_exchange(models, d_init, kind: UtilityKind, B: int = 200,
                        passes: int = 2, tau: float = 24.0, grid=range(1, 301),
                        seed: int = 0, n_candidates: int = 20,
                        evaluator=None, workers: int = 0) -> StaticDesign:
    """Cyclic per-coordinate maximization of the Monte Carlo expected utility.

    Every evaluation reuses the same seed (common random numbers), and a
    swap is accepted only when it beats the incumbent by more than one
    standard error, so noise cannot walk the design downhill.  Stops after
    ``passes`` full cycles or a cycle with no accepted change.
    """
    current = [int(d) for d in d_init]
    if evaluator is None:
        # module-level partial so worker processes can unpickle it
        evaluator = functools.partial(
            _crn_expected_utility, models=tuple(models), kind=kind, B=B,
            tau=tau, seed=seed,
        )

    def evaluate_many(design_vectors):
        if workers and len(design_vectors) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(evaluator, design_vectors))
        return [evaluator(dv) for dv in design_vectors]

    incumbent = evaluator(tuple(current))
    n_evals = 1
    for _ in range(passes):
        changed = False
        for k in range(len(current)):
            candidates = [c for c in _sweep_candidates(grid, current[k], n_candidates)
                          if c != current[k]]
            vectors = []
            for cand in candidates:
                trial = list(current)
                trial[k] = cand
                vectors.append(tuple(trial))
            estimates = evaluate_many(vectors)
            n_evals += len(estimates)
            best_j = int(np.argmax([e.estimate for e in estimates]))
            best = estimates[best_j]
            if best.estimate > incumbent.estimate + best.se:
                current[k] = candidates[best_j]
                incumbent = best
                changed = True
        if not changed:
            break
    return StaticDesign(
        designs=current,
        estimate=incumbent.estimate,
        se=incumbent.se,
        n_failed=getattr(incumbent, "n_failed", 0),
        n_evaluations=n_evals,
    )
