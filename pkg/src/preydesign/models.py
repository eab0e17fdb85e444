"""Prey-depletion curves and the observation models that link them to data.

A functional-response trial exposes a predator to ``n0`` prey for ``tau``
hours and records the number consumed.  The mean consumption is driven by
one of two mechanistic depletion laws (decelerating or sigmoid), and the
observed count follows either a binomial or a beta-binomial distribution
around that mean.  Everything here is a pure function of its inputs;
random draws take an explicit ``numpy.random.Generator``.

Parameters live on the log scale throughout: a particle is the vector
``(log_a, log_th)`` for binomial models and ``(log_a, log_th, log_lambda)``
for beta-binomial models, so positivity is structural.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParameterError, NumericalError

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the package
    numba = None

# Expected proportions are clamped into [P_CLAMP, 1 - P_CLAMP] so that
# every log likelihood stays finite, whatever the parameters.
P_CLAMP = 1e-12

PARAM_NAMES = ("log_a", "log_th", "log_lambda")

DEFAULT_PRIOR_MEAN = -1.4
DEFAULT_PRIOR_SD = 1.35


class MechanisticType(enum.Enum):
    """Shape of the depletion law: decelerating (II) or sigmoid (III)."""

    TYPE_II = "type-ii"
    TYPE_III = "type-iii"


class ObservationFamily(enum.Enum):
    BINOMIAL = "binomial"
    BETA_BINOMIAL = "beta-binomial"


@dataclass(frozen=True)
class NormalPrior:
    """Independent normal prior on one log-scale coordinate."""

    mean: float = DEFAULT_PRIOR_MEAN
    sd: float = DEFAULT_PRIOR_SD

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise InvalidParameterError("prior mean/sd must be finite")
        if self.sd <= 0:
            raise InvalidParameterError(f"prior sd must be > 0, got {self.sd}")


@dataclass(frozen=True)
class PriorSpec:
    """Per-coordinate independent normal priors on the log scale.

    ``log_lambda`` is only consulted for beta-binomial models; it defaults
    to the same vague normal as the other coordinates.
    """

    log_a: NormalPrior = NormalPrior()
    log_th: NormalPrior = NormalPrior()
    log_lambda: NormalPrior = NormalPrior()

    def coords(self, n_params: int) -> tuple[NormalPrior, ...]:
        return (self.log_a, self.log_th, self.log_lambda)[:n_params]

    def means(self, n_params: int) -> np.ndarray:
        return np.array([c.mean for c in self.coords(n_params)])

    def sds(self, n_params: int) -> np.ndarray:
        return np.array([c.sd for c in self.coords(n_params)])


@dataclass(frozen=True)
class ModelSpec:
    """One candidate model: depletion law x observation family, plus prior.

    The conventional numbering is 1 = beta-binomial/type II,
    2 = beta-binomial/type III, 3 = binomial/type II, 4 = binomial/type III.
    """

    id: int
    mech: MechanisticType
    obs: ObservationFamily
    prior: PriorSpec = PriorSpec()
    prior_model_prob: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.prior_model_prob <= 1.0:
            raise InvalidParameterError(
                f"prior model probability must be in (0, 1], got {self.prior_model_prob}"
            )

    @property
    def n_params(self) -> int:
        return 3 if self.obs is ObservationFamily.BETA_BINOMIAL else 2

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[: self.n_params]

    @property
    def label(self) -> str:
        return f"model{self.id}"

    def prior_means(self) -> np.ndarray:
        return self.prior.means(self.n_params)

    def prior_sds(self) -> np.ndarray:
        return self.prior.sds(self.n_params)


_STANDARD_LAYOUT = (
    (1, MechanisticType.TYPE_II, ObservationFamily.BETA_BINOMIAL),
    (2, MechanisticType.TYPE_III, ObservationFamily.BETA_BINOMIAL),
    (3, MechanisticType.TYPE_II, ObservationFamily.BINOMIAL),
    (4, MechanisticType.TYPE_III, ObservationFamily.BINOMIAL),
)


def candidate_models(prior: PriorSpec | None = None,
                     prior_probs=None,
                     ids=None) -> list[ModelSpec]:
    """The four standard candidate models with equal prior probabilities.

    ``ids`` restricts the set (e.g. ``ids=(3,)`` for a binomial/type-II
    only session); probabilities are renormalized over the kept models.
    """
    prior = prior or PriorSpec()
    layout = [row for row in _STANDARD_LAYOUT if ids is None or row[0] in ids]
    if not layout:
        raise InvalidParameterError(f"no candidate models match ids={ids}")
    if prior_probs is None:
        prior_probs = [1.0 / len(layout)] * len(layout)
    if len(prior_probs) != len(layout):
        raise InvalidParameterError("prior_probs length must match model count")
    total = float(sum(prior_probs))
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
        raise InvalidParameterError(f"prior model probabilities sum to {total}, not 1")
    return [
        ModelSpec(id=mid, mech=mech, obs=obs, prior=prior, prior_model_prob=p / total)
        for (mid, mech, obs), p in zip(layout, prior_probs)
    ]


@dataclass(frozen=True)
class Params:
    """A single parameter point on the log scale."""

    log_a: float
    log_th: float
    log_lambda: float | None = None

    def __post_init__(self):
        vals = [self.log_a, self.log_th] + (
            [] if self.log_lambda is None else [self.log_lambda]
        )
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameterError(f"non-finite parameter vector {vals}")

    @property
    def a(self) -> float:
        return math.exp(self.log_a)

    @property
    def th(self) -> float:
        return math.exp(self.log_th)

    @property
    def lam(self) -> float:
        if self.log_lambda is None:
            raise InvalidParameterError("model has no over-dispersion parameter")
        return math.exp(self.log_lambda)

    def to_array(self) -> np.ndarray:
        if self.log_lambda is None:
            return np.array([self.log_a, self.log_th])
        return np.array([self.log_a, self.log_th, self.log_lambda])

    @classmethod
    def from_array(cls, x) -> "Params":
        x = np.asarray(x, dtype=float)
        if x.shape == (2,):
            return cls(float(x[0]), float(x[1]))
        if x.shape == (3,):
            return cls(float(x[0]), float(x[1]), float(x[2]))
        raise InvalidParameterError(f"parameter vector must have 2 or 3 entries, got shape {x.shape}")


@dataclass(frozen=True)
class Observation:
    """One trial: ``n`` of ``n0`` prey consumed within ``tau`` hours."""

    n0: int
    n: int
    tau: float

    def __post_init__(self):
        if self.n0 < 1 or self.n0 != int(self.n0):
            raise InvalidParameterError(f"initial prey density must be a positive integer, got {self.n0}")
        if not 0 <= self.n <= self.n0:
            raise InvalidParameterError(f"consumed count {self.n} outside [0, {self.n0}]")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise InvalidParameterError(f"exposure time must be positive and finite, got {self.tau}")


# ---------------------------------------------------------------------------
# Prey remaining after tau hours
# ---------------------------------------------------------------------------
#
# Separating the depletion ODEs gives an implicit equation for the prey
# remaining N at time tau, with every term nonnegative:
#
#   type II :  (1/a) * ln(n0/N) + th * (n0 - N) = tau
#   type III:  (1/a) * (1/N - 1/n0) + th * (n0 - N) = tau
#
# The left side is strictly decreasing in N on (0, n0], so the root is
# unique.  We bisect on u = log N (which keeps the slope bounded where N is
# tiny) and finish with a couple of safeguarded Newton steps, giving
# residuals at the floating-point floor in ~60 cheap iterations.

_BISECT_ITERS = 60
_NEWTON_ITERS = 3
# Residual tolerance (in time units) for declaring the root found.
_RESIDUAL_TOL = 1e-9


def _validate_solver_args(a, th, n0, tau):
    for name, val, lo in (("a", a, 0.0), ("n0", n0, 0.0)):
        arr = np.asarray(val, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= lo):
            raise InvalidParameterError(f"{name} must be finite and > {lo}")
    for name, val in (("th", th), ("tau", tau)):
        arr = np.asarray(val, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidParameterError(f"{name} must be finite and >= 0")


if numba is not None:

    @numba.njit(cache=True)
    def _prey_kernel(type_ii, a, th, n0, tau, out, residual):  # pragma: no cover
        for i in range(a.size):
            if tau[i] <= 0.0:
                out[i] = n0[i]
                residual[i] = 0.0
                continue
            log_n0 = math.log(n0[i])
            inv_a = 1.0 / a[i]
            if type_ii:
                lo = log_n0 - a[i] * tau[i]
            else:
                lo = -math.log(1.0 / n0[i] + a[i] * tau[i])
            hi = log_n0
            u = 0.5 * (lo + hi)
            h = 1.0
            # safeguarded Newton: the bracket always shrinks, the Newton
            # candidate is used on alternate iterations when it stays
            # inside (forced bisection in between stops Newton from
            # creeping when the deficit is astronomically steep).  A
            # bracket collapsed to machine resolution pins the root even
            # when |h| cannot get small there.
            for it in range(400):
                n = math.exp(u)
                if type_ii:
                    h = inv_a * (log_n0 - u) + th[i] * (n0[i] - n) - tau[i]
                    dh = -inv_a - th[i] * n
                else:
                    h = inv_a * (math.exp(-u) - 1.0 / n0[i]) + th[i] * (n0[i] - n) - tau[i]
                    dh = -inv_a * math.exp(-u) - th[i] * n
                if h > 0.0:
                    lo = u
                else:
                    hi = u
                if abs(h) < 1e-12:
                    h = 0.0
                    break
                if hi - lo < 4e-16 * max(1.0, abs(lo), abs(hi)):
                    h = 0.0
                    break
                candidate = u - h / dh
                if it % 2 == 0 and lo < candidate < hi:
                    u = candidate
                else:
                    u = 0.5 * (lo + hi)
            # exp(log n0) can land an ulp above n0; the root never does
            out[i] = min(math.exp(u), n0[i])
            residual[i] = h


def prey_remaining(mech: MechanisticType, a, th, n0, tau) -> np.ndarray:
    """Prey remaining at time ``tau``; broadcasts over all four arguments."""
    _validate_solver_args(a, th, n0, tau)
    a, th, n0, tau = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (a, th, n0, tau))
    )
    if numba is not None:
        flat = [np.ascontiguousarray(x, dtype=float).ravel() for x in (a, th, n0, tau)]
        out = np.empty_like(flat[0])
        residual = np.empty_like(flat[0])
        _prey_kernel(mech is MechanisticType.TYPE_II, *flat, out, residual)
        if not np.all(np.abs(residual) <= _RESIDUAL_TOL):
            worst = float(np.max(np.abs(residual)))
            raise NumericalError(
                f"prey-remaining solver residual {worst:.3e} exceeds tolerance"
            )
        return out.reshape(a.shape)
    log_n0 = np.log(n0)
    type_ii = mech is MechanisticType.TYPE_II
    if type_ii:
        u_lo = log_n0 - a * tau
    else:
        u_lo = -np.log(1.0 / n0 + a * tau)

    inv_a = 1.0 / a

    def deficit(u):
        n = np.exp(u)
        if type_ii:
            lhs = inv_a * (log_n0 - u) + th * (n0 - n)
        else:
            lhs = inv_a * (np.exp(-u) - 1.0 / n0) + th * (n0 - n)
        return lhs - tau

    lo = np.array(u_lo, dtype=float)
    hi = np.array(log_n0, dtype=float)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        above = deficit(mid) > 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    u = 0.5 * (lo + hi)
    for _ in range(_NEWTON_ITERS):
        n = np.exp(u)
        if type_ii:
            h = inv_a * (log_n0 - u) + th * (n0 - n) - tau
            dh = -inv_a - th * n
        else:
            h = inv_a * (np.exp(-u) - 1.0 / n0) + th * (n0 - n) - tau
            dh = -inv_a * np.exp(-u) - th * n
        u = np.clip(u - h / dh, u_lo, log_n0)

    # evaluate the residual at u itself: exp(u) may underflow to zero for
    # extreme depletion, which is a perfectly good answer.  Entries whose
    # bracket collapsed to machine resolution are converged by bracketing
    # no matter how steep the deficit is there.
    residual = np.where(tau == 0.0, 0.0, deficit(u))
    collapsed = (hi - lo) <= 4e-16 * np.maximum.reduce(
        [np.ones_like(lo), np.abs(lo), np.abs(hi)]
    )
    bad = (np.abs(residual) > _RESIDUAL_TOL) & ~collapsed
    if np.any(bad):
        worst = float(np.max(np.abs(residual[bad])))
        raise NumericalError(f"prey-remaining solver residual {worst:.3e} exceeds tolerance")
    return np.where(tau == 0.0, n0, np.minimum(np.exp(u), n0))


def _prey_remaining_scalar(type_ii: bool, a: float, th: float, n0: float, tau: float) -> float:
    """Pure-python scalar twin of :func:`prey_remaining` for hot loops."""
    if tau <= 0.0:
        return n0
    log_n0 = math.log(n0)
    inv_a = 1.0 / a
    if type_ii:
        lo = log_n0 - a * tau
    else:
        lo = -math.log(1.0 / n0 + a * tau)
    hi = log_n0
    u = 0.5 * (lo + hi)
    converged = False
    for it in range(400):
        n = math.exp(u)
        if type_ii:
            h = inv_a * (log_n0 - u) + th * (n0 - n) - tau
            dh = -inv_a - th * n
        else:
            h = inv_a * (math.exp(-u) - 1.0 / n0) + th * (n0 - n) - tau
            dh = -inv_a * math.exp(-u) - th * n
        if h > 0.0:
            lo = u
        else:
            hi = u
        # a bracket at machine resolution pins the root even when the
        # deficit is too steep for |h| to get small
        if abs(h) < 1e-12 or hi - lo < 4e-16 * max(1.0, abs(lo), abs(hi)):
            converged = True
            break
        # Newton only on alternate iterations: forced bisection in between
        # keeps it from creeping when the deficit is astronomically steep
        candidate = u - h / dh
        if it % 2 == 0 and lo < candidate < hi:
            u = candidate
        else:
            u = 0.5 * (lo + hi)
    if not converged:
        raise NumericalError("prey-remaining solver failed to converge")
    return min(math.exp(u), n0)


def solve_prey_remaining(mech: MechanisticType, a: float, th: float,
                         n0: float, tau: float) -> float:
    """Scalar prey remaining at time ``tau`` for attack rate ``a`` and handling time ``th``."""
    for name, val in (("a", a), ("th", th), ("n0", n0), ("tau", tau)):
        if not math.isfinite(val):
            raise InvalidParameterError(f"{name} must be finite, got {val}")
    if a <= 0 or n0 <= 0:
        raise InvalidParameterError(f"a and n0 must be > 0, got a={a}, n0={n0}")
    if th < 0 or tau < 0:
        raise InvalidParameterError(f"th and tau must be >= 0, got th={th}, tau={tau}")
    return _prey_remaining_scalar(mech is MechanisticType.TYPE_II, a, th, float(n0), tau)


def _clamp_probability(p):
    return np.clip(p, P_CLAMP, 1.0 - P_CLAMP)


def expected_proportion(mech: MechanisticType, params: Params, n0, tau) -> float:
    """Probability that a single prey item has been consumed by time ``tau``."""
    if n0 < 1:
        raise InvalidParameterError(f"n0 must be >= 1, got {n0}")
    remaining = solve_prey_remaining(mech, params.a, params.th, float(n0), tau)
    return float(_clamp_probability((n0 - remaining) / n0))


def expected_proportion_particles(model: ModelSpec, theta: np.ndarray, n0, tau) -> np.ndarray:
    """Vectorized expected proportion for a (J, p) array of log-scale particles."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    a = np.exp(theta[:, 0])
    th = np.exp(theta[:, 1])
    remaining = prey_remaining(model.mech, a, th, float(n0), float(tau))
    return _clamp_probability((n0 - remaining) / n0)


# ---------------------------------------------------------------------------
# Observation likelihoods
# ---------------------------------------------------------------------------


def _check_family(model: ModelSpec, params: Params):
    needs_lambda = model.obs is ObservationFamily.BETA_BINOMIAL
    if needs_lambda and params.log_lambda is None:
        raise InvalidParameterError("beta-binomial model requires log_lambda")
    if not needs_lambda and params.log_lambda is not None:
        raise InvalidParameterError("binomial model must not carry log_lambda")


def _log_binom_coeff(n0: int, n) -> float:
    return (
        math.lgamma(n0 + 1.0) - math.lgamma(n + 1.0) - math.lgamma(n0 - n + 1.0)
    )


def _betaln(x, y):
    return gammaln(x) + gammaln(y) - gammaln(x + y)


def log_likelihood(model: ModelSpec, params: Params, obs: Observation) -> float:
    """Log pmf of one observation under ``model`` at parameter point ``params``."""
    _check_family(model, params)
    p = expected_proportion(model.mech, params, obs.n0, obs.tau)
    coeff = _log_binom_coeff(obs.n0, obs.n)
    if model.obs is ObservationFamily.BINOMIAL:
        return coeff + obs.n * math.log(p) + (obs.n0 - obs.n) * math.log1p(-p)
    lam = params.lam
    alpha = p / lam
    beta = (1.0 - p) / lam
    return float(
        coeff
        + _scalar_betaln(obs.n + alpha, obs.n0 - obs.n + beta)
        - _scalar_betaln(alpha, beta)
    )


def _scalar_betaln(x: float, y: float) -> float:
    return math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y)


def log_likelihood_particles(model: ModelSpec, theta: np.ndarray, obs: Observation) -> np.ndarray:
    """Log pmf of one observation for every particle in a (J, p) array."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[1] != model.n_params:
        raise InvalidParameterError(
            f"{model.label} expects {model.n_params} parameters, particles have {theta.shape[1]}"
        )
    p = expected_proportion_particles(model, theta, obs.n0, obs.tau)
    coeff = _log_binom_coeff(obs.n0, obs.n)
    if model.obs is ObservationFamily.BINOMIAL:
        return coeff + obs.n * np.log(p) + (obs.n0 - obs.n) * np.log1p(-p)
    lam = np.exp(theta[:, 2])
    alpha = p / lam
    beta = (1.0 - p) / lam
    return coeff + _betaln(obs.n + alpha, obs.n0 - obs.n + beta) - _betaln(alpha, beta)


def log_pmf_rows(model: ModelSpec, theta: np.ndarray, n0: int, tau: float) -> np.ndarray:
    """Full (J, n0+1) matrix of log pmf values over outcomes z = 0..n0.

    Built from the z -> z+1 pmf ratio so the cost per outcome is a couple
    of adds instead of a log-gamma triple; the ratio telescopes from the
    z = 0 column.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    p = expected_proportion_particles(model, theta, n0, tau)
    z = np.arange(n0, dtype=float)  # 0 .. n0-1, the "from" index of each ratio
    # C(n0, z+1)/C(n0, z) = (n0 - z)/(z + 1)
    coeff_step = np.log((n0 - z) / (z + 1.0))
    out = np.empty((theta.shape[0], n0 + 1), dtype=float)
    if model.obs is ObservationFamily.BINOMIAL:
        out[:, 0] = n0 * np.log1p(-p)
        steps = coeff_step[None, :] + (np.log(p) - np.log1p(-p))[:, None]
    else:
        lam = np.exp(theta[:, 2])
        alpha = p / lam
        beta = (1.0 - p) / lam
        out[:, 0] = (
            gammaln(n0 + beta) - gammaln(beta) + gammaln(alpha + beta) - gammaln(n0 + alpha + beta)
        )
        steps = coeff_step[None, :] + np.log(z[None, :] + alpha[:, None]) - np.log(
            (n0 - 1.0 - z)[None, :] + beta[:, None]
        )
    np.cumsum(steps, axis=1, out=steps)
    out[:, 1:] = out[:, :1] + steps
    return out


def make_log_joint(model: ModelSpec, observations, box: float = math.inf):
    """Fast scalar log joint density (prior x likelihood) of a dataset.

    Returns a closure over precomputed per-observation constants, suitable
    for tight optimizer loops; ``box`` rejects log-scale parameters with
    absolute value beyond it (returning -1e300) so line searches cannot
    wander into overflow territory.
    """
    type_ii = model.mech is MechanisticType.TYPE_II
    binom = model.obs is ObservationFamily.BINOMIAL
    trials = [(float(o.n0), o.n, o.tau, _log_binom_coeff(o.n0, o.n)) for o in observations]
    mu = model.prior_means()
    sd = model.prior_sds()
    prior_const = float(-np.sum(np.log(sd)) - 0.5 * len(mu) * _LOG_2PI)
    lg = math.lgamma

    def log_joint(theta) -> float:
        if len(theta) != len(mu):
            raise InvalidParameterError(
                f"{model.label} expects {len(mu)} parameters, got {len(theta)}"
            )
        total = prior_const
        for k in range(len(mu)):
            t = theta[k]
            if not math.isfinite(t) or abs(t) > box:
                return -1e300
            total -= 0.5 * ((t - mu[k]) / sd[k]) ** 2
        a = math.exp(theta[0])
        th = math.exp(theta[1])
        if not binom:
            lam = math.exp(theta[2])
        for n0, n, tau, coeff in trials:
            remaining = _prey_remaining_scalar(type_ii, a, th, n0, tau)
            p = min(max((n0 - remaining) / n0, P_CLAMP), 1.0 - P_CLAMP)
            if binom:
                total += coeff + n * math.log(p) + (n0 - n) * math.log1p(-p)
            else:
                alpha = p / lam
                beta = (1.0 - p) / lam
                total += coeff + (
                    lg(n + alpha) + lg(n0 - n + beta) - lg(n0 + alpha + beta)
                ) - (lg(alpha) + lg(beta) - lg(alpha + beta))
        return total

    return log_joint


def sample_observation(model: ModelSpec, params: Params, n0: int, tau: float,
                       rng: np.random.Generator) -> Observation:
    """Draw one observation from the model's pmf at design ``n0``."""
    if n0 < 1:
        raise InvalidParameterError(f"n0 must be >= 1, got {n0}")
    _check_family(model, params)
    p = expected_proportion(model.mech, params, n0, tau)
    if model.obs is ObservationFamily.BINOMIAL:
        n = rng.binomial(n0, p)
    else:
        lam = params.lam
        q = rng.beta(p / lam, (1.0 - p) / lam)
        n = rng.binomial(n0, q)
    return Observation(n0=int(n0), n=int(n), tau=tau)


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def prior_sample(model: ModelSpec, rng: np.random.Generator) -> Params:
    theta = model.prior_means() + model.prior_sds() * rng.standard_normal(model.n_params)
    return Params.from_array(theta)


def prior_sample_particles(model: ModelSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, p) array of prior draws on the log scale."""
    return model.prior_means() + model.prior_sds() * rng.standard_normal(
        (size, model.n_params)
    )


def prior_log_density(model: ModelSpec, params: Params) -> float:
    _check_family(model, params)
    theta = params.to_array()
    mu = model.prior_means()
    sd = model.prior_sds()
    return float(np.sum(-0.5 * ((theta - mu) / sd) ** 2 - np.log(sd) - 0.5 * _LOG_2PI))


def prior_log_density_particles(model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    mu = model.prior_means()
    sd = model.prior_sds()
    return np.sum(-0.5 * ((theta - mu) / sd) ** 2 - np.log(sd) - 0.5 * _LOG_2PI, axis=1)
