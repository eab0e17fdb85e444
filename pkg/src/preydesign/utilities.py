"""Particle estimators for the design utilities and their expectations.

For a candidate initial prey density ``d`` the outcome space is the full
set {0, .., d}.  Each model's posterior predictive mass over that set and
the per-outcome updated weights fall straight out of the particle set;
all three utilities (information gain on the parameters, information gain
on the model indicator, and their sum) are exhaustive sums over outcomes
and models, with no subsampling.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidParameterError
from .models import ObservationFamily, expected_proportion_particles, log_pmf_rows
from .smc import DesignState, posterior_model_probs

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the package
    numba = None

# Predictive masses below this are unreachable at double precision and
# contribute exactly zero to every expectation.
_MASS_FLOOR = 1e-300


class UtilityKind(enum.Enum):
    PARAMETER_ESTIMATION = "pe"
    MODEL_DISCRIMINATION = "md"
    TOTAL_ENTROPY = "te"


@dataclass
class PredictiveRow:
    """Predictive quantities for one (model, design) pair.

    ``pmf[j, z]`` is particle j's outcome pmf; ``f_hat[z]`` the weighted
    predictive mass.  Updated weights for any outcome are recovered from
    the factorization ``W_j * pmf[j, z] / f_hat[z]``.
    """

    model_index: int
    design: int
    weights: np.ndarray  # (J,)
    pmf: np.ndarray  # (J, d+1)
    log_pmf: np.ndarray  # (J, d+1)
    f_hat: np.ndarray  # (d+1,)

    def updated_weights(self, z: int) -> np.ndarray:
        mass = self.f_hat[z]
        if mass <= _MASS_FLOOR:
            raise InvalidParameterError(
                f"outcome {z} has no predictive mass at design {self.design}"
            )
        return self.weights * self.pmf[:, z] / mass


def predictive_table(state: DesignState, model_index: int, design: int) -> PredictiveRow:
    """Predictive row for one model at one candidate design."""
    ps = state.particle_sets[model_index]
    log_pmf = log_pmf_rows(ps.model, ps.particles, int(design), state.tau)
    pmf = np.exp(log_pmf)
    f_hat = ps.weights @ pmf
    return PredictiveRow(model_index, int(design), ps.weights, pmf, log_pmf, f_hat)


# ---------------------------------------------------------------------------
# Fused per-(model, design) outcome sums
# ---------------------------------------------------------------------------
#
# Expected utilities only ever need two reductions over the (particle,
# outcome) matrix: the predictive mass f_hat[z] = sum_j W_j f_jz and the
# entropy-ish sum s1[z] = sum_j W_j f_jz log f_jz.  Materializing the full
# matrix for every candidate design is memory-bound, so when numba is
# available we stream the pmf recurrence per particle instead.  Per-
# particle pmf values that underflow exp() are genuinely zero mass.

if numba is not None:

    @numba.njit(cache=True)
    def _binom_stats_kernel(p, w, d):  # pragma: no cover - compiled
        f_hat = np.zeros(d + 1)
        s1 = np.zeros(d + 1)
        coeff = np.empty(d)
        for z in range(d):
            coeff[z] = math.log((d - z) / (z + 1.0))
        for j in range(p.shape[0]):
            log_odds = math.log(p[j]) - math.log1p(-p[j])
            lp = d * math.log1p(-p[j])
            wj = w[j]
            f = math.exp(lp) if lp > -700.0 else 0.0
            f_hat[0] += wj * f
            s1[0] += wj * f * lp
            for z in range(d):
                step = coeff[z] + log_odds
                lp += step
                if lp > -700.0:
                    f = math.exp(lp)
                    f_hat[z + 1] += wj * f
                    s1[z + 1] += wj * f * lp
                elif step < 0.0:
                    # steps only shrink from here: the rest of the tail is 0
                    break
        return f_hat, s1

    @numba.njit(cache=True)
    def _bb_stats_kernel(p, lam, w, d):  # pragma: no cover - compiled
        f_hat = np.zeros(d + 1)
        s1 = np.zeros(d + 1)
        coeff = np.empty(d)
        for z in range(d):
            coeff[z] = math.log((d - z) / (z + 1.0))
        for j in range(p.shape[0]):
            alpha = p[j] / lam[j]
            beta = (1.0 - p[j]) / lam[j]
            lp = (
                math.lgamma(d + beta)
                - math.lgamma(beta)
                + math.lgamma(alpha + beta)
                - math.lgamma(d + alpha + beta)
            )
            wj = w[j]
            f = math.exp(lp) if lp > -700.0 else 0.0
            f_hat[0] += wj * f
            s1[0] += wj * f * lp
            for z in range(d):
                lp += coeff[z] + math.log((z + alpha) / (d - 1.0 - z + beta))
                f = math.exp(lp) if lp > -700.0 else 0.0
                f_hat[z + 1] += wj * f
                s1[z + 1] += wj * f * lp
        return f_hat, s1


def _row_stats(state: DesignState, model_index: int, design: int, p=None):
    """(f_hat, s1) for one model at one design, streaming when possible."""
    ps = state.particle_sets[model_index]
    if p is None:
        p = expected_proportion_particles(ps.model, ps.particles, design, state.tau)
    if numba is None:
        row = predictive_table(state, model_index, design)
        return row.f_hat, ps.weights @ (row.pmf * row.log_pmf)
    if ps.model.obs is ObservationFamily.BINOMIAL:
        return _binom_stats_kernel(p, ps.weights, int(design))
    lam = np.exp(ps.particles[:, 2])
    return _bb_stats_kernel(p, lam, ps.weights, int(design))


def _proportion_cache(state: DesignState, designs: np.ndarray):
    """p_tau for every (model, particle, design), one solver call per model."""
    from .models import _clamp_probability, prey_remaining

    cache = []
    col = designs[:, None].astype(float)
    for ps in state.particle_sets:
        a = np.exp(ps.particles[:, 0])[None, :]
        th = np.exp(ps.particles[:, 1])[None, :]
        remaining = prey_remaining(ps.model.mech, a, th, col, state.tau)
        cache.append(_clamp_probability((col - remaining) / col))
    return cache  # per model: (n_designs, J)


def pe_utility(state: DesignState, model_index: int, design: int, z: int,
               row: PredictiveRow | None = None) -> float:
    """Information gained on model ``m``'s parameters if outcome ``z`` occurs.

    Particle form: sum_j W_j(d,z) log f(z|theta_j,d) - log f_hat(z|m).
    """
    row = row if row is not None else predictive_table(state, model_index, design)
    mass = row.f_hat[z]
    if mass <= _MASS_FLOOR:
        return 0.0
    updated = row.updated_weights(z)
    return float(updated @ row.log_pmf[:, z] - math.log(mass))


def md_utility(state: DesignState, design: int, z: int,
               rows: list[PredictiveRow] | None = None) -> np.ndarray:
    """Updated log model probabilities if outcome ``z`` occurs at ``design``."""
    rows = rows if rows is not None else [
        predictive_table(state, m, design) for m in range(len(state.particle_sets))
    ]
    probs = posterior_model_probs(state.particle_sets)
    with np.errstate(divide="ignore"):
        log_num = np.log(probs) + np.log(np.array([r.f_hat[z] for r in rows]))
    return log_num - logsumexp(log_num)


def _xlogx(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = x[positive] * np.log(x[positive])
    return out


def expected_utility(state: DesignState, design: int, kind: UtilityKind,
                     _p_rows=None) -> float:
    """Expected utility of ``design`` over the joint (model, outcome) space."""
    n_models = len(state.particle_sets)
    probs = posterior_model_probs(state.particle_sets)
    stats = [
        _row_stats(state, m, design, p=None if _p_rows is None else _p_rows[m])
        for m in range(n_models)
    ]

    if kind is UtilityKind.PARAMETER_ESTIMATION:
        total = 0.0
        for m in range(n_models):
            if probs[m] == 0.0:
                continue
            f_hat, s1 = stats[m]
            total += probs[m] * float(s1.sum() - _xlogx(f_hat).sum())
        return total

    f_bar = np.zeros_like(stats[0][0])
    for m in range(n_models):
        f_bar += probs[m] * stats[m][0]

    if kind is UtilityKind.MODEL_DISCRIMINATION:
        total = 0.0
        for m in range(n_models):
            if probs[m] == 0.0:
                continue
            f_hat = stats[m][0]
            valid = f_hat > _MASS_FLOOR
            contrib = f_hat[valid] @ (
                math.log(probs[m]) + np.log(f_hat[valid]) - np.log(f_bar[valid])
            )
            total += probs[m] * float(contrib)
        return total

    if kind is UtilityKind.TOTAL_ENTROPY:
        # per-outcome sum of both utilities, weighted per the expectation
        total = 0.0
        for m in range(n_models):
            if probs[m] == 0.0:
                continue
            f_hat, s1 = stats[m]
            valid = f_hat > _MASS_FLOOR
            fhv = f_hat[valid]
            u_pe = s1[valid] / fhv - np.log(fhv)
            u_md = math.log(probs[m]) + np.log(fhv) - np.log(f_bar[valid])
            total += probs[m] * float(fhv @ (u_pe + u_md))
        return total

    raise InvalidParameterError(f"unknown utility kind {kind!r}")


@dataclass
class UtilitySurface:
    """Expected utility over an evaluated design grid."""

    designs: np.ndarray
    values: np.ndarray
    d_star: int
    kind: UtilityKind

    def as_points(self) -> list[tuple[int, float]]:
        return [(int(d), float(v)) for d, v in zip(self.designs, self.values)]


def _argmax_smallest_design(designs: np.ndarray, values: np.ndarray) -> int:
    best = np.max(values)
    return int(np.min(designs[values == best]))


def utility_surface(state: DesignState, designs, kind: UtilityKind,
                    stride: int = 1, refine_window: int = 5) -> UtilitySurface:
    """Evaluate the expected utility over the candidate grid.

    ``stride`` > 1 evaluates a coarse subset first and then fills in the
    full grid inside +/- ``refine_window`` of the coarse argmax; ties
    break toward the smallest density (fewer animals).
    """
    designs = np.asarray(list(designs), dtype=int)
    if designs.size == 0:
        raise InvalidParameterError("design grid is empty")
    if stride < 1:
        raise InvalidParameterError(f"stride must be >= 1, got {stride}")

    def evaluate(ds):
        cache = _proportion_cache(state, ds)
        return np.array([
            expected_utility(state, int(d), kind,
                             _p_rows=[rows[i] for rows in cache])
            for i, d in enumerate(ds)
        ])

    if stride == 1 or designs.size <= stride:
        evaluated = designs
        values = evaluate(evaluated)
    else:
        coarse = designs[np.arange(0, designs.size, stride)]
        coarse_vals = evaluate(coarse)
        center = _argmax_smallest_design(coarse, coarse_vals)
        in_window = (designs >= center - refine_window) & (designs <= center + refine_window)
        extra = np.setdiff1d(designs[in_window], coarse)
        extra_vals = evaluate(extra) if extra.size else np.empty(0)
        order = np.argsort(np.concatenate([coarse, extra]), kind="stable")
        evaluated = np.concatenate([coarse, extra]).astype(int)[order]
        values = np.concatenate([coarse_vals, extra_vals])[order]

    return UtilitySurface(
        designs=evaluated,
        values=values,
        d_star=_argmax_smallest_design(evaluated, values),
        kind=kind,
    )


def surface_to_csv(surface: UtilitySurface, path) -> None:
    """Two-column (design, expected utility) export for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design", "expected_utility"])
        for d, v in surface.as_points():
            writer.writerow([d, repr(v)])
