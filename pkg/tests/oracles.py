"""Independent reference implementations used only to check the package.

Everything here deliberately avoids the package's own numerical paths:
prey depletion is integrated as an ODE instead of root-found, pmfs come
from scipy.stats, posteriors from tensor-grid quadrature, and utilities
from literal nested loops.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import binom as sp_binom
from scipy.stats import betabinom as sp_betabinom
from scipy.stats import multivariate_normal

from preydesign.models import MechanisticType, ObservationFamily


def ode_prey_remaining(mech, a, th, n0, tau, rtol=1e-12):
    """Adaptive high-order integration of the depletion ODE.

    Integrates v = log N so that the relative accuracy of N survives even
    when the prey density decays by hundreds of e-folds.
    """
    if tau == 0:
        return float(n0)

    if mech is MechanisticType.TYPE_II:
        def rhs(_t, v):
            return -a / (1.0 + a * th * np.exp(v))
    else:
        def rhs(_t, v):
            ev = np.exp(v)
            return -a * ev / (1.0 + a * th * ev * ev)

    sol = solve_ivp(rhs, (0.0, float(tau)), [math.log(n0)], method="DOP853",
                    rtol=rtol, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")
    return float(np.exp(sol.y[0, -1]))


def reference_log_pmf(family, n0, p, lam=None):
    """Log pmf over z = 0..n0 straight from scipy.stats."""
    z = np.arange(n0 + 1)
    if family is ObservationFamily.BINOMIAL:
        return sp_binom.logpmf(z, n0, p)
    alpha = p / lam
    beta = (1.0 - p) / lam
    return sp_betabinom.logpmf(z, n0, alpha, beta)


class GridPosterior:
    """Tensor-grid quadrature posterior for a 2-parameter (binomial) model.

    Trapezoid weights over +/- span prior sds per coordinate.  Exposes the
    log evidence and the posterior mean / sd of each coordinate.

    This oracle cross-checks the SMC machinery (weights, evidence,
    moments), so it builds the posterior by direct numerical integration
    with scipy's pmf; the depletion curve itself is taken from the package
    solver, which has its own ODE-integration oracle.
    """

    def __init__(self, model, observations, n=400, span=5.0):
        assert model.n_params == 2, "grid oracle covers the 2-d models only"
        mu = model.prior_means()
        sd = model.prior_sds()
        axes = [np.linspace(m - span * s, m + span * s, n) for m, s in zip(mu, sd)]
        wts = []
        for ax in axes:
            w = np.full(n, ax[1] - ax[0])
            w[0] *= 0.5
            w[-1] *= 0.5
            wts.append(w)
        ga, gt = np.meshgrid(axes[0], axes[1], indexing="ij")
        self.nodes = np.column_stack([ga.ravel(), gt.ravel()])
        self.cell_w = np.outer(wts[0], wts[1]).ravel()

        log_prior = np.sum(
            -0.5 * ((self.nodes - mu) / sd) ** 2 - np.log(sd) - 0.5 * math.log(2 * math.pi),
            axis=1,
        )
        from preydesign.models import prey_remaining

        log_lik = np.zeros(len(self.nodes))
        a = np.exp(self.nodes[:, 0])
        th = np.exp(self.nodes[:, 1])
        for obs in observations:
            remaining = prey_remaining(model.mech, a, th, float(obs.n0), obs.tau)
            p = np.clip((obs.n0 - remaining) / obs.n0, 1e-12, 1 - 1e-12)
            log_lik += sp_binom.logpmf(obs.n, obs.n0, p)

        log_joint = log_prior + log_lik + np.log(self.cell_w)
        shift = np.max(log_joint)
        mass = np.exp(log_joint - shift)
        self.log_evidence = shift + math.log(np.sum(mass))
        self.post = mass / np.sum(mass)

    def mean(self):
        return self.post @ self.nodes

    def sd(self):
        mu = self.mean()
        return np.sqrt(self.post @ (self.nodes - mu) ** 2)


def naive_expected_utility(model_probs, pmf_tables, kind):
    """Literal nested-loop expected utility.

    ``pmf_tables[m]`` is ``(weights, pmf)`` with ``pmf[j][z]`` the outcome
    pmf of particle j; every sum below is written as the plainest possible
    loop so nothing is shared with the vectorized implementation.
    """
    n_models = len(pmf_tables)
    n_out = len(pmf_tables[0][1][0])

    f_hat = []  # [m][z]
    for m in range(n_models):
        weights, pmf = pmf_tables[m]
        row = []
        for z in range(n_out):
            s = 0.0
            for j in range(len(weights)):
                s += weights[j] * pmf[j][z]
            row.append(s)
        f_hat.append(row)

    f_bar = []
    for z in range(n_out):
        s = 0.0
        for m in range(n_models):
            s += model_probs[m] * f_hat[m][z]
        f_bar.append(s)

    def pe_term(m, z):
        weights, pmf = pmf_tables[m]
        if f_hat[m][z] <= 0.0:
            return 0.0
        s = 0.0
        for j in range(len(weights)):
            upd = weights[j] * pmf[j][z] / f_hat[m][z]
            if pmf[j][z] > 0.0:
                s += upd * math.log(pmf[j][z])
        return s - math.log(f_hat[m][z])

    def md_term(m, z):
        if f_hat[m][z] <= 0.0 or f_bar[z] <= 0.0:
            return 0.0
        return math.log(model_probs[m] * f_hat[m][z] / f_bar[z])

    total = 0.0
    for m in range(n_models):
        for z in range(n_out):
            if kind == "pe":
                u = pe_term(m, z)
            elif kind == "md":
                u = md_term(m, z)
            else:
                u = pe_term(m, z) + md_term(m, z)
            total += model_probs[m] * f_hat[m][z] * u
    return total


def mc_kld_mvn(mean0, cov0, mean1, cov1, n=1_000_000, seed=0):
    """Monte Carlo KLD between two multivariate normals."""
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(mean0, cov0, size=n)
    lp0 = multivariate_normal.logpdf(x, mean0, cov0)
    lp1 = multivariate_normal.logpdf(x, mean1, cov1)
    return float(np.mean(lp0 - lp1))
