"""Pointwise and complete-data likelihood arithmetic.

The observation model couples a Poisson edge-count layer with a Beta
regression for the observed leaning proxy; both are driven by the same
state-dependent latent coordinates.  Everything here works in log space and
is a pure function of its arguments.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betaln, expit, gammaln

from .types import Layer, ModelParams, StateSequence
from .validation import (
    LEANING_EPS,
    ValidationError,
    check_finite_scalar,
    check_positive,
    check_unit_interval_open,
)

__all__ = [
    "logistic",
    "log_intensity",
    "poisson_log_pmf",
    "beta_leaning_log_pdf",
    "complete_data_log_lik",
    "network_only_log_lik",
]


def logistic(x):
    """Logistic function 1 / (1 + exp(-x)); accepts scalars or arrays."""
    if np.isscalar(x):
        check_finite_scalar(x, "x")
        return float(expit(x))
    return expit(np.asarray(x, dtype=float))


def log_intensity(alpha_i, alpha_j, beta, x_i, x_j, exposure_term=None):
    """Log Poisson intensity for one pair: alpha_i + alpha_j - beta (x_i - x_j)^2.

    ``exposure_term`` (delta times the de-meaned log activity total), when
    given, is added on the log scale; zero reproduces the base model exactly.
    """
    alpha_i = check_finite_scalar(alpha_i, "alpha_i")
    alpha_j = check_finite_scalar(alpha_j, "alpha_j")
    beta = check_positive(beta, "beta")
    x_i = check_finite_scalar(x_i, "x_i")
    x_j = check_finite_scalar(x_j, "x_j")
    out = alpha_i + alpha_j - beta * (x_i - x_j) ** 2
    if exposure_term is not None:
        out += check_finite_scalar(exposure_term, "exposure_term")
    return out


def poisson_log_pmf(y, log_lambda):
    """log P(Y = y) for Y ~ Poisson(exp(log_lambda)).

    Uses the log-gamma function so large counts stay accurate.
    """
    y = int(y)
    if y < 0:
        raise ValidationError(f"y must be a nonnegative integer, got {y}")
    log_lambda = check_finite_scalar(log_lambda, "log_lambda")
    return y * log_lambda - np.exp(log_lambda) - float(gammaln(y + 1))


def beta_leaning_log_pdf(l, gamma0, gamma1, x, phi, eps=LEANING_EPS):
    """Log density of the leaning proxy under the Beta regression.

    The Beta shapes are mean * phi and (1 - mean) * phi with
    mean = logistic(gamma0 + gamma1 * x), so the implied mean of the proxy is
    the logistic link itself.  Values of ``l`` at the unit-interval boundary
    are clamped to [eps, 1 - eps] first; the density is undefined there.
    """
    l = float(l)
    if np.isfinite(l) and 0.0 <= l <= 1.0:
        l = min(max(l, eps), 1.0 - eps)
    l = check_unit_interval_open(l, "l", eps=eps)
    gamma0 = check_finite_scalar(gamma0, "gamma0")
    gamma1 = check_finite_scalar(gamma1, "gamma1")
    x = check_finite_scalar(x, "x")
    phi = check_positive(phi, "phi")
    mean = expit(gamma0 + gamma1 * x)
    a = mean * phi
    b = (1.0 - mean) * phi
    return (a - 1.0) * np.log(l) + (b - 1.0) * np.log1p(-l) - float(betaln(a, b))


def _check_shapes(layer: Layer, params: ModelParams, states: StateSequence):
    if params.n_nodes != layer.n_nodes:
        raise ValidationError(
            f"params have {params.n_nodes} nodes but layer has {layer.n_nodes}"
        )
    if states.n_periods != layer.n_periods:
        raise ValidationError(
            f"states cover {states.n_periods} periods but layer has {layer.n_periods}"
        )
    if states.n_states != params.n_states:
        raise ValidationError(
            f"states use {states.n_states} regimes but params have {params.n_states}"
        )


def _exposure_offsets(layer: Layer, params: ModelParams):
    """Per-period additive log-intensity offsets from the exposure control."""
    T = layer.n_periods
    if params.delta is None or layer.exposure is None:
        return np.zeros(T)
    log_e = np.log(layer.exposure)
    return params.delta * (log_e - log_e.mean())


def poisson_terms_by_period(layer: Layer, params: ModelParams, states: StateSequence):
    """(T,) vector of summed Poisson log-pmf terms over the pairs i < j."""
    _check_shapes(layer, params, states)
    N, T = layer.n_nodes, layer.n_periods
    iu = np.triu_indices(N, 1)
    y = layer.weights[:, iu[0], iu[1]]                      # (T, M)
    offsets = _exposure_offsets(layer, params)
    out = np.zeros(T)
    if iu[0].size == 0:
        return out
    for k in range(params.n_states):
        mask = states.states == k + 1
        if not mask.any():
            continue
        zk = params.zeta[:, k]
        log_lam = (
            params.alpha[iu[0]] + params.alpha[iu[1]]
            - params.beta * (zk[iu[0]] - zk[iu[1]]) ** 2
        )
        ll = y[mask] * (log_lam + offsets[mask, None])
        ll -= np.exp(log_lam)[None, :] * np.exp(offsets[mask, None])
        ll -= gammaln(y[mask] + 1.0)
        out[mask] = ll.sum(axis=1)
    return out


def beta_terms_by_period(layer: Layer, params: ModelParams, states: StateSequence):
    """(T,) vector of summed Beta log-density terms; zeros when the layer
    carries no leaning proxy."""
    _check_shapes(layer, params, states)
    T = layer.n_periods
    out = np.zeros(T)
    if layer.leaning is None:
        return out
    for k in range(params.n_states):
        mask = states.states == k + 1
        if not mask.any():
            continue
        mean = expit(params.gamma0 + params.gamma1 * params.zeta[:, k])
        a = mean * params.phi
        b = (1.0 - mean) * params.phi
        lean = layer.leaning[mask]                           # (Tk, N)
        ll = (a - 1.0) * np.log(lean) + (b - 1.0) * np.log1p(-lean) - betaln(a, b)
        out[mask] = ll.sum(axis=1)
    return out


def transition_log_lik(params: ModelParams, states: StateSequence):
    """Sum of log transition probabilities along the path.

    The path's first period has no predecessor (the initial state carries a
    flat distribution), so the sum starts at the second period.
    """
    s = states.states
    if s.shape[0] < 2:
        return 0.0
    with np.errstate(divide="ignore"):
        log_q = np.log(params.trans)
    vals = log_q[s[:-1] - 1, s[1:] - 1]
    return float(vals.sum())


def observed_data_log_lik(layer, params, states):
    """Poisson plus Beta terms given the state path (no transition factor)."""
    return float(
        poisson_terms_by_period(layer, params, states).sum()
        + beta_terms_by_period(layer, params, states).sum()
    )


def complete_data_log_lik(layer, params, states):
    """Joint log density of weights, leaning and the state path given params."""
    return observed_data_log_lik(layer, params, states) + transition_log_lik(params, states)


def network_only_log_lik(layer, params, states):
    """Poisson terms only; the leaning and transition factors are excluded."""
    return float(poisson_terms_by_period(layer, params, states).sum())
