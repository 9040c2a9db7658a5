"""Predictive model comparison: DIC, log pointwise predictive density,
posterior predictive strength checks, and the two random-graph baselines."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from scipy.special import gammaln

from .moments import StrengthMomentSpec, dispersion_index, expected_strength, strength_variance
from .types import ChainOutput, Layer, McmcConfig, PriorSpec
from .validation import DegenerateSeriesError, ValidationError

__all__ = [
    "dic",
    "lppd",
    "lppd_from_chain",
    "ppc_strength",
    "fit_baselines",
    "selection_report",
]


def dic(loglik_trace):
    """Deviance information criterion with the variance-based penalty:
    -2 mean(trace) + 2 var(trace), sample variance with the n-1 denominator."""
    trace = np.asarray(loglik_trace, dtype=float)
    if trace.ndim != 1 or trace.shape[0] < 2:
        raise DegenerateSeriesError("DIC needs a 1-d log-likelihood trace of length >= 2")
    if not np.all(np.isfinite(trace)):
        raise ValidationError("log-likelihood trace contains non-finite values")
    return float(-2.0 * trace.mean() + 2.0 * trace.var(ddof=1))


def lppd(log_density_draws):
    """Log pointwise predictive density from per-draw per-cell log densities.

    log_density_draws : (H, ...) array whose first axis indexes posterior
        draws; all remaining axes index data cells.  For each cell the draws
        are averaged on the probability scale via log-sum-exp.
    """
    vals = np.asarray(log_density_draws, dtype=float)
    if vals.ndim < 2:
        raise ValidationError("need an (H, cells...) array of log densities")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("log densities must be finite")
    H = vals.shape[0]
    flat = vals.reshape(H, -1)
    m = flat.max(axis=0)
    cell = m + np.log(np.exp(flat - m[None, :]).mean(axis=0))
    return float(cell.sum())


def _pair_log_densities(chain: ChainOutput, layer: Layer, h):
    """(T, M) Poisson log densities of the observed weights for draw h."""
    N = layer.n_nodes
    iu = np.triu_indices(N, 1)
    y = layer.weights[:, iu[0], iu[1]]
    lgam = gammaln(y + 1.0)
    alpha = chain.alpha[h]
    K = chain.n_states
    states = chain.states[h]
    loglam_k = np.empty((K, iu[0].size))
    for k in range(K):
        zk = chain.zeta[h][:, k]
        loglam_k[k] = (alpha[iu[0]] + alpha[iu[1]]
                       - chain.config.beta * (zk[iu[0]] - zk[iu[1]]) ** 2)
    loglam = loglam_k[states - 1]
    if chain.delta is not None and layer.exposure is not None:
        log_e = np.log(layer.exposure)
        loglam = loglam + (chain.delta[h] * (log_e - log_e.mean()))[:, None]
    return y * loglam - np.exp(loglam) - lgam


def lppd_from_chain(chain: ChainOutput, layer: Layer, chunk=64):
    """lppd of the network weights under a fitted chain, streamed over draws
    with a running log-sum-exp so memory stays bounded."""
    H = chain.n_retained
    if H < 1:
        raise ValidationError("chain holds no retained draws")
    acc = None
    for start in range(0, H, chunk):
        block = np.stack([_pair_log_densities(chain, layer, h)
                          for h in range(start, min(start + chunk, H))])
        block_lse = block.max(axis=0)
        block_lse += np.log(np.exp(block - block_lse[None]).sum(axis=0))
        acc = block_lse if acc is None else np.logaddexp(acc, block_lse)
    return float((acc - math.log(H)).sum())


def _strength_spec_for_draw(alpha, sigma2, q_row, beta, d=1):
    """Moment spec for one draw, collapsing heterogeneous individual effects
    into the common pair total via the pair-averaged exp(alpha_i + alpha_j),
    which reproduces the heterogeneous first moment exactly."""
    N = alpha.shape[0]
    e = np.exp(alpha)
    total = e.sum()
    pair_mean = (total * total - (e * e).sum()) / (N * (N - 1)) if N > 1 else 1.0
    return StrengthMomentSpec(
        n_nodes=N, latent_dim=d, alpha=float(np.log(pair_mean)), beta=beta,
        sigma2=tuple(sigma2), q_row=tuple(q_row),
    )


def _draw_moments(chain: ChainOutput, h, layer: Layer, kind="switching", d=1):
    """Posterior predictive (mean, sd, dispersion) for draw h.

    Switching models mix the per-row conditional closed-form moments by the
    draw's state-path occupancy.  The homogeneous baseline is the zero-spread
    single-state special case with its own intercept convention (the draw's
    alpha IS the pair total).  The covariate baseline conditions on the
    observed coordinates: node strengths are Poisson sums there, so the
    moments follow directly from the per-node intensity totals.
    """
    if kind == "rg":
        spec = StrengthMomentSpec(n_nodes=layer.n_nodes, latent_dim=d,
                                  alpha=float(chain.alpha[h, 0]),
                                  beta=chain.config.beta, sigma2=(0.0,), q_row=(1.0,))
        m = expected_strength(spec)
        v = strength_variance(spec)
        return np.array([m, math.sqrt(v), dispersion_index(spec)])
    if kind == "rg_cov":
        iu = np.triu_indices(layer.n_nodes, 1)
        alpha = chain.alpha[h]
        d2 = (layer.leaning[:, iu[0]] - layer.leaning[:, iu[1]]) ** 2
        lam = np.exp(alpha[iu[0]] + alpha[iu[1]] - chain.config.beta * d2)
        full = np.zeros((layer.n_periods, layer.n_nodes, layer.n_nodes))
        full[:, iu[0], iu[1]] = lam
        full += np.transpose(full, (0, 2, 1))
        node_tot = full.sum(axis=2)                   # (T, N)
        mean = node_tot.mean()
        var = node_tot.var(axis=1, ddof=1).mean() + mean
        return np.array([mean, math.sqrt(var), var / mean])

    K = chain.n_states
    states = chain.states[h]
    if K == 1 or states.shape[0] < 2:
        weights = np.ones(K) / K
    else:
        weights = np.bincount(states[:-1] - 1, minlength=K).astype(float)
        weights /= weights.sum()
    vals = np.zeros(3)
    for l in range(K):
        if weights[l] == 0.0:
            continue
        spec = _strength_spec_for_draw(chain.alpha[h], chain.sigma2[h],
                                       chain.trans[h][l], chain.config.beta, d=d)
        m = expected_strength(spec)
        v = strength_variance(spec)
        vals += weights[l] * np.array([m, math.sqrt(v), dispersion_index(spec)])
    return vals


def empirical_strength_stats(layer: Layer):
    """Observed per-period strength mean / sd / dispersion, averaged over time."""
    w = np.array(layer.weights, dtype=float)
    for t in range(layer.n_periods):
        np.fill_diagonal(w[t], 0.0)
    strengths = w.sum(axis=2)
    means = strengths.mean(axis=1)
    sds = strengths.std(axis=1, ddof=1)
    disp = np.where(means > 0, sds**2 / means, np.nan)
    return {
        "mean": float(means.mean()),
        "sd": float(sds.mean()),
        "dispersion": float(np.nanmean(disp)),
    }


def ppc_strength(chain: ChainOutput, layer: Layer, kind="switching", d=1):
    """Posterior predictive check of the strength distribution.

    Returns a table with the empirical time-averaged statistics next to the
    posterior mean and central 95% interval of the model-implied closed-form
    mean, standard deviation and dispersion index.
    """
    H = chain.n_retained
    draws = np.array([_draw_moments(chain, h, layer, kind=kind, d=d) for h in range(H)])
    emp = empirical_strength_stats(layer)
    rows = []
    for j, metric in enumerate(("mean", "sd", "dispersion")):
        rows.append({
            "metric": metric,
            "empirical": emp[metric],
            "posterior_mean": float(draws[:, j].mean()),
            "q2.5": float(np.quantile(draws[:, j], 0.025)),
            "q97.5": float(np.quantile(draws[:, j], 0.975)),
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# random-graph baselines

def _fit_homogeneous(layer: Layer, priors: PriorSpec, config: McmcConfig) -> ChainOutput:
    """Poisson random graph with a single intercept: lambda = exp(alpha)."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    N, T = layer.n_nodes, layer.n_periods
    n_pairs = N * (N - 1) // 2
    iu = np.triu_indices(N, 1)
    y = layer.weights[:, iu[0], iu[1]]
    y_total = float(y.sum())
    g_const = float(gammaln(y + 1.0).sum())
    n_cells = n_pairs * T

    alpha = math.log(max(y_total / max(n_cells, 1), 0.05))
    logd, mu, cov, h = 0.0, alpha, 0.01, 0
    H = config.n_retained
    alpha_d = np.empty(H)
    ll = np.empty(H)
    accepted = 0.0
    accepted_burn = 0.0
    h_out = 0
    inv2s = 0.5 / priors.sigma_alpha2
    for it in range(1, config.n_iter + 1):
        sd = math.sqrt(math.exp(logd) * max(cov, 1e-9))
        prop = alpha + sd * rng.standard_normal()
        dlog = ((prop - alpha) * y_total
                - n_cells * (math.exp(prop) - math.exp(alpha))
                + (alpha * alpha - prop * prop) * inv2s)
        ap = math.exp(min(dlog, 0.0))
        if rng.random() < ap:
            alpha = prop
            accepted += 1
        h += 1
        gamma = h ** (-config.adapt_exponent)
        logd += gamma * (ap - config.target_accept)
        dev = alpha - mu
        mu += gamma * dev
        cov += gamma * (dev * dev - cov)
        if it == config.burn_in:
            accepted_burn = accepted
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            alpha_d[h_out] = alpha
            ll[h_out] = alpha * y_total - n_cells * math.exp(alpha) - g_const
            h_out += 1

    n_post = config.n_iter - config.burn_in
    return ChainOutput(
        alpha=alpha_d[:, None], zeta=np.zeros((H, 1, 1)), sigma2=np.zeros((H, 1)),
        gamma0=np.zeros(H), gamma1=np.zeros(H), phi=np.ones(H),
        trans=np.ones((H, 1, 1)), states=np.ones((H, T), dtype=np.int16),
        delta=None, loglik_complete=ll.copy(), loglik_obs=ll.copy(),
        loglik_network=ll, accept_rates={"alpha": (accepted - accepted_burn) / max(n_post, 1)},
        accept_rates_all={"alpha": accepted / config.n_iter},
        summary_trace=np.zeros((0, 0)), summary_names=(),
        full_trace=None, full_trace_names=(),
        config=config, priors=priors, node_names=layer.node_names,
    )


def _fit_covariate(layer: Layer, priors: PriorSpec, config: McmcConfig) -> ChainOutput:
    """Poisson random graph with individual effects and the observed leaning
    values as fixed coordinates: lambda = exp(a_i + a_j - beta d_ijt^2)."""
    if layer.leaning is None:
        raise ValidationError("the covariate baseline needs leaning data")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    N, T = layer.n_nodes, layer.n_periods
    iu = np.triu_indices(N, 1)
    y = layer.weights[:, iu[0], iu[1]]
    g_const = float(gammaln(y + 1.0).sum())
    d2 = (layer.leaning[:, iu[0]] - layer.leaning[:, iu[1]]) ** 2   # (T, M)
    beta = config.beta

    sy_pair = y.sum(axis=0)
    syd = float((y * d2).sum())
    se_pair = np.exp(-beta * d2).sum(axis=0)                         # (T,) summed
    sy_full = np.zeros((N, N))
    se_full = np.zeros((N, N))
    sy_full[iu], se_full[iu] = sy_pair, se_pair
    sy_full += sy_full.T
    se_full += se_full.T
    sy_node = sy_full.sum(axis=1)

    strength = np.maximum(sy_node / max(T, 1), 0.05)
    alpha = 0.5 * np.log(strength)
    logd = np.zeros(N)
    mu = alpha.copy()
    cov = np.full(N, 0.01)
    hh = np.zeros(N, dtype=int)
    ealpha = np.exp(alpha)
    H = config.n_retained
    alpha_d = np.empty((H, N))
    ll = np.empty(H)
    accepted = np.zeros(N)
    accepted_burn = np.zeros(N)
    inv2s = 0.5 / priors.sigma_alpha2
    h_out = 0
    for it in range(1, config.n_iter + 1):
        for i in range(N):
            sd = math.sqrt(math.exp(logd[i]) * max(cov[i], 1e-9))
            prop = alpha[i] + sd * rng.standard_normal()
            d_alpha = prop - alpha[i]
            lam_i = ealpha[i] * float(ealpha @ se_full[i])
            dlog = (d_alpha * sy_node[i] - math.expm1(d_alpha) * lam_i
                    + (alpha[i]**2 - prop**2) * inv2s)
            ap = math.exp(min(dlog, 0.0))
            if rng.random() < ap:
                alpha[i] = prop
                ealpha[i] = math.exp(prop)
                accepted[i] += 1
            hh[i] += 1
            gamma = hh[i] ** (-config.adapt_exponent)
            logd[i] += gamma * (ap - config.target_accept)
            dev = alpha[i] - mu[i]
            mu[i] += gamma * dev
            cov[i] += gamma * (dev * dev - cov[i])
        if it == config.burn_in:
            accepted_burn = accepted.copy()
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            alpha_d[h_out] = alpha
            pair_e = ealpha[iu[0]] * ealpha[iu[1]]
            ll[h_out] = (float(sy_pair @ (alpha[iu[0]] + alpha[iu[1]]))
                         - beta * syd - float(pair_e @ se_pair) - g_const)
            h_out += 1

    n_post = config.n_iter - config.burn_in
    return ChainOutput(
        alpha=alpha_d, zeta=np.zeros((H, N, 1)), sigma2=np.zeros((H, 1)),
        gamma0=np.zeros(H), gamma1=np.zeros(H), phi=np.ones(H),
        trans=np.ones((H, 1, 1)), states=np.ones((H, T), dtype=np.int16),
        delta=None, loglik_complete=ll.copy(), loglik_obs=ll.copy(),
        loglik_network=ll,
        accept_rates={"alpha": (accepted - accepted_burn) / max(n_post, 1)},
        accept_rates_all={"alpha": accepted / config.n_iter},
        summary_trace=np.zeros((0, 0)), summary_names=(),
        full_trace=None, full_trace_names=(),
        config=config, priors=priors, node_names=layer.node_names,
    )


def fit_baselines(layer: Layer, priors: PriorSpec, config: McmcConfig,
                  which=("rg", "rg_cov")):
    """Fit the homogeneous and leaning-covariate random-graph baselines."""
    out = {}
    for name in which:
        if name == "rg":
            out[name] = _fit_homogeneous(layer, priors, config)
        elif name in ("rg_cov", "rg-cov"):
            out["rg_cov"] = _fit_covariate(layer, priors, config)
        else:
            raise ValidationError(f"unknown baseline {name!r}")
    return out


def baseline_pair_log_densities(chain: ChainOutput, layer: Layer, kind, h):
    """(T, M) Poisson log densities for one retained baseline draw."""
    N = layer.n_nodes
    iu = np.triu_indices(N, 1)
    y = layer.weights[:, iu[0], iu[1]]
    lgam = gammaln(y + 1.0)
    if kind == "rg":
        loglam = np.full(y.shape, chain.alpha[h, 0])
    elif kind == "rg_cov":
        alpha = chain.alpha[h]
        d2 = (layer.leaning[:, iu[0]] - layer.leaning[:, iu[1]]) ** 2
        loglam = alpha[iu[0]] + alpha[iu[1]] - chain.config.beta * d2
    else:
        raise ValidationError(f"unknown baseline {kind!r}")
    return y * loglam - np.exp(loglam) - lgam


def lppd_baseline(chain: ChainOutput, layer: Layer, kind, chunk=64):
    H = chain.n_retained
    acc = None
    for start in range(0, H, chunk):
        block = np.stack([baseline_pair_log_densities(chain, layer, kind, h)
                          for h in range(start, min(start + chunk, H))])
        block_lse = block.max(axis=0)
        block_lse += np.log(np.exp(block - block_lse[None]).sum(axis=0))
        acc = block_lse if acc is None else np.logaddexp(acc, block_lse)
    return float((acc - math.log(H)).sum())


def selection_report(entries, layer: Layer):
    """Comparison table across fitted models.

    entries : mapping of model label -> (chain, kind) where kind is one of
        "switching" (the latent-space models) or "rg" / "rg_cov".
    Reports the mean network-only and observation log likelihoods, DIC on the
    observation trace, and the network lppd.
    """
    rows = []
    for label, (chain, kind) in entries.items():
        row = {"model": label,
               "mean_loglik_network": float(np.mean(chain.loglik_network)),
               "mean_loglik_obs": float(np.mean(chain.loglik_obs))}
        row["dic"] = (dic(chain.loglik_obs) if chain.n_retained >= 2
                      else float(-2.0 * chain.loglik_obs[0]))
        if kind == "switching":
            row["lppd"] = lppd_from_chain(chain, layer)
        else:
            row["lppd"] = lppd_baseline(chain, layer, kind)
        rows.append(row)
    return pd.DataFrame(rows)
