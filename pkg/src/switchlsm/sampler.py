"""Posterior simulation for the switching latent-space network model.

One sweep updates, in order: individual effects (adaptive random-walk MH per
node), the Beta precision (MH with a truncated-normal proposal), the leaning
link coefficients (joint adaptive MH), the optional exposure coefficient,
each latent coordinate (adaptive MH per node and regime), the latent
variances and transition rows (exact conjugate draws) and finally the state
path by forward filtering and backward sampling.  After every sweep the draw
is mapped to a canonical representative of its likelihood-equivalence class
(translation, reflection, state relabeling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, expit, gammaln, log_ndtr

from .types import ChainOutput, Layer, McmcConfig, ModelParams, PriorSpec, StateSequence
from .validation import (
    InitializationError,
    NumericalDegeneracyError,
    ValidationError,
)
from . import likelihood

__all__ = [
    "AdaptiveState",
    "adaptive_update",
    "sigma2_posterior_params",
    "sample_sigma2",
    "q_posterior_params",
    "sample_q_row",
    "truncated_normal_logpdf",
    "emission_log_densities",
    "forward_filter",
    "backward_sample_paths",
    "ffbs_states",
    "median_pair_distances",
    "identify_draw",
    "GibbsState",
    "run_chain",
]

COV_JITTER = 1e-9
PHI_PROPOSAL_FRACTION = 0.1
# the link mean is kept a hair inside the unit interval so saturated links
# yield huge negative (finite) densities instead of NaN ratios
MEAN_CLIP = 1e-15


# ---------------------------------------------------------------------------
# adaptive random-walk machinery

@dataclass
class AdaptiveState:
    """Per-block proposal state: global scale, running mean and covariance."""

    log_delta: float = 0.0
    mu: np.ndarray = None
    cov: np.ndarray = None
    h: int = 0


def adaptive_update(state: AdaptiveState, draw, accept_prob,
                    target_accept=0.25, adapt_exponent=0.6) -> AdaptiveState:
    """One step of the global adaptive-scaling recursion.

    With step size gamma_h = h^(-psi): the log proposal scale moves toward the
    target acceptance rate, and the running mean/covariance track the chain.
    Both recursions use the pre-update mean, exactly as specified.
    """
    h = state.h + 1
    gamma = h ** (-adapt_exponent)
    draw = np.atleast_1d(np.asarray(draw, dtype=float))
    mu_old = np.atleast_1d(np.asarray(state.mu, dtype=float))
    cov_old = np.atleast_2d(np.asarray(state.cov, dtype=float))
    dev = draw - mu_old
    return AdaptiveState(
        log_delta=state.log_delta + gamma * (float(accept_prob) - target_accept),
        mu=mu_old + gamma * dev,
        cov=cov_old + gamma * (np.outer(dev, dev) - cov_old),
        h=h,
    )


# ---------------------------------------------------------------------------
# exact conjugate draws

def sigma2_posterior_params(zeta_column, prior: PriorSpec):
    """Inverse-gamma posterior parameters (a + N/2, b + sum(zeta^2)/2)."""
    z = np.asarray(zeta_column, dtype=float)
    return prior.a_sigma + z.shape[0] / 2.0, prior.b_sigma + 0.5 * float(z @ z)


def sample_sigma2(zeta_column, prior: PriorSpec, rng):
    a, b = sigma2_posterior_params(zeta_column, prior)
    return b / rng.gamma(a)


def q_posterior_params(counts_row, omega):
    """Dirichlet posterior parameters: transition counts plus prior weights."""
    counts = np.asarray(counts_row, dtype=float)
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValidationError("transition counts must be nonnegative integers")
    return counts + np.asarray(omega, dtype=float)


def sample_q_row(counts_row, omega, rng):
    return rng.dirichlet(q_posterior_params(counts_row, omega))


# ---------------------------------------------------------------------------
# truncated-normal proposal for the Beta precision

def truncated_normal_logpdf(y, loc, scale, lower=0.0):
    """Log density of a normal truncated to (lower, inf)."""
    if y <= lower:
        return -np.inf
    z = (y - loc) / scale
    log_norm = -0.5 * z * z - math.log(scale) - 0.5 * math.log(2.0 * math.pi)
    return log_norm - float(log_ndtr((loc - lower) / scale))


def _draw_truncated_normal(loc, scale, rng, lower=0.0):
    while True:
        draw = loc + scale * rng.standard_normal()
        if draw > lower:
            return draw


def phi_proposal_correction(phi_cur, phi_prop, fraction=PHI_PROPOSAL_FRACTION):
    """log q(cur | prop) - log q(prop | cur) for the scale-proportional
    truncated-normal proposal; the scale asymmetry must enter the MH ratio."""
    return (
        truncated_normal_logpdf(phi_cur, phi_prop, fraction * phi_prop)
        - truncated_normal_logpdf(phi_prop, phi_cur, fraction * phi_cur)
    )


# ---------------------------------------------------------------------------
# forward filtering, backward sampling

def emission_log_densities(layer: Layer, params: ModelParams):
    """(T, K) matrix of per-period log emission densities under each regime,
    summing the Poisson pair terms and (when present) the Beta leaning terms."""
    T = layer.n_periods
    K = params.n_states
    out = np.empty((T, K))
    for k in range(K):
        const_states = StateSequence(states=np.full(T, k + 1, dtype=int), n_states=K)
        out[:, k] = likelihood.poisson_terms_by_period(layer, params, const_states)
        out[:, k] += likelihood.beta_terms_by_period(layer, params, const_states)
    return out


def forward_filter(log_emissions, trans):
    """Log-space forward filter with a flat initial state distribution.

    Returns the (T, K) matrix of normalized filtering log probabilities.
    """
    log_emissions = np.asarray(log_emissions, dtype=float)
    T, K = log_emissions.shape
    with np.errstate(divide="ignore"):
        log_q = np.log(np.asarray(trans, dtype=float))
    log_filt = np.empty((T, K))
    log_pred = np.full(K, -math.log(K))
    for t in range(T):
        row = log_pred + log_emissions[t]
        m = row.max()
        if not np.isfinite(m):
            raise NumericalDegeneracyError(
                f"all regimes have zero emission probability at period {t + 1}"
            )
        norm = m + math.log(np.exp(row - m).sum())
        log_filt[t] = row - norm
        if t < T - 1:
            stacked = log_filt[t][:, None] + log_q
            m2 = stacked.max(axis=0)
            log_pred = m2 + np.log(np.exp(stacked - m2[None, :]).sum(axis=0))
    return log_filt


def _categorical_rows(prob_rows, rng):
    cum = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    idx = (u[:, None] > cum).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


def backward_sample_paths(log_filter, trans, n_paths, rng):
    """Sample state paths (1-based, shape (n_paths, T)) given the forward
    filter: the last state from the final filter, then each earlier state in
    proportion to filter times the transition into the sampled successor."""
    log_filter = np.asarray(log_filter, dtype=float)
    T, K = log_filter.shape
    with np.errstate(divide="ignore"):
        log_q = np.log(np.asarray(trans, dtype=float))
    paths = np.empty((n_paths, T), dtype=int)
    p_last = np.exp(log_filter[-1] - log_filter[-1].max())
    p_last /= p_last.sum()
    paths[:, -1] = _categorical_rows(np.broadcast_to(p_last, (n_paths, K)), rng)
    for t in range(T - 2, -1, -1):
        lp = log_filter[t][None, :] + log_q[:, paths[:, t + 1]].T
        lp -= lp.max(axis=1, keepdims=True)
        p = np.exp(lp)
        p /= p.sum(axis=1, keepdims=True)
        paths[:, t] = _categorical_rows(p, rng)
    return paths + 1


def ffbs_states(layer: Layer, params: ModelParams, rng, n_paths=1):
    """Exact posterior draw of the state path given parameters and data."""
    K = params.n_states
    T = layer.n_periods
    if K == 1:
        paths = np.ones((n_paths, T), dtype=int)
    else:
        log_filt = forward_filter(emission_log_densities(layer, params), params.trans)
        paths = backward_sample_paths(log_filt, params.trans, n_paths, rng)
    if n_paths == 1:
        return StateSequence(states=paths[0], n_states=K)
    return [StateSequence(states=p, n_states=K) for p in paths]


# ---------------------------------------------------------------------------
# identification post-processing

def median_pair_distances(zeta):
    """Per-regime median of the pairwise latent distances |z_i - z_j|."""
    zeta = np.asarray(zeta, dtype=float)
    N, K = zeta.shape
    if N < 2:
        return np.zeros(K)
    iu = np.triu_indices(N, 1)
    return np.median(np.abs(zeta[iu[0], :] - zeta[iu[1], :]), axis=0)


def _identify_arrays(zeta, gamma0, gamma1, sigma2, trans, states,
                     anchor_index, anchor_sign):
    """Return the canonical representative of the draw plus the applied
    group element (shift c, reflection flag, relabeling permutation).

    Every action is exactly likelihood-preserving: a common translation of all
    coordinates is absorbed by the leaning intercept, a joint reflection by
    the sign of the leaning slope, and relabeling permutes variances, the
    transition matrix (rows and columns together) and the state path.
    """
    zeta = np.array(zeta, dtype=float)
    sigma2 = np.array(sigma2, dtype=float)
    trans = np.array(trans, dtype=float)
    states = np.array(states, dtype=int)
    K = zeta.shape[1]

    shift = float(zeta.mean()) if zeta.size else 0.0
    zeta -= shift
    gamma0 = float(gamma0) + float(gamma1) * shift

    anchor_val = float(zeta[anchor_index].mean()) if zeta.size else 0.0
    flip = (anchor_sign == "negative" and anchor_val > 0.0) or (
        anchor_sign == "positive" and anchor_val < 0.0
    )
    if flip:
        zeta = -zeta
        gamma1 = -float(gamma1)

    dmed = median_pair_distances(zeta)
    perm = np.argsort(dmed, kind="stable")
    if not np.array_equal(perm, np.arange(K)):
        inv = np.empty(K, dtype=int)
        inv[perm] = np.arange(K)
        zeta = zeta[:, perm]
        sigma2 = sigma2[perm]
        trans = trans[np.ix_(perm, perm)]
        states = inv[states - 1] + 1
    else:
        perm = np.arange(K)
    return zeta, gamma0, float(gamma1), sigma2, trans, states, shift, flip, perm


def identify_draw(params: ModelParams, states: StateSequence,
                  anchor_index, anchor_sign="negative"):
    """Map a draw to its identified representative.

    Applies, in order: translation of all coordinates to zero pooled mean
    (compensated through gamma0), a joint reflection when the anchor node's
    mean coordinate has the wrong sign (compensated through gamma1), and
    regime relabeling in increasing order of median pairwise distance.  The
    complete-data log likelihood is invariant under all three actions; ties
    in the distance ordering keep the original label order.
    """
    zeta, g0, g1, sigma2, trans, s, _, _, _ = _identify_arrays(
        params.zeta, params.gamma0, params.gamma1, params.sigma2, params.trans,
        states.states, anchor_index, anchor_sign,
    )
    new_params = params.replace(zeta=zeta, gamma0=g0, gamma1=g1,
                                sigma2=sigma2, trans=trans)
    return new_params, StateSequence(states=s, n_states=states.n_states)


# ---------------------------------------------------------------------------
# the Gibbs chain

class GibbsState:
    """Mutable chain state with one method per Gibbs block.

    Heavy lifting happens on sufficient statistics that collapse the time
    dimension per regime, so each Metropolis step costs O(N K) regardless of
    the panel length.  A (K, N, N) cache of the pairwise intensities is kept
    in sync incrementally and rebuilt once per sweep.
    """

    def __init__(self, layer: Layer, priors: PriorSpec, config: McmcConfig,
                 rng, init_params: ModelParams | None = None,
                 init_states: StateSequence | None = None):
        self.layer = layer
        self.priors = priors
        self.config = config
        self.rng = rng
        self.N = layer.n_nodes
        self.T = layer.n_periods
        self.K = config.n_states
        self.beta = config.beta
        self.omega = priors.omega_for(self.K)

        self.use_exposure = bool(config.use_exposure)
        if self.use_exposure and layer.exposure is None:
            raise ValidationError("config requests exposure control but the layer has none")

        self._bind_data(layer)
        self._init_params(init_params, init_states)
        self._init_adaptive()
        self.refresh_intensities()
        self.refresh_suffstats()

        ll = self.loglik_complete()
        if not np.isfinite(ll):
            raise InitializationError(
                "non-finite log likelihood at the initial state",
                payload={"loglik": ll, "alpha": self.alpha.copy(),
                         "phi": self.phi, "sigma2": self.sigma2.copy()},
            )

    # -- data caches ------------------------------------------------------
    def _bind_data(self, layer: Layer):
        N, T = self.N, self.T
        iu = np.triu_indices(N, 1)
        self.pair_i, self.pair_j = iu
        w = np.array(layer.weights, dtype=float)
        for t in range(T):
            np.fill_diagonal(w[t], 0.0)
        self.Y_triu = w[:, iu[0], iu[1]]
        self.Y_full_sum = w.sum(axis=0)
        self.SY_node = self.Y_full_sum.sum(axis=1)
        self.gammaln_t = gammaln(self.Y_triu + 1.0).sum(axis=1) if iu[0].size else np.zeros(T)
        self.G_const = float(self.gammaln_t.sum())
        if layer.leaning is not None:
            self.logL = np.log(layer.leaning)
            self.log1mL = np.log1p(-layer.leaning)
        else:
            self.logL = None
            self.log1mL = None
        if self.use_exposure:
            log_e = np.log(layer.exposure)
            self.expo = log_e - log_e.mean()
            self.SyE = float(self.expo @ self.Y_triu.sum(axis=1))
        else:
            self.expo = None
            self.SyE = 0.0

    def replace_data(self, layer: Layer):
        """Swap in new observations, keeping parameters and adaptation."""
        if layer.n_nodes != self.N or layer.n_periods != self.T:
            raise ValidationError("replacement data must match the layer's shape")
        self.layer = layer
        self._bind_data(layer)
        self.refresh_suffstats()

    # -- initialization ---------------------------------------------------
    def _init_params(self, init_params, init_states):
        N, K, T = self.N, self.K, self.T
        if init_params is not None:
            self.alpha = np.array(init_params.alpha, dtype=float)
            self.zeta = np.array(init_params.zeta, dtype=float)
            self.sigma2 = np.array(init_params.sigma2, dtype=float)
            self.gamma0 = float(init_params.gamma0)
            self.gamma1 = float(init_params.gamma1)
            self.phi = float(init_params.phi)
            self.q = np.array(init_params.trans, dtype=float)
            self.delta = float(init_params.delta or 0.0)
        else:
            mean_strength = np.maximum(self.SY_node / max(T, 1), 0.05)
            self.alpha = 0.5 * np.log(mean_strength)
            self.zeta = self.rng.normal(0.0, 0.1, size=(N, K))
            self.sigma2 = np.ones(K)
            self.gamma0 = 0.0
            self.gamma1 = 0.0
            self.phi = 10.0
            self.q = np.full((K, K), 1.0 / K)
            self.delta = 0.0
        if init_states is not None:
            self.states = np.array(init_states.states, dtype=int)
        else:
            self.states = self.rng.integers(1, K + 1, size=T)
        if self.config.fix_gamma1:
            self.gamma1 = 0.0

    def _init_adaptive(self):
        N, K = self.N, self.K
        self.ad_alpha = {"logd": np.zeros(N), "mu": self.alpha.copy(),
                         "cov": np.full(N, 0.01), "h": np.zeros(N, dtype=int)}
        self.ad_zeta = {"logd": np.zeros((N, K)), "mu": self.zeta.copy(),
                        "cov": np.full((N, K), 0.01), "h": np.zeros((N, K), dtype=int)}
        gdim = 1 if self.config.fix_gamma1 else 2
        self.ad_gamma = AdaptiveState(log_delta=0.0,
                                      mu=np.array([self.gamma0, self.gamma1])[:gdim],
                                      cov=0.01 * np.eye(gdim), h=0)
        self.ad_delta = AdaptiveState(log_delta=0.0, mu=np.array([self.delta]),
                                      cov=0.01 * np.eye(1), h=0)
        self.accepted = {"alpha": np.zeros(N), "zeta": np.zeros((N, K)),
                         "gamma": 0.0, "phi": 0.0, "delta": 0.0}
        self.attempted = {"alpha": 0, "zeta": 0, "gamma": 0, "phi": 0, "delta": 0}

    # -- caches -----------------------------------------------------------
    def refresh_intensities(self):
        """Rebuild the (K, N, N) pairwise intensity cache from scratch."""
        N, K = self.N, self.K
        lam = np.empty((K, N, N))
        pair_sum = self.alpha[:, None] + self.alpha[None, :]
        for k in range(K):
            d2 = (self.zeta[:, k][:, None] - self.zeta[:, k][None, :]) ** 2
            lam[k] = np.exp(pair_sum - self.beta * d2)
            np.fill_diagonal(lam[k], 0.0)
        self.lam = lam

    def refresh_suffstats(self):
        K, T, N = self.K, self.T, self.N
        xi = np.zeros((K, T))
        xi[self.states - 1, np.arange(T)] = 1.0
        self.n_k = xi.sum(axis=1)
        self.Sy_triu = xi @ self.Y_triu
        self.Sy_full = np.zeros((K, N, N))
        for k in range(K):
            self.Sy_full[k][self.pair_i, self.pair_j] = self.Sy_triu[k]
            self.Sy_full[k][self.pair_j, self.pair_i] = self.Sy_triu[k]
        if self.logL is not None:
            self.SlogL = xi @ self.logL
            self.Slog1mL = xi @ self.log1mL
        else:
            self.SlogL = None
            self.Slog1mL = None
        pair_codes = (self.states[:-1] - 1) * K + (self.states[1:] - 1)
        self.trans_counts = np.bincount(pair_codes, minlength=K * K).reshape(K, K).astype(float)
        self._refresh_exposure_weights()

    def _refresh_exposure_weights(self):
        if self.use_exposure:
            scaled = np.exp(self.delta * self.expo)
            self.n_eff = np.array([scaled[self.states == k + 1].sum() for k in range(self.K)])
        else:
            self.n_eff = self.n_k

    # -- likelihood pieces --------------------------------------------------
    def _pair_log_intensity(self, k):
        zk = self.zeta[:, k]
        return (self.alpha[self.pair_i] + self.alpha[self.pair_j]
                - self.beta * (zk[self.pair_i] - zk[self.pair_j]) ** 2)

    def _beta_shapes(self, gamma0=None, gamma1=None, phi=None):
        g0 = self.gamma0 if gamma0 is None else gamma0
        g1 = self.gamma1 if gamma1 is None else gamma1
        ph = self.phi if phi is None else phi
        mean = np.clip(expit(g0 + g1 * self.zeta), MEAN_CLIP, 1.0 - MEAN_CLIP)
        a = mean * ph
        return a, ph - a

    def loglik_network(self):
        total = float(self.delta * self.SyE) - self.G_const
        for k in range(self.K):
            loglam = self._pair_log_intensity(k)
            total += float(self.Sy_triu[k] @ loglam)
            total -= float(self.n_eff[k] * np.exp(loglam).sum())
        return total

    def _loglik_beta(self):
        if self.logL is None:
            return 0.0
        a, b = self._beta_shapes()
        with np.errstate(invalid="ignore"):
            total = float(((a - 1.0).T * self.SlogL).sum()
                          + ((b - 1.0).T * self.Slog1mL).sum())
            total -= float(self.n_k @ betaln(a, b).sum(axis=0))
        return total

    def _loglik_trans(self):
        if self.K == 1:
            return 0.0
        with np.errstate(divide="ignore"):
            log_q = np.log(self.q)
        vals = np.where(self.trans_counts > 0, self.trans_counts * log_q, 0.0)
        return float(vals.sum())

    def loglik_obs(self):
        return self.loglik_network() + self._loglik_beta()

    def loglik_complete(self):
        return self.loglik_obs() + self._loglik_trans()

    # -- Gibbs blocks -------------------------------------------------------
    def _scalar_adapt(self, store, idx, value, accept_prob):
        h = store["h"][idx] + 1
        gamma = h ** (-self.config.adapt_exponent)
        store["h"][idx] = h
        store["logd"][idx] += gamma * (accept_prob - self.config.target_accept)
        dev = value - store["mu"][idx]
        store["mu"][idx] += gamma * dev
        store["cov"][idx] += gamma * (dev * dev - store["cov"][idx])

    def sample_alpha_block(self):
        """Adaptive random-walk MH update of every individual effect."""
        rng = self.rng
        inv2s = 0.5 / self.priors.sigma_alpha2
        store = self.ad_alpha
        self.attempted["alpha"] += 1
        for i in range(self.N):
            sd = math.sqrt(math.exp(store["logd"][i]) * max(store["cov"][i], COV_JITTER))
            cur = self.alpha[i]
            prop = cur + sd * rng.standard_normal()
            d_alpha = prop - cur
            lam_i = float(self.n_eff @ self.lam[:, i, :].sum(axis=1))
            dlog = (d_alpha * self.SY_node[i]
                    - math.expm1(d_alpha) * lam_i
                    + (cur * cur - prop * prop) * inv2s)
            accept_prob = math.exp(min(dlog, 0.0))
            if rng.random() < accept_prob:
                self.alpha[i] = prop
                scale = math.exp(d_alpha)
                self.lam[:, i, :] *= scale
                self.lam[:, :, i] *= scale
                self.accepted["alpha"][i] += 1
            self._scalar_adapt(store, i, self.alpha[i], accept_prob)

    def sample_phi(self):
        """MH update of the Beta precision with a truncated-normal proposal."""
        rng = self.rng
        self.attempted["phi"] += 1
        cur = self.phi
        prop = _draw_truncated_normal(cur, PHI_PROPOSAL_FRACTION * cur, rng)
        dlog = ((self.priors.a_phi - 1.0) * math.log(prop / cur)
                - self.priors.b_phi * (prop - cur))
        if self.logL is not None:
            a_c, b_c = self._beta_shapes()
            a_p, b_p = self._beta_shapes(phi=prop)
            dlog += float(((a_p - a_c).T * self.SlogL).sum()
                          + ((b_p - b_c).T * self.Slog1mL).sum())
            dlog -= float(self.n_k @ (betaln(a_p, b_p) - betaln(a_c, b_c)).sum(axis=0))
        dlog += phi_proposal_correction(cur, prop)
        if rng.random() < math.exp(min(dlog, 0.0)):
            self.phi = prop
            self.accepted["phi"] += 1

    def sample_gamma_pair(self):
        """Joint adaptive random-walk MH update of the leaning link
        coefficients (intercept only when the slope is pinned to zero)."""
        rng = self.rng
        self.attempted["gamma"] += 1
        st = self.ad_gamma
        dim = st.mu.shape[0]
        cov = st.cov + COV_JITTER * np.eye(dim)
        chol = np.linalg.cholesky(math.exp(st.log_delta) * cov)
        step = chol @ rng.standard_normal(dim)
        g0_p = self.gamma0 + step[0]
        g1_p = self.gamma1 + (step[1] if dim == 2 else 0.0)
        dlog = (self.gamma0**2 - g0_p**2) * 0.5 / self.priors.b_gamma0
        if dim == 2:
            dlog += (self.gamma1**2 - g1_p**2) * 0.5 / self.priors.b_gamma1
        if self.logL is not None:
            a_c, b_c = self._beta_shapes()
            a_p, b_p = self._beta_shapes(gamma0=g0_p, gamma1=g1_p)
            dlog += float(((a_p - a_c).T * self.SlogL).sum()
                          + ((b_p - b_c).T * self.Slog1mL).sum())
            dlog -= float(self.n_k @ (betaln(a_p, b_p) - betaln(a_c, b_c)).sum(axis=0))
        accept_prob = math.exp(min(dlog, 0.0))
        if rng.random() < accept_prob:
            self.gamma0 = g0_p
            self.gamma1 = g1_p
            self.accepted["gamma"] += 1
        draw = np.array([self.gamma0, self.gamma1])[:dim]
        self.ad_gamma = adaptive_update(st, draw, accept_prob,
                                        self.config.target_accept,
                                        self.config.adapt_exponent)

    def sample_delta(self):
        """Adaptive scalar MH update of the exposure coefficient."""
        if not self.use_exposure:
            return
        rng = self.rng
        self.attempted["delta"] += 1
        st = self.ad_delta
        sd = math.sqrt(math.exp(st.log_delta) * max(float(st.cov[0, 0]), COV_JITTER))
        cur = self.delta
        prop = cur + sd * rng.standard_normal()
        lam_tot = np.array([self.lam[k][self.pair_i, self.pair_j].sum() for k in range(self.K)])
        scaled_prop = np.exp(prop * self.expo)
        w_prop = np.array([scaled_prop[self.states == k + 1].sum() for k in range(self.K)])
        dlog = ((prop - cur) * self.SyE
                - float(lam_tot @ (w_prop - self.n_eff))
                + (cur * cur - prop * prop) * 0.5 / self.priors.sigma_delta2)
        accept_prob = math.exp(min(dlog, 0.0))
        if rng.random() < accept_prob:
            self.delta = prop
            self.n_eff = w_prop
            self.accepted["delta"] += 1
        self.ad_delta = adaptive_update(st, np.array([self.delta]), accept_prob,
                                        self.config.target_accept,
                                        self.config.adapt_exponent)

    def sample_zeta_block(self):
        """Adaptive random-walk MH update of every latent coordinate."""
        rng = self.rng
        store = self.ad_zeta
        beta = self.beta
        self.attempted["zeta"] += 1
        have_lean = self.logL is not None
        for k in range(self.K):
            zcol = self.zeta[:, k]
            inv2s = 0.5 / self.sigma2[k]
            n_eff_k = self.n_eff[k]
            n_k = self.n_k[k]
            for i in range(self.N):
                sd = math.sqrt(math.exp(store["logd"][i, k])
                               * max(store["cov"][i, k], COV_JITTER))
                cur = zcol[i]
                prop = cur + sd * rng.standard_normal()
                d2_cur = (cur - zcol) ** 2
                d2_prop = (prop - zcol) ** 2
                sy_row = self.Sy_full[k, i, :]
                dlog = -beta * float(sy_row @ (d2_prop - d2_cur))
                new_row = np.exp(self.alpha[i] + self.alpha - beta * d2_prop)
                new_row[i] = 0.0
                dlog -= n_eff_k * float(new_row.sum() - self.lam[k, i, :].sum())
                dlog += (cur * cur - prop * prop) * inv2s
                if have_lean and n_k > 0:
                    m_c = _clip_mean(expit(self.gamma0 + self.gamma1 * cur))
                    m_p = _clip_mean(expit(self.gamma0 + self.gamma1 * prop))
                    a_c, b_c = m_c * self.phi, (1.0 - m_c) * self.phi
                    a_p, b_p = m_p * self.phi, (1.0 - m_p) * self.phi
                    dlog += ((a_p - a_c) * self.SlogL[k, i]
                             + (b_p - b_c) * self.Slog1mL[k, i]
                             - n_k * (_betaln_scalar(a_p, b_p) - _betaln_scalar(a_c, b_c)))
                accept_prob = math.exp(min(dlog, 0.0))
                if rng.random() < accept_prob:
                    zcol[i] = prop
                    self.lam[k, i, :] = new_row
                    self.lam[k, :, i] = new_row
                    self.accepted["zeta"][i, k] += 1
                self._scalar_adapt(store, (i, k), zcol[i], accept_prob)

    def sample_column_flips(self):
        """Mode-jumping MH move: propose negating one regime's whole latent
        column.  The proposal is a deterministic involution, the pairwise
        distances (hence the Poisson terms) and the zero-mean prior are
        flip-invariant, so only the leaning terms enter the ratio.  Without a
        move like this, single-coordinate updates cannot cross the reflection
        barrier of an entire regime.
        """
        if self.logL is None or self.gamma1 == 0.0:
            return
        for k in range(self.K):
            if self.n_k[k] == 0:
                continue
            zcol = self.zeta[:, k]
            m_c = np.clip(expit(self.gamma0 + self.gamma1 * zcol), MEAN_CLIP, 1.0 - MEAN_CLIP)
            m_f = np.clip(expit(self.gamma0 - self.gamma1 * zcol), MEAN_CLIP, 1.0 - MEAN_CLIP)
            a_c, b_c = m_c * self.phi, (1.0 - m_c) * self.phi
            a_f, b_f = m_f * self.phi, (1.0 - m_f) * self.phi
            dlog = float((a_f - a_c) @ self.SlogL[k] + (b_f - b_c) @ self.Slog1mL[k])
            dlog -= self.n_k[k] * float((betaln(a_f, b_f) - betaln(a_c, b_c)).sum())
            if self.rng.random() < math.exp(min(dlog, 0.0)):
                self.zeta[:, k] = -zcol
                self.ad_zeta["mu"][:, k] *= -1.0

    def sample_sigma2_all(self):
        for k in range(self.K):
            self.sigma2[k] = sample_sigma2(self.zeta[:, k], self.priors, self.rng)

    def sample_q_rows(self):
        if self.K == 1:
            self.q = np.ones((1, 1))
            return
        for l in range(self.K):
            self.q[l] = sample_q_row(self.trans_counts[l], self.omega, self.rng)

    def _emission_matrix(self):
        K = self.K
        loglam = np.stack([self._pair_log_intensity(k) for k in range(K)])
        lam_tot = np.exp(loglam).sum(axis=1)
        emis = self.Y_triu @ loglam.T - self.gammaln_t[:, None]
        if self.use_exposure:
            emis += (self.delta * self.expo * self.Y_triu.sum(axis=1))[:, None]
            emis -= np.exp(self.delta * self.expo)[:, None] * lam_tot[None, :]
        else:
            emis -= lam_tot[None, :]
        if self.logL is not None:
            a, b = self._beta_shapes()
            emis += self.logL @ (a - 1.0) + self.log1mL @ (b - 1.0) - betaln(a, b).sum(axis=0)[None, :]
        return emis

    def sample_states(self):
        """Forward-filter backward-sample the state path, then refresh the
        regime-conditional sufficient statistics."""
        if self.K > 1:
            log_filt = forward_filter(self._emission_matrix(), self.q)
            self.states = backward_sample_paths(log_filt, self.q, 1, self.rng)[0]
        self.refresh_suffstats()

    def sweep(self):
        """One full Gibbs scan over all blocks, in the fixed update order."""
        self.sample_alpha_block()
        self.sample_phi()
        self.sample_gamma_pair()
        self.sample_delta()
        self.sample_zeta_block()
        self.sample_column_flips()
        self.sample_sigma2_all()
        self.sample_q_rows()
        self.sample_states()
        self.refresh_intensities()

    # -- identification -----------------------------------------------------
    def identify(self):
        anchor = self.config.anchor_index
        zeta, g0, g1, sigma2, q, states, shift, flip, perm = _identify_arrays(
            self.zeta, self.gamma0, self.gamma1, self.sigma2, self.q,
            self.states, anchor, self.config.anchor_sign,
        )
        self.zeta = zeta
        self.gamma0 = g0
        self.gamma1 = g1
        self.sigma2 = sigma2
        self.q = q
        self.states = states

        # transport the adaptive proposal state through the group action so
        # the running means keep tracking the transformed chain
        self.ad_zeta["mu"] -= shift
        if flip:
            self.ad_zeta["mu"] *= -1.0
        if self.ad_gamma.mu.shape[0] == 2:
            a_map = np.array([[1.0, shift], [0.0, 1.0]])
            if flip:
                a_map = np.diag([1.0, -1.0]) @ a_map
            self.ad_gamma = AdaptiveState(
                log_delta=self.ad_gamma.log_delta,
                mu=a_map @ self.ad_gamma.mu,
                cov=a_map @ self.ad_gamma.cov @ a_map.T,
                h=self.ad_gamma.h,
            )
        if not np.array_equal(perm, np.arange(self.K)):
            for key in ("logd", "mu", "cov", "h"):
                self.ad_zeta[key] = self.ad_zeta[key][:, perm]
            self.accepted["zeta"] = self.accepted["zeta"][:, perm]
            self.n_k = self.n_k[perm]
            self.n_eff = self.n_eff[perm]
            self.Sy_triu = self.Sy_triu[perm]
            self.Sy_full = self.Sy_full[perm]
            if self.SlogL is not None:
                self.SlogL = self.SlogL[perm]
                self.Slog1mL = self.Slog1mL[perm]
            self.trans_counts = self.trans_counts[np.ix_(perm, perm)]
            self.lam = self.lam[perm]

    # -- snapshots ----------------------------------------------------------
    def params_snapshot(self) -> ModelParams:
        return ModelParams(
            alpha=self.alpha.copy(), zeta=self.zeta.copy(), sigma2=self.sigma2.copy(),
            gamma0=self.gamma0, gamma1=self.gamma1, phi=self.phi, trans=self.q.copy(),
            beta=self.beta, delta=self.delta if self.use_exposure else None,
        )

    def states_snapshot(self) -> StateSequence:
        return StateSequence(states=self.states.copy(), n_states=self.K)


def _betaln_scalar(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _clip_mean(m):
    return min(max(m, MEAN_CLIP), 1.0 - MEAN_CLIP)


def _trace_names(N, K, use_exposure):
    names = [f"alpha_{i + 1}" for i in range(N)]
    names += [f"zeta_{i + 1}_s{k + 1}" for k in range(K) for i in range(N)]
    names += [f"sigma2_s{k + 1}" for k in range(K)]
    names += ["gamma0", "gamma1", "phi"]
    names += [f"q_{l + 1}{k + 1}" for l in range(K) for k in range(K)]
    if use_exposure:
        names.append("delta")
    return tuple(names)


def run_chain(layer: Layer, priors: PriorSpec, config: McmcConfig,
              init_params=None, init_states=None, identify=True) -> ChainOutput:
    """Run the full posterior sampler and return the retained draws.

    Draws are identified before retention, so every stored draw satisfies the
    centering, anchor-sign and regime-ordering constraints.  With a fixed
    seed and fixed inputs the output is bit-reproducible.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    state = GibbsState(layer, priors, config, rng,
                       init_params=init_params, init_states=init_states)
    N, K, T = state.N, state.K, state.T
    H = config.n_retained
    n_sum = 4 + K + 1
    summary_names = (("alpha_mean", "gamma0", "gamma1", "phi")
                     + tuple(f"zeta_mean_s{k + 1}" for k in range(K))
                     + ("loglik_obs",))
    summary = np.empty((config.n_iter, n_sum))
    full_names = _trace_names(N, K, state.use_exposure)
    full = np.empty((config.n_iter, len(full_names))) if config.keep_full_trace else None

    alpha_d = np.empty((H, N))
    zeta_d = np.empty((H, N, K))
    sigma2_d = np.empty((H, K))
    gamma0_d = np.empty(H)
    gamma1_d = np.empty(H)
    phi_d = np.empty(H)
    trans_d = np.empty((H, K, K))
    states_d = np.empty((H, T), dtype=np.int16)
    delta_d = np.empty(H) if state.use_exposure else None
    ll_complete = np.empty(H)
    ll_obs = np.empty(H)
    ll_net = np.empty(H)

    accepted_at_burn = None
    attempted_at_burn = None
    h_out = 0
    for it in range(1, config.n_iter + 1):
        state.sweep()
        if identify:
            state.identify()
        if it == config.burn_in:
            accepted_at_burn = {k: np.copy(v) for k, v in state.accepted.items()}
            attempted_at_burn = dict(state.attempted)

        obs_ll = state.loglik_obs()
        row = [state.alpha.mean(), state.gamma0, state.gamma1, state.phi]
        row += [state.zeta[:, k].mean() for k in range(K)]
        row.append(obs_ll)
        summary[it - 1] = row
        if full is not None:
            parts = [state.alpha, state.zeta.ravel(order="F"), state.sigma2,
                     [state.gamma0, state.gamma1, state.phi], state.q.ravel()]
            if state.use_exposure:
                parts.append([state.delta])
            full[it - 1] = np.concatenate([np.atleast_1d(np.asarray(p, dtype=float))
                                           for p in parts])

        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            alpha_d[h_out] = state.alpha
            zeta_d[h_out] = state.zeta
            sigma2_d[h_out] = state.sigma2
            gamma0_d[h_out] = state.gamma0
            gamma1_d[h_out] = state.gamma1
            phi_d[h_out] = state.phi
            trans_d[h_out] = state.q
            states_d[h_out] = state.states
            if delta_d is not None:
                delta_d[h_out] = state.delta
            ll_obs[h_out] = obs_ll
            ll_net[h_out] = state.loglik_network()
            ll_complete[h_out] = obs_ll + state._loglik_trans()
            h_out += 1

    if accepted_at_burn is None:
        accepted_at_burn = {k: np.zeros_like(np.asarray(v, dtype=float))
                            for k, v in state.accepted.items()}
        attempted_at_burn = {k: 0 for k in state.attempted}

    def _rates(acc, att):
        out = {}
        for key, val in acc.items():
            n = att[key]
            out[key] = np.asarray(val, dtype=float) / n if n > 0 else np.asarray(val) * np.nan
            if np.ndim(out[key]) == 0:
                out[key] = float(out[key])
        return out

    post_acc = {k: np.asarray(state.accepted[k], dtype=float) - np.asarray(accepted_at_burn[k], dtype=float)
                for k in state.accepted}
    post_att = {k: state.attempted[k] - attempted_at_burn[k] for k in state.attempted}
    accept_rates = _rates(post_acc, post_att)
    accept_rates_all = _rates(state.accepted, state.attempted)

    return ChainOutput(
        alpha=alpha_d, zeta=zeta_d, sigma2=sigma2_d, gamma0=gamma0_d,
        gamma1=gamma1_d, phi=phi_d, trans=trans_d, states=states_d,
        delta=delta_d, loglik_complete=ll_complete, loglik_obs=ll_obs,
        loglik_network=ll_net, accept_rates=accept_rates,
        accept_rates_all=accept_rates_all, summary_trace=summary,
        summary_names=summary_names, full_trace=full, full_trace_names=full_names,
        config=config, priors=priors, node_names=layer.node_names,
        adapt_state={
            "alpha_log_delta": state.ad_alpha["logd"].copy(),
            "zeta_log_delta": state.ad_zeta["logd"].copy(),
            "gamma_log_delta": state.ad_gamma.log_delta,
        },
    )
