"""Closed-form strength-distribution moments of the switching latent-space
random graph, plus a Monte-Carlo oracle for checking them.

Conditioning convention: quantities are for a random node's strength at a
period whose previous state was ``l``; ``q_row`` is row ``l`` of the
transition matrix, mixing the per-state conditional factorial moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, lgamma

import numpy as np

from .validation import (
    DegenerateInputError,
    ValidationError,
    as_float_array,
    check_positive,
    check_positive_array,
)

__all__ = [
    "StrengthMomentSpec",
    "g_prime",
    "g_double_prime",
    "expected_strength",
    "strength_variance",
    "dispersion_index",
    "pgf_derivative_m",
    "mc_strength_oracle",
]

MAX_MULTI_INDICES = 10_000_000


@dataclass(frozen=True)
class StrengthMomentSpec:
    """Inputs to the closed-form strength moments.

    ``alpha`` is the common pairwise total alpha_i + alpha_j; heterogeneous
    individual effects are available only through :func:`pgf_derivative_m`.
    """

    n_nodes: int
    latent_dim: int
    alpha: float
    beta: float
    sigma2: tuple
    q_row: tuple

    def __post_init__(self):
        if int(self.n_nodes) < 1:
            raise ValidationError("n_nodes must be >= 1")
        if int(self.latent_dim) < 1:
            raise ValidationError("latent_dim must be >= 1")
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        object.__setattr__(self, "latent_dim", int(self.latent_dim))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", check_positive(self.beta, "beta"))
        sigma2 = tuple(float(s) for s in np.atleast_1d(self.sigma2))
        if any(s < 0 for s in sigma2):
            raise ValidationError("sigma2 must be elementwise >= 0")
        q = as_float_array(self.q_row, "q_row", ndim=1)
        if q.shape[0] != len(sigma2):
            raise ValidationError("q_row and sigma2 must have equal length")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ValidationError("q_row must be a probability vector")
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "q_row", tuple(float(p) for p in q))

    @property
    def n_states(self):
        return len(self.sigma2)


def g_prime(spec: StrengthMomentSpec, k: int) -> float:
    """First conditional factorial moment of the strength given state k:
    (N - 1) e^alpha (4 sigma2_k beta + 1)^(-d/2)."""
    N, d = spec.n_nodes, spec.latent_dim
    s2 = spec.sigma2[k]
    return (N - 1) * np.exp(spec.alpha) * (4.0 * s2 * spec.beta + 1.0) ** (-d / 2.0)


def g_double_prime(spec: StrengthMomentSpec, k: int) -> float:
    """Second conditional factorial moment of the strength given state k."""
    N, d = spec.n_nodes, spec.latent_dim
    s2b = spec.sigma2[k] * spec.beta
    e2a = np.exp(2.0 * spec.alpha)
    first = (N - 1) * e2a * (8.0 * s2b + 1.0) ** (-d / 2.0)
    second = (
        (N - 1) * (N - 2) * e2a
        * (2.0 * s2b + 1.0) ** (-d / 2.0)
        * (6.0 * s2b + 1.0) ** (-d / 2.0)
    )
    return float(first + second)


def expected_strength(spec: StrengthMomentSpec) -> float:
    """Expected nodal strength: the q_row mixture of per-state first moments."""
    return float(sum(q * g_prime(spec, k) for k, q in enumerate(spec.q_row)))


def strength_variance(spec: StrengthMomentSpec) -> float:
    """Variance of the nodal strength.

    Within-state Poisson-mixture variance plus the between-state spread of the
    conditional means around the mixture mean.
    """
    gp = np.array([g_prime(spec, k) for k in range(spec.n_states)])
    gpp = np.array([g_double_prime(spec, k) for k in range(spec.n_states)])
    q = np.array(spec.q_row)
    mean = float(q @ gp)
    var_within = gpp + gp - gp**2
    return float(q @ var_within + q @ (gp - mean) ** 2)


def dispersion_index(spec: StrengthMomentSpec) -> float:
    """Variance-to-mean ratio of the strength distribution.

    Equals 1 exactly for the homogeneous Poisson graph (all sigma2 = 0).
    """
    gp = np.array([g_prime(spec, k) for k in range(spec.n_states)])
    if np.any(gp == 0.0):
        raise DegenerateInputError(
            "dispersion index undefined: a conditional mean is zero (N = 1?)"
        )
    gpp = np.array([g_double_prime(spec, k) for k in range(spec.n_states)])
    q = np.array(spec.q_row)
    v_k = gpp / gp
    d_k = 1.0 + v_k - gp
    v = float((q @ gpp) / (q @ gp) - q @ v_k)
    return float(q @ d_k + v)


def _compositions(total, parts):
    """Iterate over all ordered compositions of ``total`` into ``parts``
    nonnegative integers, without recursion."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    comp = [0] * parts
    comp[0] = total
    while True:
        yield tuple(comp)
        # find rightmost position before the last that can donate
        rem = comp[-1]
        comp[-1] = 0
        i = parts - 2
        while i >= 0 and comp[i] == 0:
            i -= 1
        if i < 0:
            return
        comp[i] -= 1
        comp[i + 1] = rem + 1


def _log_multinomial(m, h):
    out = lgamma(m + 1)
    for hj in h:
        if hj:
            out -= lgamma(hj + 1)
    return out


def pgf_derivative_m(spec: StrengthMomentSpec, k: int, m: int,
                     per_node_alpha=None) -> float:
    """m-th derivative at 1 of the conditional strength pgf given state k.

    Evaluates the exact multi-index sum over compositions of ``m`` into the
    N - 1 partner slots.  With ``per_node_alpha`` (length N; entry 0 is the
    focal node, the rest its partners), heterogeneous individual effects are
    used; otherwise every pair contributes the common ``spec.alpha``.

    The per-composition coefficient is evaluated in the numerically safe form
    (1 + sigma2 * sum_j 2 b h_j / (2 b h_j sigma2 + 1))^(-d/2)
    * prod_j (2 b h_j sigma2 + 1)^(-d/2),
    which folds the (sigma2)^(-d/2) prefactor into the first factor and stays
    finite as sigma2 -> 0.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    N, d = spec.n_nodes, spec.latent_dim
    n_partners = N - 1
    if n_partners == 0:
        return 0.0
    count = comb(m + n_partners - 1, n_partners - 1)
    if count > MAX_MULTI_INDICES:
        raise ValidationError(
            f"multi-index enumeration would need {count} terms (> {MAX_MULTI_INDICES})"
        )
    if per_node_alpha is not None:
        pa = as_float_array(per_node_alpha, "per_node_alpha", ndim=1)
        if pa.shape[0] != N:
            raise ValidationError(f"per_node_alpha must have length {N}")
        alpha_i = pa[0]
        alpha_partners = pa[1:]
    else:
        alpha_i = None
        alpha_partners = None

    s2 = spec.sigma2[k]
    beta = spec.beta
    total = 0.0
    for h in _compositions(m, n_partners):
        log_term = _log_multinomial(m, h)
        if alpha_partners is None:
            log_term += spec.alpha * m
        else:
            log_term += alpha_i * m + sum(a * hj for a, hj in zip(alpha_partners, h) if hj)
        inv_sum = 0.0
        for hj in h:
            if hj:
                c = 2.0 * beta * hj * s2 + 1.0
                inv_sum += 2.0 * beta * hj / c
                log_term += (-d / 2.0) * np.log(c)
        log_term += (-d / 2.0) * np.log1p(s2 * inv_sum)
        total += np.exp(log_term)
    return float(total)


def simulate_strengths(spec: StrengthMomentSpec, n_reps, rng,
                       per_node_alpha=None):
    """Simulate ``n_reps`` single-period networks and return the (n_reps, N)
    matrix of nodal strengths.

    Each replication draws a state from ``q_row``, latent coordinates from the
    state's normal layout and Poisson weights from the pairwise intensities.
    """
    N, d = spec.n_nodes, spec.latent_dim
    q = np.array(spec.q_row)
    iu = np.triu_indices(N, 1)
    if per_node_alpha is None:
        pair_alpha = np.full(iu[0].shape, spec.alpha)
    else:
        pa = as_float_array(per_node_alpha, "per_node_alpha", ndim=1)
        pair_alpha = pa[iu[0]] + pa[iu[1]]
    strengths = np.zeros((n_reps, N))
    states = rng.choice(len(q), size=n_reps, p=q)
    for r in range(n_reps):
        s2 = spec.sigma2[states[r]]
        z = rng.normal(0.0, np.sqrt(s2), size=(N, d))
        dist2 = ((z[iu[0]] - z[iu[1]]) ** 2).sum(axis=1)
        lam = np.exp(pair_alpha - spec.beta * dist2)
        y = rng.poisson(lam)
        mat = np.zeros((N, N))
        mat[iu] = y
        mat += mat.T
        strengths[r] = mat.sum(axis=1)
    return strengths


def _jackknife_se(per_rep_stat_fn, n_reps):
    """SE of a statistic via delete-one-replication jackknife."""
    stats = np.array([per_rep_stat_fn(r) for r in range(n_reps)])
    mean = stats.mean()
    return float(np.sqrt((n_reps - 1) / n_reps * ((stats - mean) ** 2).sum()))


def mc_strength_oracle(spec: StrengthMomentSpec, n_reps, rng):
    """Empirical strength moments over simulated networks, with jackknife SEs.

    Returns a dict with keys mean, sd, dispersion and their standard errors
    se_mean, se_sd, se_dispersion; nodes within one replication are pooled, so
    the jackknife resamples whole replications and stays valid under the
    within-network dependence of the strengths.
    """
    if n_reps < 2:
        raise ValidationError("n_reps must be >= 2")
    strengths = simulate_strengths(spec, n_reps, rng)

    def stat_all(drop=None):
        vals = strengths if drop is None else np.delete(strengths, drop, axis=0)
        flat = vals.ravel()
        mean = flat.mean()
        sd = flat.std(ddof=1)
        return mean, sd, (sd**2 / mean if mean > 0 else np.nan)

    mean, sd, disp = stat_all()
    jk = np.array([stat_all(r) for r in range(n_reps)])
    ses = np.sqrt((n_reps - 1) / n_reps * ((jk - jk.mean(axis=0)) ** 2).sum(axis=0))
    return {
        "mean": float(mean),
        "sd": float(sd),
        "dispersion": float(disp),
        "se_mean": float(ses[0]),
        "se_sd": float(ses[1]),
        "se_dispersion": float(ses[2]),
        "n_reps": int(n_reps),
    }
