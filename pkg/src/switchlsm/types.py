"""Domain types shared across the package.

All types are immutable value objects: arrays are copied on construction and
marked read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import (
    ValidationError,
    as_float_array,
    check_positive,
    check_positive_array,
    check_row_stochastic,
    check_weights,
    clamp_leaning,
)


def _freeze(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Layer:
    """One layer of a weighted network panel.

    weights : (T, N, N) symmetric nonnegative integer counts; the diagonal is
        ignored everywhere downstream.
    leaning : optional (T, N) values, clamped into the open unit interval on
        construction.
    exposure : optional (T,) strictly positive activity totals.
    """

    weights: np.ndarray
    leaning: np.ndarray | None = None
    node_names: tuple = ()
    exposure: np.ndarray | None = None

    def __post_init__(self):
        w = check_weights(self.weights)
        object.__setattr__(self, "weights", _freeze(w))
        T, N = w.shape[0], w.shape[1]
        if self.leaning is not None:
            lean = clamp_leaning(self.leaning)
            if lean.shape != (T, N):
                raise ValidationError(
                    f"leaning must have shape (T, N) = ({T}, {N}), got {lean.shape}"
                )
            object.__setattr__(self, "leaning", _freeze(lean))
        names = tuple(str(n) for n in self.node_names) if self.node_names else tuple(
            str(i + 1) for i in range(N)
        )
        if len(names) != N:
            raise ValidationError(f"expected {N} node names, got {len(names)}")
        object.__setattr__(self, "node_names", names)
        if self.exposure is not None:
            expo = check_positive_array(self.exposure, "exposure")
            if expo.shape != (T,):
                raise ValidationError(f"exposure must have shape (T,) = ({T},), got {expo.shape}")
            object.__setattr__(self, "exposure", _freeze(expo))

    @property
    def n_periods(self):
        return self.weights.shape[0]

    @property
    def n_nodes(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class NetworkPanel:
    """A collection of independent layers (e.g. one per country)."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not all(isinstance(l, Layer) for l in layers):
            raise ValidationError("layers must be Layer instances")
        object.__setattr__(self, "layers", layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


@dataclass(frozen=True)
class ModelParams:
    """A single layer's full parameter vector.

    The distance coefficient ``beta`` is fixed (not sampled) and defaults to 1
    to resolve the scale indeterminacy with the latent variances.  ``delta``
    is the optional exposure-control coefficient.
    """

    alpha: np.ndarray
    zeta: np.ndarray
    sigma2: np.ndarray
    gamma0: float
    gamma1: float
    phi: float
    trans: np.ndarray
    beta: float = 1.0
    delta: float | None = None

    def __post_init__(self):
        alpha = as_float_array(self.alpha, "alpha", ndim=1)
        zeta = as_float_array(self.zeta, "zeta", ndim=2)
        if zeta.shape[0] != alpha.shape[0]:
            raise ValidationError(
                f"zeta must have one row per node, got {zeta.shape} for {alpha.shape[0]} nodes"
            )
        sigma2 = as_float_array(self.sigma2, "sigma2", ndim=1)
        if np.any(sigma2 < 0):
            raise ValidationError("sigma2 must be elementwise >= 0")
        trans = check_row_stochastic(self.trans)
        K = trans.shape[0]
        if zeta.shape[1] != K or sigma2.shape != (K,):
            raise ValidationError(
                f"inconsistent state counts: zeta {zeta.shape}, sigma2 {sigma2.shape}, trans {trans.shape}"
            )
        object.__setattr__(self, "alpha", _freeze(alpha))
        object.__setattr__(self, "zeta", _freeze(zeta))
        object.__setattr__(self, "sigma2", _freeze(sigma2))
        object.__setattr__(self, "trans", _freeze(trans))
        object.__setattr__(self, "gamma0", float(self.gamma0))
        object.__setattr__(self, "gamma1", float(self.gamma1))
        object.__setattr__(self, "phi", check_positive(self.phi, "phi"))
        object.__setattr__(self, "beta", check_positive(self.beta, "beta"))
        if self.delta is not None:
            object.__setattr__(self, "delta", float(self.delta))

    @property
    def n_nodes(self):
        return self.alpha.shape[0]

    @property
    def n_states(self):
        return self.trans.shape[0]

    def replace(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class StateSequence:
    """A hidden regime path; states are 1-based labels in {1, ..., K}."""

    states: np.ndarray
    n_states: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=int)
        if states.ndim != 1:
            raise ValidationError(f"states must be 1-dimensional, got shape {states.shape}")
        K = int(self.n_states)
        if K < 1:
            raise ValidationError("n_states must be >= 1")
        if states.size and (states.min() < 1 or states.max() > K):
            raise ValidationError(f"states must lie in 1..{K}")
        object.__setattr__(self, "states", _freeze(states))
        object.__setattr__(self, "n_states", K)

    @property
    def n_periods(self):
        return self.states.shape[0]

    @property
    def indicators(self):
        """(T, K) 0/1 matrix with exactly one 1 per row."""
        xi = np.zeros((self.states.shape[0], self.n_states), dtype=int)
        xi[np.arange(self.states.shape[0]), self.states - 1] = 1
        return xi


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the prior.

    Defaults are the vague choices used throughout: alpha ~ N(0, 15^2),
    sigma2 ~ IG(0.1, 0.1), gamma0/gamma1 ~ N(0, 15^2), phi ~ Gamma(0.01, 0.01)
    (shape/rate), transition rows ~ Dirichlet(2, ..., 2).
    """

    sigma_alpha2: float = 225.0
    a_sigma: float = 0.1
    b_sigma: float = 0.1
    b_gamma0: float = 225.0
    b_gamma1: float = 225.0
    a_phi: float = 0.01
    b_phi: float = 0.01
    omega: tuple = (2.0,)
    sigma_delta2: float = 225.0

    def __post_init__(self):
        for name in ("sigma_alpha2", "a_sigma", "b_sigma", "b_gamma0", "b_gamma1",
                     "a_phi", "b_phi", "sigma_delta2"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name))
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        if any(w <= 0 for w in omega):
            raise ValidationError("omega must be elementwise > 0")
        object.__setattr__(self, "omega", omega)

    def omega_for(self, n_states):
        if len(self.omega) == n_states:
            return np.asarray(self.omega)
        if len(self.omega) == 1:
            return np.full(n_states, self.omega[0])
        raise ValidationError(
            f"omega has length {len(self.omega)} but the model has {n_states} states"
        )


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, adaptation and identification settings."""

    n_iter: int = 50_000
    burn_in: int = 30_000
    thin: int = 10
    n_states: int = 2
    target_accept: float = 0.25
    adapt_exponent: float = 0.6
    anchor_index: int = 0
    anchor_sign: str = "negative"
    seed: int = 0
    beta: float = 1.0
    fix_gamma1: bool = False
    use_exposure: bool = False
    keep_full_trace: bool = True

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValidationError("need n_iter >= 1, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.n_iter:
            raise ValidationError("burn_in must be < n_iter")
        if not 0.0 < self.target_accept < 1.0:
            raise ValidationError("target_accept must lie in (0, 1)")
        if not 0.0 < self.adapt_exponent < 1.0:
            raise ValidationError("adapt_exponent must lie in (0, 1)")
        if self.n_states < 1:
            raise ValidationError("n_states must be >= 1")
        if self.anchor_sign not in ("negative", "positive"):
            raise ValidationError("anchor_sign must be 'negative' or 'positive'")
        check_positive(self.beta, "beta")

    @property
    def n_retained(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainOutput:
    """Retained posterior draws plus bookkeeping from one sampler run.

    Arrays are stacked over the H retained draws.  ``accept_rates`` maps block
    labels to post-burn-in acceptance rates; ``full_trace`` (optional) holds
    per-iteration traces of every scalar parameter for diagnostics.
    """

    alpha: np.ndarray
    zeta: np.ndarray
    sigma2: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    phi: np.ndarray
    trans: np.ndarray
    states: np.ndarray
    delta: np.ndarray | None
    loglik_complete: np.ndarray
    loglik_obs: np.ndarray
    loglik_network: np.ndarray
    accept_rates: dict
    accept_rates_all: dict
    summary_trace: np.ndarray
    summary_names: tuple
    full_trace: np.ndarray | None
    full_trace_names: tuple
    config: McmcConfig
    priors: PriorSpec
    node_names: tuple = ()
    adapt_state: dict = field(default_factory=dict)

    @property
    def n_retained(self):
        return self.alpha.shape[0]

    @property
    def n_states(self):
        return self.trans.shape[1]

    def map_states(self):
        """Per-period most frequent state across retained draws."""
        T = self.states.shape[1]
        K = self.n_states
        out = np.empty(T, dtype=int)
        for t in range(T):
            out[t] = 1 + np.argmax(np.bincount(self.states[:, t] - 1, minlength=K))
        return out
