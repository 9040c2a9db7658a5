"""Scikit-learn style front end for the posterior sampler.

The estimator validates array inputs, runs the Gibbs chain on ``fit`` and
exposes posterior summaries as fitted attributes, so the model composes with
the usual clone / get_params / set_params tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .sampler import run_chain
from .selection import lppd_from_chain
from .types import Layer, McmcConfig, PriorSpec

__all__ = ["MarkovSwitchingNetworkLSM"]


class MarkovSwitchingNetworkLSM(BaseEstimator):
    """Bayesian Markov-switching latent-space model for weighted panels.

    Parameters mirror the sampler configuration; prior hyperparameters are
    exposed flat so grid tools can touch them.  ``fit`` accepts the (T, N, N)
    weight stack and an optional (T, N) leaning matrix.

    Fitted attributes (posterior means unless noted): ``alpha_``, ``zeta_``,
    ``sigma2_``, ``gamma0_``, ``gamma1_``, ``phi_``, ``trans_``, ``states_``
    (per-period posterior mode), ``state_probs_`` and the full ``chain_``.
    """

    def __init__(self, n_states=2, n_iter=5000, burn_in=2000, thin=5,
                 target_accept=0.25, adapt_exponent=0.6, anchor_index=0,
                 anchor_sign="negative", beta=1.0, fix_gamma1=False,
                 use_exposure=False, sigma_alpha2=225.0, a_sigma=0.1,
                 b_sigma=0.1, b_gamma0=225.0, b_gamma1=225.0, a_phi=0.01,
                 b_phi=0.01, omega=2.0, random_state=0):
        self.n_states = n_states
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.target_accept = target_accept
        self.adapt_exponent = adapt_exponent
        self.anchor_index = anchor_index
        self.anchor_sign = anchor_sign
        self.beta = beta
        self.fix_gamma1 = fix_gamma1
        self.use_exposure = use_exposure
        self.sigma_alpha2 = sigma_alpha2
        self.a_sigma = a_sigma
        self.b_sigma = b_sigma
        self.b_gamma0 = b_gamma0
        self.b_gamma1 = b_gamma1
        self.a_phi = a_phi
        self.b_phi = b_phi
        self.omega = omega
        self.random_state = random_state

    def _to_layer(self, weights, leaning, exposure):
        if isinstance(weights, Layer):
            return weights
        return Layer(weights=np.asarray(weights), leaning=leaning, exposure=exposure)

    def _config(self):
        return McmcConfig(
            n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
            n_states=self.n_states, target_accept=self.target_accept,
            adapt_exponent=self.adapt_exponent, anchor_index=self.anchor_index,
            anchor_sign=self.anchor_sign, seed=self.random_state,
            beta=self.beta, fix_gamma1=self.fix_gamma1,
            use_exposure=self.use_exposure,
        )

    def _priors(self):
        return PriorSpec(
            sigma_alpha2=self.sigma_alpha2, a_sigma=self.a_sigma,
            b_sigma=self.b_sigma, b_gamma0=self.b_gamma0,
            b_gamma1=self.b_gamma1, a_phi=self.a_phi, b_phi=self.b_phi,
            omega=(self.omega,) if np.isscalar(self.omega) else tuple(self.omega),
        )

    def fit(self, weights, leaning=None, exposure=None):
        """Run the posterior sampler on one panel layer."""
        layer = self._to_layer(weights, leaning, exposure)
        chain = run_chain(layer, self._priors(), self._config())
        self.layer_ = layer
        self.chain_ = chain
        self.alpha_ = chain.alpha.mean(axis=0)
        self.zeta_ = chain.zeta.mean(axis=0)
        self.sigma2_ = chain.sigma2.mean(axis=0)
        self.gamma0_ = float(chain.gamma0.mean())
        self.gamma1_ = float(chain.gamma1.mean())
        self.phi_ = float(chain.phi.mean())
        self.trans_ = chain.trans.mean(axis=0)
        K = chain.n_states
        T = chain.states.shape[1]
        probs = np.stack([(chain.states == k + 1).mean(axis=0) for k in range(K)], axis=1)
        self.state_probs_ = probs
        self.states_ = chain.map_states()
        self.n_retained_ = chain.n_retained
        return self

    def _check_fitted(self):
        if not hasattr(self, "chain_"):
            raise NotFittedError("call fit before using this estimator")

    def predict_states(self):
        """Posterior-mode regime label per period of the fitted panel."""
        self._check_fitted()
        return self.states_.copy()

    def score(self, weights=None, leaning=None, exposure=None):
        """Network log pointwise predictive density (higher is better).

        Scores the fitted panel when no arguments are given; otherwise scores
        the supplied panel under the fitted posterior draws.
        """
        self._check_fitted()
        if weights is None:
            layer = self.layer_
        else:
            layer = self._to_layer(weights, leaning, exposure)
        return lppd_from_chain(self.chain_, layer)
