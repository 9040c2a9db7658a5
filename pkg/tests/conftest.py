import numpy as np
import pytest

from switchlsm import Layer, ModelParams, StateSequence


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, n_nodes=3, n_periods=2, n_states=2, leaning=True):
    """A small random (layer, params, states) triple for oracle comparisons."""
    N, T, K = n_nodes, n_periods, n_states
    alpha = rng.normal(0.0, 0.5, size=N)
    zeta = rng.normal(0.0, 0.6, size=(N, K))
    trans = rng.dirichlet(np.full(K, 2.0), size=K)
    params = ModelParams(
        alpha=alpha, zeta=zeta, sigma2=rng.gamma(2.0, 0.5, size=K),
        gamma0=rng.normal(0, 0.3), gamma1=rng.normal(0, 0.5),
        phi=rng.gamma(20.0, 5.0), trans=trans,
    )
    states = StateSequence(states=rng.integers(1, K + 1, size=T), n_states=K)
    iu = np.triu_indices(N, 1)
    weights = np.zeros((T, N, N), dtype=np.int64)
    for t in range(T):
        k = states.states[t] - 1
        zk = zeta[:, k]
        lam = np.exp(alpha[iu[0]] + alpha[iu[1]] - (zk[iu[0]] - zk[iu[1]]) ** 2)
        draws = rng.poisson(lam)
        weights[t][iu] = draws
    weights = weights + np.transpose(weights, (0, 2, 1))
    lean = rng.uniform(0.05, 0.95, size=(T, N)) if leaning else None
    layer = Layer(weights=weights, leaning=lean)
    return layer, params, states


@pytest.fixture
def tiny_instance(rng):
    return random_instance(rng)
