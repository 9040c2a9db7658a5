"""Bayesian inference for Markov-switching latent-space models of weighted
temporal networks: simulation from the generative process, Gibbs sampling,
closed-form strength moments, chain diagnostics and predictive model
comparison."""

from .types import (
    ChainOutput,
    Layer,
    McmcConfig,
    ModelParams,
    NetworkPanel,
    PriorSpec,
    StateSequence,
)
from .likelihood import (
    beta_leaning_log_pdf,
    complete_data_log_lik,
    log_intensity,
    logistic,
    network_only_log_lik,
    poisson_log_pmf,
)
from .moments import (
    StrengthMomentSpec,
    dispersion_index,
    expected_strength,
    g_double_prime,
    g_prime,
    mc_strength_oracle,
    pgf_derivative_m,
    strength_variance,
)
from .simulate import (
    SimulationScenario,
    simulate_layer,
    simulate_panel,
    simulate_state_path,
    standard_scenario,
)
from .sampler import (
    AdaptiveState,
    adaptive_update,
    ffbs_states,
    identify_draw,
    run_chain,
    sample_q_row,
    sample_sigma2,
)
from .diagnostics import acceptance_rate, acf, effective_sample_size_ratio, geweke_cd
from .selection import dic, fit_baselines, lppd, lppd_from_chain, ppc_strength
from .pipeline import (
    filter_inactive,
    load_edge_list,
    pearson_correlation,
    project_bipartite,
    slant_index,
    write_edge_list,
)
from .estimator import MarkovSwitchingNetworkLSM

__version__ = "0.1.0"

__all__ = [
    "AdaptiveState",
    "ChainOutput",
    "Layer",
    "MarkovSwitchingNetworkLSM",
    "McmcConfig",
    "ModelParams",
    "NetworkPanel",
    "PriorSpec",
    "SimulationScenario",
    "StateSequence",
    "StrengthMomentSpec",
    "acceptance_rate",
    "acf",
    "adaptive_update",
    "beta_leaning_log_pdf",
    "complete_data_log_lik",
    "dic",
    "dispersion_index",
    "effective_sample_size_ratio",
    "expected_strength",
    "ffbs_states",
    "filter_inactive",
    "fit_baselines",
    "g_double_prime",
    "g_prime",
    "geweke_cd",
    "identify_draw",
    "load_edge_list",
    "log_intensity",
    "logistic",
    "lppd",
    "lppd_from_chain",
    "mc_strength_oracle",
    "network_only_log_lik",
    "pearson_correlation",
    "pgf_derivative_m",
    "poisson_log_pmf",
    "ppc_strength",
    "project_bipartite",
    "run_chain",
    "sample_q_row",
    "sample_sigma2",
    "simulate_layer",
    "simulate_panel",
    "simulate_state_path",
    "slant_index",
    "standard_scenario",
    "strength_variance",
    "write_edge_list",
]
