"""Batch command-line front end.

Subcommands:
  simulate   draw a synthetic panel and write edge list, leaning and truth files
  fit        run the posterior sampler (or a baseline) on a panel
  moments    tabulate closed-form strength moments over a parameter grid
  report     diagnostics, model-comparison and predictive-check tables

Configuration comes from a single text file, either JSON or ``key = value``
lines (values are parsed as JSON scalars/arrays).  All errors go to stderr
with a stable ``error:<category>:`` prefix and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import diagnostics, pipeline, selection
from .sampler import run_chain
from .simulate import simulate_layer, standard_scenario
from .types import ChainOutput, Layer, McmcConfig, PriorSpec
from .validation import IngestionError, ValidationError

MODELS = ("m1", "m2", "m3", "rg", "rg-cov")

PRIOR_KEYS = ("sigma_alpha2", "a_sigma", "b_sigma", "b_gamma0", "b_gamma1",
              "a_phi", "b_phi", "omega", "sigma_delta2")


class ConfigError(ValidationError):
    pass


def parse_config(path):
    """Parse a JSON or key=value config file with line-anchored errors."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}")
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{ln}: empty key")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _pop(cfg, key, default=None):
    return cfg.pop(key, default)


def _reject_unknown(cfg, path, context):
    if cfg:
        raise ConfigError(f"{path}: unknown {context} keys: {', '.join(sorted(cfg))}")


# ---------------------------------------------------------------------------
# simulate

def _scenario_from_config(cfg, path, seed_override=None):
    cfg = dict(cfg)
    overrides = {}
    for key in ("n_nodes", "n_periods", "seed", "init_state"):
        val = _pop(cfg, key)
        if val is not None:
            overrides[key] = int(val)
    for key in ("alpha_mean", "alpha_sd", "phi", "gamma0", "gamma1"):
        val = _pop(cfg, key)
        if val is not None:
            overrides[key] = float(val)
    sigma_state = _pop(cfg, "sigma_state")
    if sigma_state is not None:
        overrides["sigma_state"] = np.atleast_1d(np.asarray(sigma_state, dtype=float))
    diag_q = _pop(cfg, "diag_q")
    trans = _pop(cfg, "trans")
    group_magnitudes = _pop(cfg, "group_magnitudes")
    state_centers = _pop(cfg, "state_centers")
    _reject_unknown(cfg, path, "simulate")
    if seed_override is not None:
        overrides["seed"] = int(seed_override)
    scenario = standard_scenario(**overrides)
    extra = {}
    if diag_q is not None:
        K = scenario.n_states
        q = float(diag_q)
        extra["trans"] = np.full((K, K), (1.0 - q) / max(K - 1, 1))
        np.fill_diagonal(extra["trans"], q)
    if trans is not None:
        extra["trans"] = np.asarray(trans, dtype=float)
    if group_magnitudes is not None:
        mags = np.atleast_1d(np.asarray(group_magnitudes, dtype=float))
        half = scenario.n_nodes // 2
        sign = np.where(np.arange(scenario.n_nodes) < half, -1.0, 1.0)
        extra["state_centers"] = sign[:, None] * mags[None, :]
    if state_centers is not None:
        extra["state_centers"] = np.asarray(state_centers, dtype=float)
    if extra:
        from dataclasses import replace
        scenario = replace(scenario, **extra)
    return scenario


def cmd_simulate(args):
    cfg = parse_config(args.config) if args.config else {}
    scenario = _scenario_from_config(cfg, args.config or "<defaults>",
                                     seed_override=args.seed)
    layer, params, states = simulate_layer(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_edge_list(layer, out / "edges.csv")
    pipeline.write_leaning(layer, out / "leaning.csv")
    truth = {
        "seed": scenario.seed,
        "n_nodes": scenario.n_nodes,
        "n_periods": scenario.n_periods,
        "n_states": scenario.n_states,
        "node_names": list(layer.node_names),
        "alpha": params.alpha.tolist(),
        "zeta": params.zeta.tolist(),
        "sigma2": params.sigma2.tolist(),
        "gamma0": params.gamma0,
        "gamma1": params.gamma1,
        "phi": params.phi,
        "trans": params.trans.tolist(),
        "states": states.states.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1), encoding="utf-8")
    print(f"wrote {out / 'edges.csv'}, {out / 'leaning.csv'}, {out / 'truth.json'}")
    return 0


# ---------------------------------------------------------------------------
# fit

def _split_fit_config(cfg, path, model, seed_override=None):
    cfg = dict(cfg)
    prior_kwargs = {}
    for key in PRIOR_KEYS:
        val = _pop(cfg, key)
        if val is not None:
            prior_kwargs[key] = tuple(val) if key == "omega" and isinstance(val, list) else val
    anchor_name = _pop(cfg, "anchor_name")
    chain_kwargs = {}
    for key, cast in (("n_iter", int), ("burn_in", int), ("thin", int),
                      ("n_states", int), ("target_accept", float),
                      ("adapt_exponent", float), ("anchor_index", int),
                      ("anchor_sign", str), ("seed", int), ("beta", float),
                      ("use_exposure", bool), ("keep_full_trace", bool)):
        val = _pop(cfg, key)
        if val is not None:
            chain_kwargs[key] = cast(val)
    _pop(cfg, "model")
    _reject_unknown(cfg, path, "fit")
    if seed_override is not None:
        chain_kwargs["seed"] = int(seed_override)
    if model == "m2":
        chain_kwargs["fix_gamma1"] = True
    if model == "m3":
        chain_kwargs["n_states"] = 1
    priors = PriorSpec(**prior_kwargs)
    return priors, chain_kwargs, anchor_name


def _write_chain(out: Path, chain: ChainOutput, model: str, priors: PriorSpec):
    out.mkdir(parents=True, exist_ok=True)
    K = chain.n_states
    H = chain.n_retained
    N = chain.alpha.shape[1]
    cols = {}
    for i in range(N):
        cols[f"alpha_{i + 1}"] = chain.alpha[:, i]
    if model in ("m1", "m2", "m3"):
        for k in range(K):
            for i in range(N):
                cols[f"zeta_{i + 1}_s{k + 1}"] = chain.zeta[:, i, k]
        for k in range(K):
            cols[f"sigma2_s{k + 1}"] = chain.sigma2[:, k]
        cols["gamma0"] = chain.gamma0
        cols["gamma1"] = chain.gamma1
        cols["phi"] = chain.phi
        if chain.delta is not None:
            cols["delta"] = chain.delta
    cols["loglik_complete"] = chain.loglik_complete
    cols["loglik_obs"] = chain.loglik_obs
    cols["loglik_network"] = chain.loglik_network
    pd.DataFrame(cols).to_csv(out / "draws.csv", index_label="draw")

    trans_cols = {f"q_{l + 1}{k + 1}": chain.trans[:, l, k]
                  for l in range(K) for k in range(K)} if K > 1 else {}
    pd.DataFrame(trans_cols, index=range(H) if K > 1 else []).to_csv(
        out / "trans.csv", index_label="draw")
    if K > 1:
        states = pd.DataFrame(chain.states,
                              columns=[f"t_{t + 1}" for t in range(chain.states.shape[1])])
        states.to_csv(out / "states.csv", index_label="draw")
    if chain.summary_trace.size:
        pd.DataFrame(chain.summary_trace, columns=list(chain.summary_names)).to_csv(
            out / "trace.csv", index_label="iter")
    if chain.full_trace is not None:
        pd.DataFrame(chain.full_trace, columns=list(chain.full_trace_names)).to_csv(
            out / "trace_full.csv", index_label="iter")
    manifest = {
        "model": model,
        "n_periods": int(chain.states.shape[1]),
        "config": {k: (v if not isinstance(v, tuple) else list(v))
                   for k, v in vars(chain.config).items()},
        "priors": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(priors).items()},
        "node_names": list(chain.node_names),
        "n_retained": H,
        "accept_rates": {k: (np.asarray(v).tolist() if np.ndim(v) else float(v))
                         for k, v in chain.accept_rates.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def _load_layer(edges_path, leaning_path=None, exposure_path=None):
    layer = pipeline.load_edge_list(edges_path)
    if leaning_path:
        layer = pipeline.attach_leaning(layer, leaning_path)
    if exposure_path:
        expo = pipeline.load_exposure(exposure_path, layer.n_periods)
        layer = Layer(weights=layer.weights, leaning=layer.leaning,
                      node_names=layer.node_names, exposure=expo)
    return layer


def _fit_one(edges_path, leaning_path, exposure_path, model, priors,
             chain_kwargs, anchor_name, out_dir):
    layer = _load_layer(edges_path, leaning_path, exposure_path)
    if anchor_name is not None:
        if anchor_name not in layer.node_names:
            raise ValidationError(f"anchor {anchor_name!r} is not a node of the panel")
        chain_kwargs["anchor_index"] = layer.node_names.index(anchor_name)
    config = McmcConfig(**chain_kwargs)
    if model in ("m1", "m2", "m3"):
        if layer.leaning is None and model != "m3":
            raise ValidationError(f"model {model} needs a leaning file")
        chain = run_chain(layer, priors, config)
    elif model == "rg":
        chain = selection.fit_baselines(layer, priors, config, which=("rg",))["rg"]
    else:
        chain = selection.fit_baselines(layer, priors, config, which=("rg_cov",))["rg_cov"]
    _write_chain(Path(out_dir), chain, model, priors)
    return out_dir


def cmd_fit(args):
    cfg = parse_config(args.config) if args.config else {}
    model = args.model or cfg.get("model", "m1")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}, expected one of {'/'.join(MODELS)}")
    priors, chain_kwargs, anchor_name = _split_fit_config(
        cfg, args.config or "<defaults>", model, seed_override=args.seed)

    if args.layers:
        jobs = []
        base_seed = chain_kwargs.get("seed", 0)
        seeds = np.random.SeedSequence(base_seed).spawn(len(args.layers))
        for idx, spec in enumerate(args.layers):
            if "=" not in spec:
                raise ConfigError(f"--layer expects NAME=EDGES,LEANING, got {spec!r}")
            name, _, paths = spec.partition("=")
            parts = paths.split(",")
            if len(parts) not in (1, 2):
                raise ConfigError(f"--layer expects NAME=EDGES[,LEANING], got {spec!r}")
            kw = dict(chain_kwargs)
            kw["seed"] = int(seeds[idx].generate_state(1)[0] % (2**31))
            jobs.append((name, parts[0], parts[1] if len(parts) == 2 else None, kw))
        out_root = Path(args.out)
        with concurrent.futures.ProcessPoolExecutor() as pool:
            futures = {
                pool.submit(_fit_one, edges, lean, None, model, priors, kw,
                            anchor_name, str(out_root / name)): name
                for name, edges, lean, kw in jobs
            }
            for fut in concurrent.futures.as_completed(futures):
                print(f"layer {futures[fut]}: wrote {fut.result()}")
        return 0

    if not args.edges:
        raise ConfigError("fit needs an edge-list path (or --layer specs)")
    _fit_one(args.edges, args.leaning, args.exposure, model, priors,
             chain_kwargs, anchor_name, args.out)
    print(f"wrote chain files to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# moments

def cmd_moments(args):
    from .moments import (StrengthMomentSpec, dispersion_index, expected_strength,
                          mc_strength_oracle, strength_variance)
    cfg = dict(parse_config(args.config)) if args.config else {}
    n_nodes = int(_pop(cfg, "n_nodes", 100))
    latent_dim = int(_pop(cfg, "latent_dim", 1))
    beta = float(_pop(cfg, "beta", 1.0))
    alphas = np.atleast_1d(np.asarray(_pop(cfg, "alpha", [0.0]), dtype=float))
    s2b = np.atleast_1d(np.asarray(_pop(cfg, "sigma2beta", [1.0]), dtype=float))
    extra = np.atleast_1d(np.asarray(_pop(cfg, "extra_sigma2beta", []), dtype=float))
    q_row = _pop(cfg, "q_row")
    n_reps = int(_pop(cfg, "n_reps", 200))
    seed = int(_pop(cfg, "seed", 0))
    _reject_unknown(cfg, args.config or "<defaults>", "moments")

    K = 1 + extra.size
    if q_row is None:
        q = np.full(K, 1.0 / K)
    else:
        q = np.asarray(q_row, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = []
    for a in alphas:
        for s in s2b:
            sigma2 = np.concatenate([[s], extra]) / beta
            spec = StrengthMomentSpec(n_nodes=n_nodes, latent_dim=latent_dim,
                                      alpha=float(a), beta=beta,
                                      sigma2=tuple(sigma2), q_row=tuple(q))
            row = {
                "alpha": float(a), "sigma2beta": float(s),
                "mean": expected_strength(spec),
                "sd": float(np.sqrt(strength_variance(spec))),
                "dispersion": dispersion_index(spec),
            }
            if args.oracle:
                mc = mc_strength_oracle(spec, n_reps, rng)
                row.update({f"mc_{k}" if not k.startswith(("se_", "n_")) else k: v
                            for k, v in mc.items()})
            rows.append(row)
    table = pd.DataFrame(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out, index=False)
        print(f"wrote {args.out}")
    else:
        table.to_csv(sys.stdout, index=False)
    return 0


# ---------------------------------------------------------------------------
# report

def load_chain_dir(path):
    """Reload a persisted chain directory into a ChainOutput."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    model = manifest["model"]
    cfg_raw = dict(manifest["config"])
    cfg_raw["keep_full_trace"] = bool(cfg_raw.get("keep_full_trace", True))
    config = McmcConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                           for k, v in cfg_raw.items()})
    priors = PriorSpec(**{k: (tuple(v) if isinstance(v, list) else v)
                          for k, v in manifest["priors"].items()})
    draws = pd.read_csv(path / "draws.csv", index_col=0)
    H = draws.shape[0]
    names = manifest["node_names"]
    N = len(names)
    K = config.n_states if model in ("m1", "m2", "m3") else 1
    alpha_cols = [c for c in draws.columns if c.startswith("alpha_")]
    alpha = draws[alpha_cols].to_numpy()
    zeta = np.zeros((H, N, K))
    sigma2 = np.ones((H, K))
    gamma0 = np.zeros(H)
    gamma1 = np.zeros(H)
    phi = np.ones(H)
    delta = None
    if model in ("m1", "m2", "m3"):
        for k in range(K):
            block = [f"zeta_{i + 1}_s{k + 1}" for i in range(N)]
            zeta[:, :, k] = draws[block].to_numpy()
            sigma2[:, k] = draws[f"sigma2_s{k + 1}"].to_numpy()
        gamma0 = draws["gamma0"].to_numpy()
        gamma1 = draws["gamma1"].to_numpy()
        phi = draws["phi"].to_numpy()
        if "delta" in draws.columns:
            delta = draws["delta"].to_numpy()
    trans = np.ones((H, K, K))
    if K > 1:
        tdf = pd.read_csv(path / "trans.csv", index_col=0)
        for l in range(K):
            for k in range(K):
                trans[:, l, k] = tdf[f"q_{l + 1}{k + 1}"].to_numpy()
    states_path = path / "states.csv"
    if states_path.exists():
        sdf = pd.read_csv(states_path, index_col=0)
        states = sdf.to_numpy().astype(np.int16)
    else:
        # single-state chains carry no states file; reconstruct a flat path
        T = int(manifest.get("n_periods", 1))
        states = np.ones((H, T), dtype=np.int16)
    summary = np.zeros((0, 0))
    summary_names = ()
    trace_path = path / "trace.csv"
    if trace_path.exists():
        tr = pd.read_csv(trace_path, index_col=0)
        summary = tr.to_numpy()
        summary_names = tuple(tr.columns)
    full = None
    full_names = ()
    full_path = path / "trace_full.csv"
    if full_path.exists():
        fr = pd.read_csv(full_path, index_col=0)
        full = fr.to_numpy()
        full_names = tuple(fr.columns)
    return ChainOutput(
        alpha=alpha, zeta=zeta, sigma2=sigma2, gamma0=gamma0, gamma1=gamma1,
        phi=phi, trans=trans, states=states, delta=delta,
        loglik_complete=draws["loglik_complete"].to_numpy(),
        loglik_obs=draws["loglik_obs"].to_numpy(),
        loglik_network=draws["loglik_network"].to_numpy(),
        accept_rates=manifest.get("accept_rates", {}), accept_rates_all={},
        summary_trace=summary, summary_names=summary_names,
        full_trace=full, full_trace_names=full_names,
        config=config, priors=priors, node_names=tuple(names),
    ), model


def _diagnostics_table(chain: ChainOutput, model):
    if chain.full_trace is not None:
        names = list(chain.full_trace_names)
        trace = chain.full_trace
        N = chain.alpha.shape[1]
        K = chain.n_states
        groups = {"alpha(avg)": [f"alpha_{i + 1}" for i in range(N)]}
        if model in ("m1", "m2", "m3"):
            groups.update({"gamma0": ["gamma0"], "gamma1": ["gamma1"], "phi": ["phi"]})
            for k in range(K):
                groups[f"zeta(avg)_s{k + 1}"] = [f"zeta_{i + 1}_s{k + 1}" for i in range(N)]
    elif chain.summary_trace.size:
        names = list(chain.summary_names)
        trace = chain.summary_trace
        groups = {n: [n] for n in names if n != "loglik_obs"}
    else:
        return None
    accept = {}
    rates = chain.accept_rates or {}
    if "alpha" in rates:
        accept["alpha(avg)"] = float(np.mean(rates["alpha"]))
    if "gamma" in rates:
        accept["gamma0"] = float(np.asarray(rates["gamma"]).mean())
        accept["gamma1"] = accept["gamma0"]
    if "phi" in rates:
        accept["phi"] = float(np.asarray(rates["phi"]).mean())
    if "zeta" in rates:
        z = np.asarray(rates["zeta"])
        if z.ndim == 2:
            for k in range(z.shape[1]):
                accept[f"zeta(avg)_s{k + 1}"] = float(z[:, k].mean())
    cfg = chain.config
    return diagnostics.chain_report(trace, names, cfg.burn_in, cfg.thin,
                                    groups=groups, accept=accept or None)


def cmd_report(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layer = None
    if args.data:
        layer = _load_layer(args.data, args.leaning)
    entries = {}
    for chain_dir in args.chains:
        chain, model = load_chain_dir(chain_dir)
        label = Path(chain_dir).name
        diag = _diagnostics_table(chain, model)
        if diag is not None:
            diag.to_csv(out / f"diagnostics_{label}.csv", index=False)
        kind = {"rg": "rg", "rg-cov": "rg_cov"}.get(model, "switching")
        entries[label] = (chain, kind)
        if layer is not None and (kind != "rg_cov" or layer.leaning is not None):
            selection.ppc_strength(chain, layer, kind=kind).to_csv(
                out / f"ppc_{label}.csv", index=False)
    if layer is not None:
        selection.selection_report(entries, layer).to_csv(out / "selection.csv", index=False)
    else:
        rows = []
        for label, (chain, _) in entries.items():
            trace = chain.loglik_obs
            d = (selection.dic(trace) if trace.shape[0] >= 2
                 else float(-2.0 * trace[0]))
            rows.append({"model": label, "dic": d,
                         "mean_loglik_obs": float(np.mean(trace)),
                         "mean_loglik_network": float(np.mean(chain.loglik_network))})
        pd.DataFrame(rows).to_csv(out / "selection.csv", index=False)
    print(f"wrote report tables to {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="switchlsm",
        description="Markov-switching latent-space network models: simulate, "
                    "fit, verify and compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic panel")
    p_sim.add_argument("--config", help="scenario config file")
    p_sim.add_argument("--out", default="sim_out", help="output directory")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run the posterior sampler")
    p_fit.add_argument("edges", nargs="?", help="edge-list CSV (i,j,t,w)")
    p_fit.add_argument("leaning", nargs="?", help="leaning CSV (i,t,leaning)")
    p_fit.add_argument("--config", help="sampler config file")
    p_fit.add_argument("--model", choices=MODELS, help="model variant (default m1)")
    p_fit.add_argument("--exposure", help="optional exposure CSV (t,total)")
    p_fit.add_argument("--seed", type=int, help="override the chain seed")
    p_fit.add_argument("--out", default="fit_out", help="output directory")
    p_fit.add_argument("--layer", dest="layers", action="append",
                       help="NAME=EDGES[,LEANING]; repeat to fit several layers "
                            "concurrently on independent seeds")
    p_fit.set_defaults(func=cmd_fit)

    p_mom = sub.add_parser("moments", help="closed-form strength moment tables")
    p_mom.add_argument("--config", help="grid config file")
    p_mom.add_argument("--oracle", action="store_true",
                       help="add Monte-Carlo oracle columns")
    p_mom.add_argument("--out", help="output CSV (default stdout)")
    p_mom.set_defaults(func=cmd_moments)

    p_rep = sub.add_parser("report", help="diagnostics and model comparison")
    p_rep.add_argument("chains", nargs="+", help="chain output directories")
    p_rep.add_argument("--data", help="edge-list CSV for lppd/PPC tables")
    p_rep.add_argument("--leaning", help="leaning CSV")
    p_rep.add_argument("--out", default="report_out", help="output directory")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
    except IngestionError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
    except ValidationError as exc:
        print(f"error:invalid: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"error:runtime: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
