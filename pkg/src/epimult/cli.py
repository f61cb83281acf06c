"""Command-line entry point: ``epimult <command> --config run.json``.

Every command writes its outputs plus ``manifest.json`` into ``--out-dir``.
The manifest holds the fully resolved config (including the seed actually
used), so ``epimult <command> --config out/manifest.json`` reproduces the run.

Randomness: the run seed feeds ``numpy.random.SeedSequence``; commands that
need several independent streams (replicates, chains, SMC runs) take
children of it via ``spawn`` in a fixed order.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .core import (
    AllWeightsZero, ConfigError, CountExceedsPopulation, DegenerateUpdate, HorizonCapReached,
    NegativeElement, ObservationExceedsPopulation, SumOutOfTolerance, TooLarge, ZeroDenominator,
    ZeroExpectedCount,
)
from .estimate import EBOLA_PARAMS, EbolaProblem, MCMCConfig, PriorSpec, ebola_prior, mcmc_chains, profile_em
from .experiments import bias_coverage
from .filtering import ObsX, ObsZ, filter_x, filter_z, filtered_mean_and_ci
from .io import (
    DataError, load_config, read_obs_csv, sha256, write_json, write_latent_csv, write_obs_csv,
    write_rows, write_transitions_csv,
)
from .models import COVID_COMPARTMENTS, SEIR_COMPARTMENTS, get_kernel, make_spec, seeded_pi0
from .simulate import make_rng, simulate_latent, simulate_obs_x, simulate_obs_z, simulate_until_extinction
from .smc import BANDS, derived_quantities, smc_draws
from .smoothing import smooth_x, smooth_z

log = logging.getLogger("epimult")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

CONFIG_ERRORS = (ConfigError, TooLarge, KeyError, TypeError)
DATA_ERRORS = (DataError, ObservationExceedsPopulation, CountExceedsPopulation, NegativeElement,
               SumOutOfTolerance)
NUMERICAL_ERRORS = (DegenerateUpdate, ZeroDenominator, ZeroExpectedCount, AllWeightsZero, HorizonCapReached)


# ---------------------------------------------------------------------------
# config helpers


def _need(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing {key!r}")
    return cfg[key]


def _schedule(values):
    """A per-step list becomes ``t -> values[t-1]`` (last value repeats)."""
    arr = np.asarray(values, dtype=float)
    return lambda t: arr[min(max(t, 1), arr.size) - 1]


def compartment_names(family: str, m: int):
    if family in ("seir", "ebola"):
        return SEIR_COMPARTMENTS
    if family == "covid":
        return COVID_COMPARTMENTS
    return tuple(f"x{i + 1}" for i in range(m))


def build_model(cfg):
    """``model: {family, n, theta, pi0 | seeds}`` -> ModelSpec."""
    model = _need(cfg, "model")
    family = _need(model, "family", "model")
    n = int(_need(model, "n", "model"))
    theta = dict(_need(model, "theta", "model"))
    for k in ("beta", "f"):
        if isinstance(theta.get(k), list):
            theta[k] = _schedule(theta[k])
    ks = get_kernel(family)
    if "pi0" in model:
        pi0 = model["pi0"]
    else:
        pi0 = seeded_pi0(ks.m, n, int(model.get("seed_compartment", 2)) - 1, float(model.get("seeds", 1.0)))
    return make_spec(family, n, pi0, theta)


def reporting(cfg, T: int, m: int, kind: str):
    """``reporting: [[i, j, q], ...]`` (or ``[[i, q], ...]``), 1-based, constant over time."""
    entries = cfg.get("reporting", [])
    shape = (m, m) if kind == "z" else (m,)
    Q = np.zeros(shape)
    for e in entries:
        *idx, q = e
        if len(idx) != len(shape):
            raise ConfigError(f"reporting entry {e} does not match observation kind {kind!r}")
        Q[tuple(int(i) - 1 for i in idx)] = float(q)
    return np.broadcast_to(Q, (T,) + shape)


def obs_kind(cfg) -> str:
    kind = cfg.get("observation", "z")
    if kind not in ("x", "z"):
        raise ConfigError("observation must be 'x' or 'z'")
    return kind


def load_obs(cfg, m: int, base: Path):
    path = Path(_need(cfg, "obs_file"))
    if not path.is_absolute():
        path = base / path
    obs = read_obs_csv(path, m, cfg.get("T"))
    if isinstance(obs, ObsZ) != (obs_kind(cfg) == "z"):
        raise DataError(f"{path} does not match observation kind {obs_kind(cfg)!r}")
    return obs


def grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.round(np.arange(spec["start"], spec["stop"] + 0.5 * spec["step"], spec["step"]), 12)
    return np.asarray(spec, dtype=float)


# ---------------------------------------------------------------------------
# commands; each returns {output name: path}


def cmd_simulate(cfg, out: Path, rng, threads) -> dict:
    spec = build_model(cfg)
    lat_ss, obs_ss = rng.spawn(2)
    x0 = cfg.get("x0")
    T = cfg.get("T", "extinction")
    if T == "extinction":
        transient = [int(i) - 1 for i in cfg.get("transient", [2, 3])]
        traj = simulate_until_extinction(spec, make_rng(lat_ss), x0, transient)
    else:
        traj = simulate_latent(spec, int(T), make_rng(lat_ss), x0)
    kind = obs_kind(cfg)
    Q = reporting(cfg, traj.T, spec.m, kind)
    if kind == "z":
        obs = ObsZ(simulate_obs_z(traj, Q, make_rng(obs_ss)), Q)
    else:
        obs = ObsX(simulate_obs_x(traj, Q, make_rng(obs_ss)), Q)
    names = compartment_names(cfg["model"]["family"], spec.m)
    return {
        "latent": write_latent_csv(out / "latent.csv", traj, names),
        "transitions": write_transitions_csv(out / "transitions.csv", traj),
        "observations": write_obs_csv(out / "obs.csv", obs),
    }


def cmd_filter(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    spec = build_model(cfg)
    obs = load_obs(cfg, spec.m, base)
    trace = filter_z(spec, obs) if isinstance(obs, ObsZ) else filter_x(spec, obs)
    level = float(cfg.get("level", 0.95))
    names = compartment_names(cfg["model"]["family"], spec.m)
    rows = []
    for t in range(1, trace.T + 1):
        mean, lo, hi = filtered_mean_and_ci(trace, t, level)
        rows += [(t, names[i], mean[i], lo[i], hi[i]) for i in range(spec.m)]
    return {
        "filter": write_rows(out / "filter.csv", ["t", "compartment", "mean", "lower", "upper"], rows),
        "loglik": write_rows(out / "loglik.csv", ["t", "log_w", "cum_loglik"],
                             zip(range(1, trace.T + 1), trace.log_w, trace.cum_loglik)),
    }


def cmd_smooth(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    spec = build_model(cfg)
    obs = load_obs(cfg, spec.m, base)
    names = compartment_names(cfg["model"]["family"], spec.m)
    n = spec.n
    if isinstance(obs, ObsZ):
        sm = smooth_z(filter_z(spec, obs))
        rows = [(s, names[i], n * sm.pi_smooth[s - 1, i]) for s in range(1, sm.T + 1) for i in range(spec.m)]
        trans = [(s, i + 1, j + 1, n * sm.P_smooth[s - 1, i, j])
                 for s in range(1, sm.T + 1) for i, j in np.argwhere(sm.P_smooth[s - 1] > 0)]
        return {
            "smooth": write_rows(out / "smooth.csv", ["t", "compartment", "mean"], rows),
            "smooth_transitions": write_rows(out / "smooth_transitions.csv", ["t", "i", "j", "mean"], trans),
        }
    sm = smooth_x(filter_x(spec, obs), spec)
    rows = [(s, names[i], n * sm.pi_smooth[s, i]) for s in range(sm.pi_smooth.shape[0]) for i in range(spec.m)]
    return {"smooth": write_rows(out / "smooth.csv", ["t", "compartment", "mean"], rows)}


def _ebola_problem(cfg, base):
    n = int(_need(cfg, "n"))
    obs = load_obs({**cfg, "observation": "z"}, 4, base)
    pi0 = cfg.get("pi0", seeded_pi0(4, n).tolist())
    return EbolaProblem.from_obs(obs, n, pi0, float(cfg.get("t_star", 130)), float(cfg.get("h", 1.0)))


def cmd_fit_em(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    problem = _ebola_problem(cfg, base)
    res = profile_em(problem, grid(_need(cfg, "beta_grid")), grid(_need(cfg, "lambda_grid")),
                     float(cfg.get("em_tolerance", 1e-6)), int(cfg.get("max_iters", 500)),
                     cfg.get("init"), bool(cfg.get("warm_start", False)))
    rows = []
    for a, beta in enumerate(res.beta_grid):
        for b, lam in enumerate(res.lambda_grid):
            fit = res.fits[a][b]
            th = fit.theta if fit else {}
            rows.append((beta, lam, res.loglik[a, b], *(th.get(k, float("nan")) for k in ("rho", "gamma", "q23", "q34"))))
    summary = {"theta": res.theta, "R0": res.R0, "loglik": res.loglik_max, "max_em_decrease": res.max_decrease}
    return {
        "estimate": write_json(out / "em_estimate.json", summary),
        "profile": write_rows(out / "profile.csv", ["beta", "lambda", "loglik", "rho", "gamma", "q23", "q34"], rows),
    }


def cmd_fit_mcmc(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    problem = _ebola_problem(cfg, base)
    prior_cfg = cfg.get("prior", "vague")
    prior = ebola_prior(prior_cfg) if isinstance(prior_cfg, str) else PriorSpec.from_dict(prior_cfg)
    config = MCMCConfig(int(_need(cfg, "iterations")), int(cfg.get("burn_in", 0)), int(cfg.get("thin", 1)),
                        cfg.get("proposal_sd"), int(rng.generate_state(1)[0]), cfg.get("init"))
    chains = mcmc_chains(problem, prior, config, int(cfg.get("chains", 1)), threads)
    outputs = {}
    report = []
    for k, ch in enumerate(chains):
        rows = (tuple(ch.samples[r]) + (ch.samples[r, 0] / ch.samples[r, 3], ch.log_post[r])
                for r in range(ch.samples.shape[0]))
        outputs[f"chain{k}"] = write_rows(out / f"mcmc_chain{k}.csv", [*EBOLA_PARAMS, "R0", "log_post"], rows)
        report.append({"acceptance": ch.acceptance, "proposal_sd": ch.proposal_sd, "summary": ch.summary()})
    outputs["summary"] = write_json(out / "mcmc_summary.json", {"prior": prior.to_dict(), "chains": report})
    return outputs


def cmd_smc(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    spec = build_model(cfg)
    obs = load_obs({**cfg, "observation": "z"}, spec.m, base)
    smc_ss, derived_ss = rng.spawn(2)
    draws, ess = smc_draws(spec, obs, float(_need(cfg, "sigma_V")), float(_need(cfg, "beta0")),
                           int(cfg.get("n_part", 3000)), int(cfg.get("runs", 100)),
                           int(cfg.get("draws_per_run", 1)), smc_ss, cfg.get("resampling", "multinomial"))
    dq = dict(_need(cfg, "derived"))
    onsets = {}
    for key in ("onset_wuhan", "onset_travel"):
        if key in dq:
            i, j = (int(v) - 1 for v in dq.pop(key))
            if not (0 <= i < spec.m and 0 <= j < spec.m):
                raise ConfigError(f"derived.{key} lies outside the {spec.m} compartments")
            onsets[key] = (i, j)
        elif spec.m != len(COVID_COMPARTMENTS):
            raise ConfigError(f"derived.{key} is required for models other than the covid preset")
    summary = derived_quantities(draws, dq, spec.n, make_rng(derived_ss),
                                 predictive_per_draw=int(cfg.get("predictive_per_draw", 1)), **onsets)
    rows = []
    for name, s in summary.items():
        for t in range(s.mean.shape[0]):
            rows.append((name, t + 1, s.mean[t], *s.bands[:, t]))
    header = ["series", "t", "mean"] + [f"q{100 * b:g}" for b in BANDS]
    ess_rows = [(r, t + 1, e) for r, trace in enumerate(ess) for t, e in enumerate(trace)]
    return {
        "summary": write_rows(out / "smc_summary.csv", header, rows),
        "ess": write_rows(out / "ess.csv", ["run", "t", "ess"], ess_rows),
    }


def cmd_bias_coverage(cfg, out: Path, rng, threads, base=Path(".")) -> dict:
    n_values = [int(v) for v in _need(cfg, "n_values")]
    reps = int(_need(cfg, "replicates"))
    T = int(_need(cfg, "T"))
    seeds = rng.spawn(len(n_values))

    def one(args):
        n, ss = args
        return bias_coverage(n, reps, T, ss, cfg.get("theta"), float(cfg.get("level", 0.95)))

    jobs = list(zip(n_values, seeds))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    rows = []
    for res in results:
        for t in range(T):
            for i, name in enumerate(SEIR_COMPARTMENTS):
                rows.append((res.n, t + 1, name, res.bias[t, i], res.coverage[t, i]))
    return {"bias_coverage": write_rows(out / "bias_coverage.csv",
                                        ["n", "t", "compartment", "bias", "coverage"], rows)}


COMMANDS: dict[str, Callable[..., dict]] = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "fit-em": cmd_fit_em,
    "fit-mcmc": cmd_fit_mcmc,
    "smc": cmd_smc,
    "bias-coverage": cmd_bias_coverage,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epimult", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run config or a previous manifest.json")
    p.add_argument("--seed", type=int, help="overrides the seed in the config")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replicates / chains")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if cfg.get("seed") is None:
            cfg["seed"] = int(np.random.SeedSequence().entropy % (2 ** 63))
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        base = Path(args.config).resolve().parent
        if "obs_file" in cfg and not Path(cfg["obs_file"]).is_absolute():
            # manifests store absolute paths so that reruns work from anywhere
            cfg["obs_file"] = str((base / cfg["obs_file"]).resolve())
        rng = np.random.SeedSequence(int(cfg["seed"]))
        fn = COMMANDS[args.command]
        kwargs = {} if args.command == "simulate" else {"base": base}
        outputs = fn(cfg, out, rng, max(1, args.threads), **kwargs)
        write_json(out / "manifest.json", {
            "manifest_version": 1,
            "package_version": __version__,
            "command": args.command,
            "config": cfg,
            "outputs": {k: {"file": Path(v).name, "sha256": sha256(v)} for k, v in outputs.items()},
        })
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
