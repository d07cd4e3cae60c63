"""Command-line pipeline: adapt -> sample -> report, plus oracle checks.

Each command takes an optional --config JSON file; flags override file
values.  Every command echoes its fully resolved configuration (with a
source tag per defaulted field) next to its outputs, and that echo can be
fed back as --config to the next stage.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bias import read_profile, write_profile
from .errors import ConfigError, NumericError
from .estimators import (RunReport, diagnostics, ef_numerical, expectation,
                         log_evidence_ratio, reweight)
from .model import (Observations, default_prior, load_observations,
                    mixture_target, toy_names, toy_target)
from .oracles import (binned_free_energy, log_evidence_bruteforce,
                      toy_coordinate_mean)
from .reaction import ReactionCoordinateSpec, default_interval, scheme_for
from .sampler import (AdaptConfig, ChainTrace, ProposalScales, adapt_run,
                      default_adapt_scales, default_sample_scales, sample_run,
                      state_columns)

SRC_USER = "user"
SRC_BUILTIN = "builtin-default"
SRC_REFERENCE = "reference-default"  # values mirroring the published runs


@dataclass
class PipelineConfig:
    data: str | None = None
    toy: str | None = None
    K: int = 3
    rc: str = "beta"
    zmin: float | None = None
    zmax: float | None = None
    nbins: int | None = None
    scheme: str | None = None
    clip: float | None = None
    iters: float = 1e7
    ncvg: float | None = None
    eps_stop: float = 0.01
    tmax: float = 1e7
    thin: float = 1e3
    chains: int = 1
    evidence_vs: int | None = None
    seed: int = 0
    out: str = "out"
    walk_in_max: float = 1e6
    adapt_tau_q: float | None = None
    adapt_tau_mu: float | None = None
    adapt_tau_v: float | None = None
    adapt_tau_beta: float | None = None
    adapt_family: str | None = None
    tau_q: float | None = None
    tau_mu: float | None = None
    tau_v: float | None = None
    tau_beta: float | None = None
    family: str | None = None


_FIELDS = {f.name for f in fields(PipelineConfig)}


def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {k: v for k, v in raw.items() if k in _FIELDS}


def _merge_config(args) -> tuple[PipelineConfig, dict]:
    """File values, overridden by flags; returns config + per-field source."""
    values = {}
    sources = {}
    if getattr(args, "config", None):
        for k, v in _load_config(args.config).items():
            values[k] = v
            sources[k] = SRC_USER
    for k in _FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
            sources[k] = SRC_USER
    return PipelineConfig(**values), sources


class _Resolved:
    """Fully resolved run inputs plus the annotated echo dict."""

    def __init__(self, cfg: PipelineConfig, sources: dict):
        self.cfg = cfg
        self.sources = dict(sources)
        if cfg.toy is not None and cfg.data is not None:
            raise ConfigError("give either --data or --toy, not both")
        self.obs = None
        self.prior = None
        if cfg.toy is not None:
            self.target = toy_target(cfg.toy)
            if "rc" not in self.sources:
                cfg.rc = "toy0"
                self.sources["rc"] = SRC_BUILTIN
        elif cfg.data is not None:
            self.obs = load_observations(cfg.data)
            self.prior = default_prior(self.obs, int(cfg.K))
            self.target = mixture_target(self.obs, self.prior)
        else:
            raise ConfigError("a dataset (--data) or toy target (--toy) is required")

        rc = cfg.rc
        toy_index = 0
        if rc.startswith("toy"):
            toy_index = int(rc[3:] or 0)
            rc_kind = "toy"
        else:
            rc_kind = rc
        if rc_kind == "toy" and self.target.is_mixture:
            raise ConfigError("toy coordinates only apply to --toy targets")

        if cfg.zmin is None or cfg.zmax is None:
            if rc_kind == "neglogpost":
                raise ConfigError(
                    "neglogpost has no a-priori coordinate interval; "
                    "supply --zmin and --zmax explicitly")
            if rc_kind == "toy":
                raise ConfigError("toy runs need --zmin/--zmax")
            zmin, zmax = default_interval(rc_kind, self.obs)
            cfg.zmin, cfg.zmax = zmin, zmax
            self.sources["zmin"] = self.sources["zmax"] = SRC_REFERENCE
        if cfg.nbins is None:
            cfg.nbins = 100
            self.sources["nbins"] = SRC_BUILTIN
        self.spec = ReactionCoordinateSpec(kind=rc_kind, z_min=float(cfg.zmin),
                                           z_max=float(cfg.zmax),
                                           n_bins=int(cfg.nbins),
                                           toy_index=toy_index)
        if cfg.scheme is None:
            cfg.scheme = scheme_for(rc_kind)
            self.sources["scheme"] = SRC_REFERENCE
        else:
            cfg.scheme = scheme_for(rc_kind, cfg.scheme)
        if cfg.clip is None:
            cfg.clip = 15.0 if rc_kind == "neglogpost" else math.inf
            self.sources["clip"] = SRC_BUILTIN
        if cfg.ncvg is None:
            cfg.ncvg = min(float(cfg.iters), 1e6)
            self.sources["ncvg"] = SRC_BUILTIN

    def adapt_scales(self) -> ProposalScales:
        cfg = self.cfg
        given = [cfg.adapt_tau_q, cfg.adapt_tau_mu, cfg.adapt_tau_v,
                 cfg.adapt_tau_beta]
        if self.target.is_mixture and all(v is None for v in given) \
                and cfg.adapt_family is None:
            base = default_adapt_scales(self.obs)
            self._note_scales("adapt", base, SRC_REFERENCE)
            return base
        base = default_adapt_scales(self.obs) if self.target.is_mixture \
            else ProposalScales(tau_mu=0.5, family="gaussian")
        out = ProposalScales(
            tau_q=cfg.adapt_tau_q if cfg.adapt_tau_q is not None else base.tau_q,
            tau_mu=cfg.adapt_tau_mu if cfg.adapt_tau_mu is not None else base.tau_mu,
            tau_v=cfg.adapt_tau_v if cfg.adapt_tau_v is not None else base.tau_v,
            tau_beta=cfg.adapt_tau_beta if cfg.adapt_tau_beta is not None else base.tau_beta,
            family=cfg.adapt_family or "gaussian")
        self._note_scales("adapt", out, None)
        return out

    def sample_scales(self) -> ProposalScales:
        cfg = self.cfg
        given = [cfg.tau_q, cfg.tau_mu, cfg.tau_v, cfg.tau_beta]
        if self.target.is_mixture and all(v is None for v in given) \
                and cfg.family is None:
            base = default_sample_scales(self.obs, self.prior)
            self._note_scales("sample", base, SRC_REFERENCE)
            return base
        base = default_sample_scales(self.obs, self.prior) \
            if self.target.is_mixture \
            else ProposalScales(tau_mu=0.5, family="cauchy")
        out = ProposalScales(
            tau_q=cfg.tau_q if cfg.tau_q is not None else base.tau_q,
            tau_mu=cfg.tau_mu if cfg.tau_mu is not None else base.tau_mu,
            tau_v=cfg.tau_v if cfg.tau_v is not None else base.tau_v,
            tau_beta=cfg.tau_beta if cfg.tau_beta is not None else base.tau_beta,
            family=cfg.family or "cauchy")
        self._note_scales("sample", out, None)
        return out

    def _note_scales(self, phase, scales: ProposalScales, src):
        prefix = "adapt_" if phase == "adapt" else ""
        names = ["tau_q", "tau_mu", "tau_v", "tau_beta"]
        fam = "adapt_family" if phase == "adapt" else "family"
        for n in names:
            key = prefix + n
            setattr(self.cfg, key, getattr(scales, n))
            self.sources.setdefault(key, src or SRC_USER)
        setattr(self.cfg, fam, scales.family)
        self.sources.setdefault(fam, src or SRC_USER)

    def echo(self, extra: dict | None = None) -> dict:
        out = dict(asdict(self.cfg))
        out["sources"] = {k: v for k, v in sorted(self.sources.items())
                          if v is not None}
        if extra:
            out["result"] = extra
        return out


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _outdir(cfg: PipelineConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_adapt(args) -> int:
    cfg, sources = _merge_config(args)
    r = _Resolved(cfg, sources)
    scales = r.adapt_scales()
    out = _outdir(cfg)
    acfg = AdaptConfig(total_iters=int(float(cfg.iters)),
                       check_interval=int(float(cfg.ncvg)),
                       epsilon_stop=float(cfg.eps_stop),
                       seed=int(cfg.seed),
                       walk_in_max=int(float(cfg.walk_in_max)))
    res = adapt_run(r.target, r.spec, cfg.scheme, scales, acfg)
    if math.isfinite(cfg.clip):
        res.grid.clip(float(cfg.clip))
    write_profile(res.grid, os.path.join(out, "bias.csv"))
    with open(os.path.join(out, "convergence.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("iter,delta,epsilon\n")
        for it, delta, eps in res.convergence:
            fh.write(f"{int(it)},{delta!r},{eps!r}\n")
    extra = {
        "iterations": res.iterations,
        "accepted": res.accepted,
        "acceptance_rate": res.accepted / max(1, res.iterations),
        "stopped_early": res.stopped_early,
        "ef_theoretical": res.grid.theoretical_ef(),
        "grid_checksum": res.grid.checksum(),
    }
    _write_json(os.path.join(out, "adapt_config.json"), r.echo(extra))
    print(f"adapt: {res.iterations} iterations, "
          f"acceptance {extra['acceptance_rate']:.3f}, "
          f"EF(theoretical) {extra['ef_theoretical']:.4f}, "
          f"early stop {res.stopped_early}")
    print(f"wrote {out}/bias.csv, {out}/convergence.csv")
    return 0


def _bias_path(args, cfg) -> str:
    return args.bias if getattr(args, "bias", None) else \
        os.path.join(cfg.out, "bias.csv")


def cmd_sample(args) -> int:
    cfg, sources = _merge_config(args)
    r = _Resolved(cfg, sources)
    scales = r.sample_scales()
    out = _outdir(cfg)
    grid = read_profile(_bias_path(args, cfg), r.spec)
    trace = sample_run(r.target, grid, scales, t_max=int(float(cfg.tmax)),
                       thin=int(float(cfg.thin)), seed=int(cfg.seed))
    trace.to_csv(os.path.join(out, "trace.csv"))
    extra = {
        "records": len(trace),
        "grid_checksum": grid.checksum(),
    }
    _write_json(os.path.join(out, "sample_config.json"), r.echo(extra))
    print(f"sample: {len(trace)} records -> {out}/trace.csv")
    return 0


def _sample_chain_job(payload: str) -> str:
    """Worker for --chains: one sampling run, trace written to disk."""
    spec = json.loads(payload)
    cfg = PipelineConfig(**spec["cfg"])
    r = _Resolved(cfg, {})
    grid = read_profile(spec["bias"], r.spec)
    scales = ProposalScales(**spec["scales"])
    trace = sample_run(r.target, grid, scales, t_max=int(float(cfg.tmax)),
                       thin=int(float(cfg.thin)),
                       seed=(int(cfg.seed), spec["chain"]))
    path = spec["trace_path"]
    trace.to_csv(path)
    return path


def _run_chains(r: _Resolved, bias_path: str, scales: ProposalScales,
                n_chains: int, out: str) -> list[str]:
    jobs = []
    for i in range(n_chains):
        payload = {
            "cfg": asdict(r.cfg),
            "bias": bias_path,
            "scales": asdict(scales),
            "chain": i,
            "trace_path": os.path.join(out, f"trace_chain{i}.csv"),
        }
        jobs.append(json.dumps(payload))
    if n_chains == 1:
        return [_sample_chain_job(jobs[0])]
    workers = min(n_chains, os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sample_chain_job, jobs))


def _merge_traces(traces: list[ChainTrace], spec) -> ChainTrace:
    return ChainTrace(
        iters=np.concatenate([t.iters for t in traces]),
        xi=np.concatenate([t.xi for t in traces]),
        potential=np.concatenate([t.potential for t in traces]),
        bias=np.concatenate([t.bias for t in traces]),
        states=np.concatenate([t.states for t in traces]),
        columns=traces[0].columns,
        spec=spec,
    )


def cmd_report(args) -> int:
    cfg, sources = _merge_config(args)
    r = _Resolved(cfg, sources)
    out = _outdir(cfg)
    bias_path = _bias_path(args, cfg)
    grid = read_profile(bias_path, r.spec)

    seeds: list
    if getattr(args, "trace", None) and int(cfg.chains) <= 1:
        trace_paths = [args.trace]
        seeds = [int(cfg.seed)]
    else:
        scales = r.sample_scales()
        trace_paths = _run_chains(r, bias_path, scales, int(cfg.chains), out)
        seeds = [[int(cfg.seed), i] for i in range(int(cfg.chains))]

    traces = [ChainTrace.from_csv(p, spec=r.spec) for p in trace_paths]
    samples = [reweight(t, grid) for t in traces]
    pooled_trace = _merge_traces(traces, r.spec)
    pooled = reweight(pooled_trace, grid)

    expectations = {}
    if r.target.is_mixture:
        k = r.target.K
        states = pooled.trace.states
        expectations["beta"] = expectation(pooled, states[:, -1])
        mu = states[:, k - 1 : 2 * k - 1]
        mu_sorted = np.sort(mu, axis=1)
        for j in range(k):
            expectations[f"mu_sorted_{j + 1}"] = expectation(pooled, mu_sorted[:, j])
    else:
        for j, name in enumerate(state_columns(r.target)):
            expectations[name] = expectation(pooled, pooled.trace.states[:, j])

    evidence = {}
    excluded = None
    if cfg.evidence_vs is not None:
        if not r.target.is_mixture:
            raise ConfigError("evidence ratios need a mixture target")
        k = r.target.K
        if int(cfg.evidence_vs) != k - 1:
            raise ConfigError("--evidence-vs currently supports K-1 only")
        prior_m1 = default_prior(r.obs, k - 1)
        target_m1 = mixture_target(r.obs, prior_m1)
        ev = log_evidence_ratio(samples, r.target, target_m1)
        evidence[f"log_Z{k}_over_Z{k - 1}"] = {
            "estimate": ev.estimate,
            "std_error": ev.std_error,
            "per_chain": [float(v) for v in ev.per_chain],
            "excluded_records": ev.excluded,
        }
        excluded = ev.excluded

    diag = diagnostics(pooled_trace, r.spec)
    report = RunReport(
        ef_numerical=ef_numerical(pooled),
        ef_theoretical=grid.theoretical_ef(),
        posterior_expectations=expectations,
        log_evidence_ratios=evidence,
        switch_count=diag.switch_count,
        xi_uniformity_stat=diag.xi_uniformity_stat,
        label_symmetry_stat=diag.label_symmetry_stat,
        seeds=seeds,
        config=r.echo(),
    )
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(f"report: EF {report.ef_numerical:.4f} (numerical) / "
          f"{report.ef_theoretical:.4f} (theoretical); "
          f"switches {report.switch_count}; "
          f"records {len(pooled)}")
    if evidence:
        for name, ev in evidence.items():
            print(f"{name}: {ev['estimate']:.4f} +/- {ev['std_error']:.4f}"
                  f" ({excluded} records excluded)")
    print(f"wrote {out}/report.json")
    return 0


def cmd_oracle(args) -> int:
    which = args.which
    result: dict
    if which == "evidence":
        if not args.data:
            raise ConfigError("oracle evidence needs --data")
        obs = load_observations(args.data)
        k = int(args.K)
        logz_k = log_evidence_bruteforce(obs, default_prior(obs, k))
        logz_m1 = log_evidence_bruteforce(obs, default_prior(obs, k - 1)) \
            if k >= 2 else None
        result = {"log_Z_K": logz_k, "K": k}
        if logz_m1 is not None:
            result["log_Z_Km1"] = logz_m1
            result["log_ratio"] = logz_k - logz_m1
    elif which == "free-energy":
        if not args.toy or args.zmin is None or args.zmax is None:
            raise ConfigError("oracle free-energy needs --toy, --zmin, --zmax")
        target = toy_target(args.toy)
        spec = ReactionCoordinateSpec(kind="toy", z_min=float(args.zmin),
                                      z_max=float(args.zmax),
                                      n_bins=int(args.nbins or 100))
        prof = binned_free_energy(target, spec)
        result = {
            "toy": args.toy,
            "z_mid": [float(v) for v in spec.midpoints()],
            "A": [float(v) for v in prof],
        }
    elif which == "toy-mean":
        if not args.toy:
            raise ConfigError("oracle toy-mean needs --toy")
        result = {"toy": args.toy,
                  "coordinate_mean": toy_coordinate_mean(toy_target(args.toy))}
    else:
        raise ConfigError(f"unknown oracle {which!r}")
    text = json.dumps(result, indent=2)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--data", help="dataset file, one number per line")
    p.add_argument("--toy", help=f"toy target ({', '.join(toy_names())})")
    p.add_argument("--K", type=int, help="number of mixture components")
    p.add_argument("--rc", help="reaction coordinate: beta, q1, mu1, "
                               "neglogpost, or toyN")
    p.add_argument("--zmin", type=float, help="coordinate window lower edge")
    p.add_argument("--zmax", type=float, help="coordinate window upper edge")
    p.add_argument("--nbins", type=int, help="number of coordinate bins")
    p.add_argument("--seed", type=int, help="RNG seed (64-bit)")
    p.add_argument("--out", help="output directory")


def _add_scales(p, prefix=""):
    for name in ("tau-q", "tau-mu", "tau-v", "tau-beta"):
        p.add_argument(f"--{prefix}{name}", type=float,
                       dest=(prefix + name).replace("-", "_"))
    p.add_argument(f"--{prefix}family", choices=["gaussian", "cauchy"],
                   dest=(prefix + "family").replace("-", "_"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="abmix",
        description="Adaptive-bias MCMC for multimodal mixture posteriors")
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("adapt", help="learn the bias profile")
    _add_common(pa)
    pa.add_argument("--scheme", choices=["abf", "abp"])
    pa.add_argument("--iters", type=float, help="adaptive iterations (1e9 ok)")
    pa.add_argument("--ncvg", type=float, help="iterations between checks")
    pa.add_argument("--eps-stop", type=float, dest="eps_stop")
    pa.add_argument("--clip", type=float, help="profile clamp range (nats)")
    pa.add_argument("--walk-in-max", type=float, dest="walk_in_max")
    _add_scales(pa, "adapt-")
    pa.set_defaults(func=cmd_adapt)

    ps = sub.add_parser("sample", help="sample the frozen-bias posterior")
    _add_common(ps)
    ps.add_argument("--bias", help="bias profile CSV (default OUT/bias.csv)")
    ps.add_argument("--tmax", type=float, help="sampling iterations")
    ps.add_argument("--thin", type=float, help="trace thinning stride")
    _add_scales(ps)
    ps.set_defaults(func=cmd_sample)

    pr = sub.add_parser("report", help="reweight and summarize")
    _add_common(pr)
    pr.add_argument("--bias", help="bias profile CSV (default OUT/bias.csv)")
    pr.add_argument("--trace", help="existing trace CSV (else chains are run)")
    pr.add_argument("--tmax", type=float)
    pr.add_argument("--thin", type=float)
    pr.add_argument("--chains", type=int,
                    help="independent sampling chains with derived seeds")
    pr.add_argument("--evidence-vs", type=int, dest="evidence_vs",
                    help="also estimate log Z_K / Z_{K-1}")
    _add_scales(pr)
    pr.set_defaults(func=cmd_report)

    po = sub.add_parser("oracle", help="run brute-force reference computations")
    po.add_argument("which", choices=["evidence", "free-energy", "toy-mean"])
    po.add_argument("--data")
    po.add_argument("--K", type=int, default=2)
    po.add_argument("--toy")
    po.add_argument("--zmin", type=float)
    po.add_argument("--zmax", type=float)
    po.add_argument("--nbins", type=int)
    po.add_argument("--out-file", dest="out_file")
    po.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
