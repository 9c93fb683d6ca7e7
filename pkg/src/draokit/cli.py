"""Command-line front end.

Subcommands:
  solve <config.json>        run one method on one instance, write CSV + summary
  bench <plan.json>          sweep table reproducing the experiment layout
  lowerbound [...]           build a hard instance, run every solver, certify
  verify-prox [...]          kernel-vs-oracle residual report

All inputs are JSON documents, all outputs CSV/JSON with full-precision
numerics.  Exit codes: 0 ok, 2 config error, 3 certification failure,
4 numerical failure.  DRAOKIT_THREADS caps bench parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import applications, hard_instances, solvers
from .applications import (ambiguity_from_spec, gen_linreg, gen_two_stage,
                           reference_optimum, with_ambiguity)
from .hard_instances import (certify_confinement, lower_bound_instance_lipschitz,
                             lower_bound_instance_smooth, make_huber_chain,
                             make_strong_chain, make_two_worker_ns,
                             make_two_worker_smooth, strong_chain_dist_floor,
                             two_worker_ns_gap_floor, two_worker_smooth_gap_floor)
from .network import CommPolicy, StarNetwork
from .problem import RiskAverseProblem
from .solvers import SOLVERS, build_schedule, tune_trial_stepsizes
from .verify import verify_prox

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERT = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


# ---------------------------------------------------------------------------
# instance construction from config documents
# ---------------------------------------------------------------------------

def build_instance(spec: dict):
    """Return (problem, instance_or_None) from a generator descriptor or
    an inline problem document."""
    if "generator" not in spec:
        return RiskAverseProblem.from_document(spec), None
    gen = spec["generator"]
    family = _require(gen, "family")
    if family == "linreg":
        return gen_linreg(m=int(_require(gen, "m")), n=int(gen.get("n", 40)),
                          s=int(gen.get("s", 200)),
                          alpha=float(gen.get("alpha", 0.0)),
                          ambiguity=gen.get("ambiguity", "simplex"),
                          seed=int(gen.get("seed", 0))), None
    if family == "two-stage":
        return gen_two_stage(m=int(_require(gen, "m")), n=int(gen.get("n", 40)),
                             l=int(gen.get("l", 20)),
                             alpha=float(gen.get("alpha", 0.0)),
                             ambiguity=gen.get("ambiguity", "simplex"),
                             seed=int(gen.get("seed", 0))), None
    if family == "huber-chain":
        inst = make_huber_chain(int(_require(gen, "n")),
                                float(gen.get("tau", 1.0)),
                                float(gen.get("gamma", 1.0)),
                                int(gen.get("diam", 2)))
        return inst.problem, inst
    if family == "two-worker-smooth":
        inst = make_two_worker_smooth(int(gen.get("k", 4)),
                                      float(gen.get("beta", 1.0)),
                                      float(gen.get("gamma", 1.0)))
        return inst.problem, inst
    if family == "strong-chain":
        inst = make_strong_chain(float(gen.get("alpha", 1.0)),
                                 float(gen.get("beta", 11.0)),
                                 gen.get("n_trunc"))
        return inst.problem, inst
    if family == "two-worker-ns":
        inst = make_two_worker_ns(int(gen.get("k", 4)),
                                  float(gen.get("alpha", 1.0)),
                                  float(gen.get("gamma_A", 1.0)),
                                  float(gen.get("gamma_pi", 1.0)))
        return inst.problem, inst
    raise ConfigError(f"unknown generator family {family!r}")


def _schedule_from_config(problem, method: str, cfg: dict):
    sch = cfg.get("schedule", {})
    r0 = sch.get("r0")
    if r0 is None:
        r0 = problem.known_constants.get("R_0") or math.sqrt(problem.n)
    if sch.get("tune"):
        return tune_trial_stepsizes(problem, trial_phases=int(sch.get("trial_phases", 20)),
                                    method=method, r0=float(r0),
                                    d_p=sch.get("d_p"))
    return build_schedule(problem, method, r0=float(r0), d_p=sch.get("d_p"),
                          delta_factor=cfg.get("delta"),
                          scale_main=float(sch.get("scale_main", 1.0)),
                          scale_mu=float(sch.get("scale_mu", 1.0)))


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(config_path: str, out_dir: str | None = None) -> int:
    with open(config_path) as fh:
        cfg = json.load(fh)
    method = _require(cfg, "method")
    if method not in SOLVERS:
        raise ConfigError(f"unknown method {method!r}")
    n_phases = int(_require(cfg, "N"))
    problem, _ = build_instance(_require(cfg, "problem"))
    schedule = _schedule_from_config(problem, method, cfg)
    policy = (CommPolicy(**cfg["comm_policy"]) if "comm_policy" in cfg
              else CommPolicy.standard())
    network = StarNetwork(problem.m, track_span=bool(cfg.get("track_span", False)))
    kwargs = {}
    if method == "drao":
        kwargs["inner_tol"] = float(cfg.get("inner_tol", 1e-10))
    report = SOLVERS[method](problem, schedule, n_phases, network,
                             policy=policy, **kwargs)
    out_dir = out_dir or cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    report.write_csv(csv_path)
    summary = {
        "config": cfg,
        "method": method,
        "final_obj": report.final_objective(),
        "f_star_known": (problem.known_optimum.f_star
                         if problem.known_optimum else None),
        "counters": report.counters,
        "schedule": report.schedule,
        "policy": report.policy,
        "flags": report.flags,
        "wall_time": report.wall_time,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    print(f"wrote {csv_path} (final obj {report.final_objective():.12g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _risk_sets(plan: dict):
    risk = plan.get("risk", {"variant": "cvar", "levels": [0.10, 0.05, 0.0125]})
    variant = risk.get("variant", "cvar")
    key = "delta" if variant == "cvar" else "radius"
    return [(f"{variant}:{lvl}", {"variant": variant, key: lvl})
            for lvl in risk["levels"]]


def _bench_cell(problem, method, schedule, ref, targets, phase_cap):
    """Rounds/projections at the first phase reaching each relative-gap target."""
    rep = SOLVERS[method](problem, schedule, phase_cap, StarNetwork(problem.m),
                          store_iterates=False)
    out = {}
    for target in targets:
        hit = None
        for rec in rep.phases:
            if ref.relative_gap(rec.obj) <= target:
                hit = (rec.rounds, rec.p_proj)
                break
        out[target] = hit
    return out


def cmd_bench(plan_path: str, out_path: str | None = None) -> int:
    with open(plan_path) as fh:
        plan = json.load(fh)
    family = _require(plan, "family")
    if family not in ("linreg", "two-stage"):
        raise ConfigError(f"unknown bench family {family!r}")
    m_values = plan.get("m", [20, 50, 200])
    targets = plan.get("targets", [0.10, 0.01])
    if any(targets[i] <= targets[i + 1] for i in range(len(targets) - 1)):
        raise ConfigError("targets must be strictly decreasing")
    reps = int(plan.get("reps", 5))
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    methods = plan.get("methods", ["drao-s", "sd"] if family == "two-stage"
                       else ["drao-s"])
    phase_cap = int(plan.get("phase_cap", 5000))
    base_seed = int(plan.get("base_seed", 20240501))
    alpha = float(plan.get("alpha", 0.0))
    n = int(plan.get("n", 40))
    ref_budget = int(plan.get("ref_budget", 1200))
    ref_polish = int(plan.get("ref_polish", 20000))
    risks = _risk_sets(plan)

    def gen(m, rep_idx):
        seed = base_seed + rep_idx
        if family == "linreg":
            return gen_linreg(m=m, n=n, alpha=alpha, ambiguity="simplex",
                              seed=seed)
        return gen_two_stage(m=m, n=n, alpha=alpha, ambiguity="simplex",
                             seed=seed)

    jobs = []
    for m in m_values:
        for rep_idx in range(reps):
            jobs.append((m, rep_idx))

    def run_job(job):
        m, rep_idx = job
        base = gen(m, rep_idx)
        cell = {}
        for risk_label, risk_spec in risks:
            problem = with_ambiguity(base, risk_spec)
            r0 = problem.known_constants.get("R_0") or math.sqrt(problem.n)
            ref = reference_optimum(problem, budget=ref_budget,
                                    polish_steps=ref_polish, r0=r0)
            for method in methods:
                sched = tune_trial_stepsizes(problem, method=method, r0=r0)
                cell[(risk_label, method)] = _bench_cell(
                    problem, method, sched, ref, targets, phase_cap)
        return job, cell

    max_workers = max(1, int(os.environ.get("DRAOKIT_THREADS", "1")))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = dict(pool.map(run_job, jobs))
    else:
        results = dict(map(run_job, jobs))

    rows = [["family", "m", "risk", "target", "method", "avg_rounds",
             "avg_p_proj"]]
    for m in m_values:
        for risk_label, _ in risks:
            for target in targets:
                for method in methods:
                    hits = [results[(m, r)][(risk_label, method)][target]
                            for r in range(reps)]
                    if any(h is None for h in hits):
                        rows.append([family, m, risk_label, target, method,
                                     "NA", "NA"])
                    else:
                        avg_rounds = sum(h[0] for h in hits) / reps
                        avg_proj = sum(h[1] for h in hits) / reps
                        rows.append([family, m, risk_label, target, method,
                                     _fmt(avg_rounds), _fmt(avg_proj)])
    out_path = out_path or plan.get("output", "bench.csv")
    with open(out_path, "w") as fh:
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")
    print(f"wrote {out_path} ({len(rows) - 1} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# lowerbound
# ---------------------------------------------------------------------------

def _chain_certification(inst, k: int, writer) -> bool:
    """Run every solver on the chain; assert the k-trip gap floor and the
    trailing-zero confinement."""
    diam = inst.graph_diameter
    round_budget = k * diam
    ok_all = True
    for method in ("drao", "drao-s", "sd"):
        policy = (CommPolicy.dpm_strict() if method == "drao"
                  else CommPolicy.standard())
        if diam > 2:
            policy = CommPolicy.linear_graph(diam)
        per = {"drao": policy.rounds_per_drao_iteration,
               "drao-s": policy.rounds_per_draos_phase,
               "sd": policy.rounds_per_sd_iteration}[method]
        phases = max(1, round_budget // per)
        network = StarNetwork(inst.problem.m, track_span=True)
        sched = build_schedule(inst.problem, method,
                               r0=inst.problem.known_constants["R_0"])
        report = SOLVERS[method](inst.problem, sched, phases, network,
                                 policy=policy, store_iterates=False)
        in_budget = [r for r in report.phases if r.rounds <= round_budget]
        measured = min(r.gap for r in in_budget) if in_budget else math.inf
        floor = inst.floor
        conf = certify_confinement(inst, network)
        ok = (measured >= floor - 1e-12) and conf.ok()
        ok_all = ok_all and ok
        writer([method, k, report.counters["rounds"], _fmt(measured),
                _fmt(floor), str(conf.ok()).lower()])
    return ok_all


def _two_worker_certification(family: str, args, writer) -> bool:
    rounds_target = int(args.rounds)
    ok_all = True
    if family == "two-worker-sm":
        inst = make_two_worker_smooth(int(args.k), 1.0, 1.0)
    elif family == "two-worker-ns":
        inst = make_two_worker_ns(int(args.k), 1.0, 1.0, 1.0)
    else:
        inst = make_strong_chain(1.0, 11.0)
    problem = inst.problem
    for method in ("drao-s", "sd"):
        per = 2 if method == "drao-s" else 1
        phases = max(1, rounds_target // per)
        network = StarNetwork(problem.m, track_span=True)
        sched = build_schedule(problem, method,
                               r0=problem.known_constants["R_0"])
        report = SOLVERS[method](problem, sched, phases, network,
                                 store_iterates=False)
        conf = certify_confinement(inst, network)
        t = report.counters["rounds"]
        k_eff = math.ceil(t / 2) + 2
        if family == "two-worker-sm":
            floor = two_worker_smooth_gap_floor(inst, k_eff)
            measured = report.phases[-1].gap
        elif family == "two-worker-ns":
            floor = (two_worker_ns_gap_floor(inst)
                     if k_eff <= inst.k else 0.0)
            measured = report.phases[-1].gap
        else:
            floor = strong_chain_dist_floor(inst, k_eff)
            measured = report.phases[-1].dist ** 2
        ok = conf.ok() and measured >= floor - 1e-9
        ok_all = ok_all and ok
        writer([method, args.k, t, _fmt(measured), _fmt(floor),
                str(conf.ok()).lower()])
    return ok_all


def cmd_lowerbound(args) -> int:
    out_path = args.output
    rows = [["method", "k", "rounds", "measured_gap", "analytic_floor",
             "confinement_ok"]]
    ok = True
    writer = rows.append
    if args.family == "smooth":
        inst = lower_bound_instance_smooth(args.lf, args.rx, args.diam, args.k)
        ok = _chain_certification(inst, args.k, writer)
    elif args.family == "lipschitz":
        inst = lower_bound_instance_lipschitz(args.mf, args.rx, args.diam,
                                              args.k)
        ok = _chain_certification(inst, args.k, writer)
    elif args.family in ("two-worker-sm", "two-worker-ns", "strong"):
        ok = _two_worker_certification(args.family, args, writer)
    else:
        raise ConfigError(f"unknown lower-bound family {args.family!r}")
    with open(out_path, "w") as fh:
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")
    print(f"wrote {out_path}")
    if not ok:
        bad = [r for r in rows[1:] if r[-1] == "false"
               or (r[3] != "NA" and float(r[3]) < float(r[4]) - 1e-12)]
        print(f"certification FAILED: {bad}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-prox
# ---------------------------------------------------------------------------

def cmd_verify_prox(seed: int, trials: int, inject: float = 0.0) -> int:
    suites = verify_prox(seed=seed, trials=trials, inject=inject)
    ok = True
    for s in suites:
        status = "pass" if s.passed else "FAIL"
        print(f"{s.name}: {status} (trials={s.trials}, "
              f"max residual {s.max_residual:.3e}, tol {s.tolerance:.0e})")
        ok = ok and s.passed
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="draokit",
                                description="distributed risk-averse "
                                            "optimization toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one method on one instance")
    ps.add_argument("config")
    ps.add_argument("--out-dir", default=None)

    pb = sub.add_parser("bench", help="run a sweep plan")
    pb.add_argument("plan")
    pb.add_argument("--output", default=None)

    pl = sub.add_parser("lowerbound", help="hard-instance certification")
    pl.add_argument("--family", default="smooth",
                    choices=["smooth", "lipschitz", "two-worker-sm",
                             "two-worker-ns", "strong"])
    pl.add_argument("--k", type=int, default=4)
    pl.add_argument("--lf", type=float, default=1.0)
    pl.add_argument("--mf", type=float, default=1.0)
    pl.add_argument("--rx", type=float, default=1.0)
    pl.add_argument("--diam", type=int, default=2)
    pl.add_argument("--rounds", type=int, default=40,
                    help="round budget for the two-worker certifications")
    pl.add_argument("--output", default="lowerbound.csv")

    pv = sub.add_parser("verify-prox", help="kernel-vs-oracle residuals")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--trials", type=int, default=1000)
    pv.add_argument("--inject", type=float, default=0.0,
                    help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out_dir)
        if args.command == "bench":
            return cmd_bench(args.plan, args.output)
        if args.command == "lowerbound":
            return cmd_lowerbound(args)
        if args.command == "verify-prox":
            return cmd_verify_prox(args.seed, args.trials, args.inject)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical failures surface as exit 4
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
