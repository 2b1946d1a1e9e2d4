"""Command-line entry point ``adaptrial``.

Exit codes: 0 success, 2 usage or input error, 3 infeasible problem or
solver failure, 4 the trial stops for futility.

Sample sizes are continuous internally. Reports add the implementable
integer version, ceil(n), together with the critical value that spends the
same conditional error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import power
from .designs import (
    SingleStageDesign,
    TwoStageDesign,
    c_of,
    conditional_error,
    n_of,
    operating_characteristics,
    predictive_power_design,
    rounded_n_c,
    single_stage_as_two_stage,
)
from .documents import DesignDocument, DocumentError
from .optimal import OptimizerConfig, optimize_two_stage
from .planners import (
    InfeasibleError,
    NaiveRecalcPolicy,
    conditional_critical_value,
    naive_adaptive_design,
    naive_recalc_pointwise,
    single_stage_sample_size,
    standardized_threshold,
)
from .recalc import (
    RevisedScenario,
    conditional_error_early,
    conditional_pp_target,
    default_n_cap,
    recalc_fixed_type2,
    recalc_lambda,
    shifted_prior,
)
from .simulation import SimConfig, simulate_two_stage
from .stats_core import TruncatedNormalPrior

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FUTILITY = 0, 2, 3, 4


class UsageError(Exception):
    """Input that parses but makes no sense; maps to exit code 2."""


def _num(x) -> str:
    return repr(float(x))


def _emit(args, record: dict, title: str) -> None:
    if getattr(args, "json", False):
        safe = {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in record.items()}
        print(json.dumps(safe, indent=2, allow_nan=False))
        return
    print(title)
    width = max(len(k) for k in record)
    for k, v in record.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"  {k:<{width}}  {v}")


def _add_prior_flags(p, required=True):
    p.add_argument("--prior-mu", type=float, required=required)
    p.add_argument("--prior-sigma", type=float, required=required)
    p.add_argument("--prior-lower", type=float, required=required)
    p.add_argument("--prior-upper", type=float, required=required)


def _prior_from_flags(args) -> TruncatedNormalPrior:
    return TruncatedNormalPrior(args.prior_mu, args.prior_sigma, args.prior_lower, args.prior_upper)


def _prior_for(args, doc: DesignDocument) -> TruncatedNormalPrior:
    if getattr(args, "prior_mu", None) is not None:
        base = doc.prior
        fields = {k: getattr(args, f"prior_{k}") for k in ("mu", "sigma", "lower", "upper")}
        if base is None and any(v is None for v in fields.values()):
            raise UsageError("design document has no prior; pass all --prior-* flags")
        merged = {k: (v if v is not None else getattr(base, k)) for k, v in fields.items()}
        return TruncatedNormalPrior(**merged)
    if doc.prior is None:
        raise UsageError("design document has no prior; pass --prior-* flags")
    return doc.prior


def _oc_record(oc) -> dict:
    return {k: float(v) for k, v in oc.as_dict().items() if k != "standard_errors"}


# -- design ------------------------------------------------------------------

def _naive_design_doc(args) -> tuple[DesignDocument, dict]:
    base_doc = DesignDocument.load(args.base)
    base = base_doc.design
    if not isinstance(base, SingleStageDesign):
        raise UsageError("--base must be a single-stage design document")
    prior = _prior_for(args, base_doc)
    policy = NaiveRecalcPolicy(args.beta_cond, args.n_min, args.n_max, prior, base, float(args.m))
    design = naive_adaptive_design(policy)
    oc = operating_characteristics(design, prior)
    oc_int = operating_characteristics(design, prior, integer_n=True)
    doc = DesignDocument.create(
        design, prior,
        {"beta_cond": args.beta_cond, "n_min": args.n_min, "n_max": args.n_max, "base_n": base.n, "base_c": base.c},
        characteristics={**_oc_record(oc), "integer_n": _oc_record(oc_int)},
    )
    record = {"m": design.m, "f": design.f, **_oc_record(oc), "expected_n_integer": oc_int.expected_n}
    return doc, record


def cmd_design(args) -> int:
    if args.kind == "naive":
        doc, record = _naive_design_doc(args)
        if args.out:
            doc.save(args.out)
        _emit(args, record, "naive design")
        return EXIT_OK
    prior = _prior_from_flags(args)
    if args.kind == "single-stage":
        design = single_stage_sample_size(prior, args.alpha, args.ep_target)
        oc = operating_characteristics(design, prior)
        doc = DesignDocument.create(
            design, prior, {"alpha": args.alpha, "ep_target": args.ep_target},
            characteristics=_oc_record(oc),
        )
        record = {"n": design.n, "c": design.c, **_oc_record(oc)}
    else:
        config = OptimizerConfig(
            alpha=args.alpha,
            beta=args.beta,
            pivot_count=args.pivots,
            m_bounds=(args.m_min, args.m_max),
            seed=args.seed,
            n_starts=args.starts,
        )
        result = optimize_two_stage(prior, config)
        design = result.design
        oc = result.characteristics
        oc_int = operating_characteristics(design, prior, integer_n=True) if isinstance(design, TwoStageDesign) else oc
        chars = {**_oc_record(oc), "integer_n": _oc_record(oc_int), "certified": result.certified}
        doc = DesignDocument.create(
            design, prior, {"alpha": args.alpha, "beta": args.beta},
            solver_config=config.to_dict(), characteristics=chars,
        )
        record = {"m": getattr(design, "m", getattr(design, "n", None)), **_oc_record(oc),
                  "expected_n_integer": oc_int.expected_n, "certified": result.certified}
        if isinstance(design, TwoStageDesign):
            record.update(f=design.f, e=design.e)
    if args.out:
        doc.save(args.out)
    _emit(args, record, f"{args.kind} design")
    return EXIT_OK


# -- monitor -----------------------------------------------------------------

def _integer_stage(m, z, n, c):
    """ceil(n) and the critical value keeping the conditional error of (n, c)."""
    if not math.isfinite(c) or n <= m:
        return float(n), c
    n_int = float(max(math.ceil(n - 1e-9), math.floor(m) + 1))
    q = float(standardized_threshold(m, n, z, c))
    return n_int, float(conditional_critical_value(m, n_int, z, q))


def _final_stage(design, m, z):
    """(n, c, region) the design prescribes after observing ``z`` at ``m``."""
    if isinstance(design, SingleStageDesign):
        if not 0 < m < design.n:
            raise UsageError(f"need 0 < m < n={design.n}")
        return design.n, design.c, "continue"
    if m != design.m:
        raise UsageError(f"two-stage design has its interim at m={design.m}")
    if z <= design.f:
        return design.m, math.inf, "futility"
    if z >= design.e:
        return design.m, -math.inf, "efficacy"
    return float(n_of(design, z)), float(c_of(design, z)), "continue"


def cmd_monitor(args) -> int:
    doc = DesignDocument.load(args.design)
    prior = _prior_for(args, doc)
    design = doc.design
    m = float(args.m) if args.m is not None else getattr(design, "m", None)
    if m is None:
        raise UsageError("--m is required for a single-stage design")
    n, c, region = _final_stage(design, m, args.zm)
    theta1 = args.theta1 if args.theta1 is not None else prior.mu
    obs = power.InterimObservation(m, args.zm)
    post_mu, post_sd = power.posterior_params(prior, m, args.zm)
    if region == "continue":
        acp = power.assumed_cp(obs, n, c, theta1)
        ocp = power.observed_cp(obs, n, c)
        pp = power.predictive_power(prior, obs, n, c)
    else:
        acp = ocp = pp = 1.0 if region == "efficacy" else 0.0
    n_int, c_int = _integer_stage(m, args.zm, n, c)
    record = {
        "m": m, "z_m": args.zm, "theta1": theta1, "region": region, "n": n, "c": c,
        "n_integer": n_int, "c_integer": c_int,
        "acp": float(acp), "ocp": float(ocp), "pp": float(pp),
        "posterior_mu": float(post_mu), "posterior_sigma": float(post_sd),
    }
    _emit(args, record, "interim monitoring")
    return EXIT_OK


# -- recalc ------------------------------------------------------------------

def cmd_recalc(args) -> int:
    doc = DesignDocument.load(args.design)
    prior = _prior_for(args, doc)
    if args.method == "naive":
        base = doc.design
        if not isinstance(base, SingleStageDesign):
            raise UsageError("naive recalculation starts from a single-stage design")
        policy = NaiveRecalcPolicy(args.beta_cond, args.n_min, args.n_max, prior, base, float(args.m))
        res = naive_recalc_pointwise(policy, args.zm)
        pp_before = float(power.predictive_power(prior, power.InterimObservation(float(args.m), args.zm), base.n, base.c))
        m_used = float(args.m)
    else:
        design = doc.design
        if not isinstance(design, TwoStageDesign):
            raise UsageError("consistent recalculation needs a two-stage design")
        psi = shifted_prior(prior, args.new_prior_mu)
        if args.new_prior_sigma is not None:
            psi = replace(psi, sigma=args.new_prior_sigma)
        m_used = design.m if args.m_prime is None else float(args.m_prime)
        scenario = RevisedScenario(design, prior, psi, m_used, args.zm, args.n_cap)
        res = recalc_fixed_type2(scenario) if args.method == "consistent" else recalc_lambda(scenario)
        pp_before = res.pp_target
    record = {
        "method": args.method, "m": m_used, "z_m": args.zm,
        "n_prime": res.n_prime, "c_prime": res.c_prime,
        **dict(zip(("n_prime_integer", "c_prime_integer"), _integer_stage(m_used, args.zm, res.n_prime, res.c_prime))),
        "conditional_error_budget": res.conditional_error_budget,
        "pp_before": float(pp_before), "pp_after": res.pp_achieved,
        "pp_at_cap": res.pp_at_cap, "stopped_for_futility": res.stopped_for_futility,
    }
    _emit(args, record, "sample size recalculation")
    return EXIT_FUTILITY if res.stopped_for_futility else EXIT_OK


# -- curves ------------------------------------------------------------------

def parse_grid(spec: str) -> np.ndarray:
    """``a:b:step`` with both ends included, or a comma-separated list."""
    try:
        if ":" in spec:
            a, b, step = (float(s) for s in spec.split(":"))
            if not (step > 0 and b >= a) or not all(map(math.isfinite, (a, b, step))):
                raise ValueError
            k = int(math.floor((b - a) / step + 1e-9))
            return a + step * np.arange(k + 1)
        vals = np.array([float(s) for s in spec.split(",")])
        if vals.size == 0 or not np.all(np.isfinite(vals)):
            raise ValueError
        return vals
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}; expected a:b:step or v1,v2,...") from None


def _region(design: TwoStageDesign, z: float) -> str:
    if z <= design.f:
        return "futility"
    if z >= design.e:
        return "efficacy"
    return "continue"


def curve_rows(doc: DesignDocument, what: str, grid, prior, zm=None, theta1=None,
               method="fixed-type2", m_prime=None, n_cap=None, continuous=False):
    """Header and rows for one curve; shared by the CLI and the tests.

    ``nz`` and ``cz`` report ceil(n) and the matching critical value unless
    ``continuous`` is set.
    """
    design = doc.design
    if not isinstance(design, TwoStageDesign):
        raise UsageError("curves need a two-stage design")
    if what in ("nz", "cz"):
        header = ["z_m", "n", "c", "region"] if what == "nz" else ["z_m", "c", "region"]
        rows = []
        for z in grid:
            n, c, region = _final_stage(design, design.m, float(z))
            if region == "continue" and not continuous:
                n, c = (float(v) for v in rounded_n_c(design, float(z)))
            rows.append([z, n, c, region] if what == "nz" else [z, c, region])
        return header, rows
    if what == "pp":
        theta1 = prior.mu if theta1 is None else theta1
        rows = []
        for z in grid:
            n, c, region = _final_stage(design, design.m, float(z))
            if region == "continue":
                obs = power.InterimObservation(design.m, float(z))
                vals = [power.assumed_cp(obs, n, c, theta1), power.observed_cp(obs, n, c),
                        predictive_power_design(design, prior, float(z))]
            else:
                vals = [1.0 if region == "efficacy" else 0.0] * 3
            rows.append([z, *vals])
        return ["z_m", "acp", "ocp", "pp"], rows
    if zm is None:
        raise UsageError(f"--zm is required for --what {what}")
    if what == "recalc-vs-mu":
        m_p = design.m if m_prime is None else m_prime
        cap = default_n_cap(prior) if n_cap is None else n_cap
        solver = recalc_lambda if method == "lambda" else recalc_fixed_type2
        rows = []
        for mu in grid:
            res = solver(RevisedScenario(design, prior, shifted_prior(prior, float(mu)), m_p, zm, cap))
            rows.append([mu, res.n_prime, res.c_prime, res.pp_target, res.pp_achieved])
        return ["mu", "n_prime", "c_prime", "pp_target", "pp_achieved"], rows
    if what == "ce-early":
        rows = []
        for mp in grid:
            mp = float(mp)
            if not 0 < mp <= design.m:
                raise UsageError(f"m' grid must lie in (0, {design.m}]")
            ce = conditional_error(design, zm) if mp == design.m else conditional_error_early(design, mp, zm)
            rows.append([mp, ce, conditional_pp_target(design, prior, mp, zm)])
        return ["m_prime", "conditional_error", "pp_target"], rows
    raise UsageError(f"unknown curve {what!r}")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    return _num(v)


def cmd_curves(args) -> int:
    doc = DesignDocument.load(args.design)
    prior = _prior_for(args, doc)
    grid = parse_grid(args.grid)
    header, rows = curve_rows(doc, args.what, grid, prior, zm=args.zm, theta1=args.theta1,
                              method=args.method, m_prime=args.m_prime, n_cap=args.n_cap,
                              continuous=args.continuous)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    doc = DesignDocument.load(args.design)
    design = doc.design
    if isinstance(design, SingleStageDesign):
        design = single_stage_as_two_stage(design, m=max(1.0, math.floor(design.n / 2)))
    if args.use_prior:
        config = SimConfig(args.reps, args.seed, prior=_prior_for(args, doc), workers=args.workers)
    else:
        config = SimConfig(args.reps, args.seed, theta=args.theta, workers=args.workers)
    oc = simulate_two_stage(design, config, integer_n=args.integer_n)
    record = {k: float(v) for k, v in oc.as_dict().items() if k != "standard_errors"}
    record.update({f"se_{k}": float(v) for k, v in oc.standard_errors.items()})
    record.update(replicates=args.reps, seed=args.seed)
    _emit(args, record, "monte carlo operating characteristics")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptrial", description="Adaptive two-stage trial design toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="derive a design")
    d_sub = p_design.add_subparsers(dest="kind", required=True)
    p_single = d_sub.add_parser("single-stage", help="smallest fixed design reaching an expected power")
    _add_prior_flags(p_single)
    p_single.add_argument("--alpha", type=float, required=True)
    p_single.add_argument("--ep-target", type=float, required=True)
    p_opt = d_sub.add_parser("two-stage-optimal", help="two-stage design minimising expected sample size")
    _add_prior_flags(p_opt)
    p_opt.add_argument("--alpha", type=float, required=True)
    p_opt.add_argument("--beta", type=float, required=True)
    p_opt.add_argument("--pivots", type=int, default=7)
    p_opt.add_argument("--m-min", type=int, default=5)
    p_opt.add_argument("--m-max", type=int, default=150)
    p_opt.add_argument("--starts", type=int, default=5)
    p_opt.add_argument("--seed", type=int, default=2020)
    p_nv = d_sub.add_parser("naive", help="pointwise predictive-power recalculation of a single-stage design")
    p_nv.add_argument("--base", required=True, help="single-stage design document")
    p_nv.add_argument("--m", type=float, required=True)
    p_nv.add_argument("--beta-cond", type=float, required=True)
    p_nv.add_argument("--n-min", type=float, required=True)
    p_nv.add_argument("--n-max", type=float, required=True)
    _add_prior_flags(p_nv, required=False)
    for p in (p_single, p_opt, p_nv):
        p.add_argument("--out", help="write the design document here")
        p.add_argument("--json", action="store_true")
        p.set_defaults(func=cmd_design)

    p_mon = sub.add_parser("monitor", help="conditional and predictive power at an interim look")
    p_mon.add_argument("--design", required=True)
    p_mon.add_argument("--m", type=float)
    p_mon.add_argument("--zm", type=float, required=True)
    p_mon.add_argument("--theta1", type=float)
    _add_prior_flags(p_mon, required=False)
    p_mon.add_argument("--json", action="store_true")
    p_mon.set_defaults(func=cmd_monitor)

    p_rec = sub.add_parser("recalc", help="recalculate the sample size at an interim look")
    r_sub = p_rec.add_subparsers(dest="method", required=True)
    p_naive = r_sub.add_parser("naive", help="smallest n' reaching a predictive-power target")
    p_naive.add_argument("--m", type=float, required=True)
    p_naive.add_argument("--beta-cond", type=float, required=True)
    p_naive.add_argument("--n-min", type=float, required=True)
    p_naive.add_argument("--n-max", type=float, required=True)
    rec_parsers = [p_naive]
    for name, help_ in (("consistent", "keep the conditional type-II error"), ("lambda", "keep the power/size trade-off")):
        p = r_sub.add_parser(name, help=help_)
        p.add_argument("--new-prior-mu", type=float, required=True)
        p.add_argument("--new-prior-sigma", type=float)
        p.add_argument("--m-prime", type=float)
        p.add_argument("--n-cap", type=float)
        rec_parsers.append(p)
    for p in rec_parsers:
        p.add_argument("--design", required=True)
        p.add_argument("--zm", type=float, required=True)
        _add_prior_flags(p, required=False)
        p.add_argument("--json", action="store_true")
        p.set_defaults(func=cmd_recalc)

    p_cur = sub.add_parser("curves", help="write a design curve as CSV")
    p_cur.add_argument("--design", required=True)
    p_cur.add_argument("--what", required=True, choices=["nz", "cz", "pp", "recalc-vs-mu", "ce-early"])
    p_cur.add_argument("--grid", required=True, help="a:b:step (inclusive) or v1,v2,...")
    p_cur.add_argument("--out", required=True)
    p_cur.add_argument("--zm", type=float)
    p_cur.add_argument("--theta1", type=float)
    p_cur.add_argument("--method", choices=["fixed-type2", "lambda"], default="fixed-type2")
    p_cur.add_argument("--m-prime", type=float)
    p_cur.add_argument("--n-cap", type=float)
    p_cur.add_argument("--continuous", action="store_true", help="nz/cz: unrounded sample sizes")
    _add_prior_flags(p_cur, required=False)
    p_cur.set_defaults(func=cmd_curves)

    p_sim = sub.add_parser("simulate", help="Monte Carlo operating characteristics")
    p_sim.add_argument("--design", required=True)
    grp = p_sim.add_mutually_exclusive_group(required=True)
    grp.add_argument("--theta", type=float)
    grp.add_argument("--use-prior", action="store_true")
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--integer-n", action="store_true")
    _add_prior_flags(p_sim, required=False)
    p_sim.add_argument("--json", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"adaptrial: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, DocumentError, ValueError) as exc:
        print(f"adaptrial: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
