"""``cltlab <verb> --config <path> --out <dir> [--set section.key=value]...``

Verbs
-----
iterate   doubling run, per-level table
report    functional, localization and production reports of the start density
verify    full invariant suite; exit 0 only if every check passes
stitch    stitching sweep over n = 4, 16, 64, ...
rate      doubling run plus the relative-entropy rate fit
pipeline  doubling run with the stitched ledger per level

Every verb writes ``levels.csv`` (when it runs levels), ``report.json`` and
``failures.log`` into the output directory.  A failed check prints one line

    FAIL check=<name> level=<k or -> lhs=<x> rhs=<y> tol=<t>

to stderr and to ``failures.log``, and the exit status is 1.  Config and
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .config import parse_config
from .errors import CheckFailure, CltlabError, ConfigError, InfiniteFisherError
from .experiment import (
    RESOLVABLE_RADIUS,
    _level_rows,
    fit_rate,
    geometric_contraction_check,
    initial_density,
    local_clt_check,
    main_theorem_pipeline,
    rate_points,
    run_doubling,
)
from .functionals import entropy, fisher, rel_entropy, rel_fisher, report
from .grid import sup_distance
from .localization import (
    brascamp_lieb_check,
    factorize_gF,
    localization_report,
    moment_propagation,
)
from .parallel import pmap, thread_count
from .production import (
    T_MAX,
    de_bruijn_defect,
    fisher_along_flow,
    production_integrand,
    production_lower_bound_diag,
    time_integral,
    time_nodes,
)
from .profiles import from_profile
from .spectral import double, n_fold_rescaled, ou_flow
from .stitching import StitchConfig, stitch, tail_entropy_bound, tail_lq_bound, write_sweep_csv

VERBS = ("iterate", "report", "verify", "stitch", "rate", "pipeline")
LEVEL_COLUMNS = ("k", "N", "S", "D", "I", "J", "l1", "m4", "prod_ratio", "c1", "c2", "eps_n")
RATE_ENVELOPE = -0.85
# Stitching a density that is already Gaussian leaves round-off of order 1e-13;
# trends are only enforced above this level.
TREND_SLACK = 1e-10


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if v is None:
        return "-"
    return f"{float(v):.17g}"


def _clean(obj):
    """JSON-safe copy: NaN -> null, infinities -> "inf"/"-inf", tuples -> lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def failure_line(f: CheckFailure) -> str:
    level = "-" if f.level is None else f.level
    return f"FAIL check={f.check} level={level} lhs={_fmt(f.lhs)} rhs={_fmt(f.rhs)} tol={_fmt(f.tol)}"


class Outcome:
    """Collects check results for one command."""

    def __init__(self):
        self.checks = []
        self.failures = []

    def run(self, name, fn):
        """Run ``fn``; it returns a dict of measured values or raises/returns failures."""
        try:
            result = fn()
        except CheckFailure as exc:
            self.failures.append(exc)
            self.checks.append({"check": name, "status": "fail", "detail": str(exc)})
            return None
        except InfiniteFisherError as exc:
            self.checks.append({"check": name, "status": "skip", "detail": str(exc)})
            return None
        except CltlabError as exc:
            fail = CheckFailure(name, math.nan, math.nan, math.nan, detail=str(exc))
            self.failures.append(fail)
            self.checks.append({"check": name, "status": "fail", "detail": str(exc)})
            return None
        values, failed = result if isinstance(result, tuple) else (result, [])
        self.failures.extend(failed)
        status = "fail" if failed else ("skip" if values is None else "pass")
        entry = {"check": name, "status": status}
        if isinstance(values, dict):
            entry["values"] = values
        if failed:
            entry["detail"] = "; ".join(str(f) for f in failed)
        self.checks.append(entry)
        return values


def _write_levels(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEVEL_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in (r.k, r.N, r.entropy, r.rel_entropy, r.fisher, r.rel_fisher,
                                          r.l1, r.m4, r.prod_ratio, r.c1, r.c2, r.eps_n)])


def _level_dicts(rows):
    return [dict(vars(r)) for r in rows]


# ---------- verbs ----------


def cmd_iterate(cfg, out: Outcome, outdir):
    levels = out.run("run_doubling", lambda: run_doubling(cfg))
    if levels is None:
        return {}
    rows, _ = _level_rows(levels, cfg.stitch_c)
    _write_levels(os.path.join(outdir, "levels.csv"), rows)

    def monotone():
        ds = [lv.rel_entropy for lv in levels]
        failed = [CheckFailure("monotone_rel_entropy", b, a, 1e-8, level=k + 1)
                  for k, (a, b) in enumerate(zip(ds, ds[1:])) if b > a + 1e-8]
        return {"D": ds}, failed

    out.run("monotone_rel_entropy", monotone)
    return {"levels": _level_dicts(rows),
            "reports": [lv.report.to_dict() for lv in levels]}


def cmd_report(cfg, out: Outcome, outdir):
    rho = initial_density(cfg)
    body = {}
    fr = out.run("functional_report", lambda: report(rho, Rs=(1.0, 2.0, 4.0), alphas=(0.5, 1.0),
                                                     ks=(3, 4, 6)))
    if fr is not None:
        body["functionals"] = fr.to_dict()
    loc = out.run("localization_report", lambda: localization_report(
        rho, 1, fr.moments[4] if fr else 3.0, alphas=(0.5, 1.0), Rs=(1.0, 2.0, 4.0)))
    if loc is not None:
        body["localization"] = loc.to_dict()
    prod = out.run("production_report", lambda: production_lower_bound_diag(rho))
    if prod is not None:
        body["production"] = prod.to_dict()
    return body


def _verify_checks(cfg, rho, raw, levels):
    """``(name, fn)`` pairs of the invariant suite."""

    def functionals():
        return report(rho).to_dict()

    def de_bruijn():
        gain, integral = de_bruijn_defect(rho, 2.0)
        f = [] if abs(gain - integral) < 1e-3 else [CheckFailure("de_bruijn", gain, integral, 1e-3)]
        return {"entropy_gain": gain, "fisher_integral": integral}, f

    def information_integral():
        t = time_nodes(T_MAX)
        D, integral = rel_entropy(rho), time_integral(fisher_along_flow(rho, t), t)
        f = [] if abs(D - integral) < 1e-3 else [CheckFailure("information_integral", D, integral, 1e-3)]
        return {"D": D, "fisher_integral": integral}, f

    def blackman_stam():
        j0, j1 = rel_fisher(rho), rel_fisher(double(rho))
        if not (math.isfinite(j0) and math.isfinite(j1)):
            raise InfiniteFisherError("relative Fisher information is not resolved")
        f = [] if j1 <= j0 + 1e-6 else [CheckFailure("blackman_stam", j1, j0, 1e-6)]
        return {"J": j0, "J_doubled": j1}, f

    def production_identity():
        c = production_integrand(rho)
        return {"production": c.production, "fisher_gap_integral": c.integral,
                "printed_orientation": c.printed_orientation}, c.failures()

    def ou_monotone():
        ts = np.linspace(0.0, 5.0, 20)
        s = pmap(lambda t: entropy(ou_flow(rho, t)), ts)
        f = [CheckFailure("ou_entropy_monotone", b, a, 1e-10, detail=f"t={t!r}")
             for t, a, b in zip(ts[1:], s, s[1:]) if b < a - 1e-10]
        return {"entropy": s}, f

    def brascamp_lieb():
        F = factorize_gF(raw)
        if not F.is_logconcave:
            return None
        return {str(m): list(v) for m, v in brascamp_lieb_check(F).items()}

    def tail_lemmas():
        if not math.isfinite(fisher(rho)):
            raise InfiniteFisherError("Fisher information is not resolved")
        vals = {}
        for q in (1.5, 2.0, 3.0):
            for R in (2.0, 4.0, 6.0):
                vals[f"lq q={q} R={R}"] = list(tail_lq_bound(rho, q, R))
        for R in (0.0, 2.0, 3.0):
            vals[f"entropy R={R}"] = list(tail_entropy_bound(rho, R))
        return vals

    def engine():
        vals, f = {}, []
        for N in (4, 16):
            lv = levels[N.bit_length() - 1] if len(levels) > N.bit_length() - 1 else None
            if lv is None:
                continue
            err = sup_distance(lv.rho, n_fold_rescaled(rho, N))
            vals[f"doubling_vs_power N={N}"] = err
            if err > 1e-6:
                f.append(CheckFailure("doubling_vs_power", err, 0.0, 1e-6, level=N))
        a = ou_flow(ou_flow(rho, 0.3), 0.7)
        err = sup_distance(a, ou_flow(rho, 1.0))
        vals["ou_semigroup"] = err
        if err > 1e-8:
            f.append(CheckFailure("ou_semigroup", err, 0.0, 1e-8))
        return vals, f

    def levels_inequalities():
        f = []
        ds = [lv.rel_entropy for lv in levels]
        for lv in levels:
            r = lv.report
            if r.rel_entropy > 0.5 * r.rel_fisher + 1e-8:
                f.append(CheckFailure("stam", r.rel_entropy, 0.5 * r.rel_fisher, 1e-8, level=lv.k))
            if r.l1_to_g ** 2 > 2 * r.rel_entropy + 1e-8:
                f.append(CheckFailure("pinsker", r.l1_to_g ** 2, 2 * r.rel_entropy, 1e-8, level=lv.k))
        for k, (a, b) in enumerate(zip(ds, ds[1:])):
            if b > a + 1e-8:
                f.append(CheckFailure("monotone_rel_entropy", b, a, 1e-8, level=k + 1))
        return {"D": ds}, f

    def moments():
        mp = moment_propagation(rho, 2 ** min(cfg.k_max, 6))
        return {"m4": list(mp.m4)}, mp.failures()

    return [
        ("functional_invariants", functionals),
        ("de_bruijn", de_bruijn),
        ("information_integral", information_integral),
        ("blackman_stam", blackman_stam),
        ("production_identity", production_identity),
        ("ou_entropy_monotone", ou_monotone),
        ("brascamp_lieb", brascamp_lieb),
        ("tail_lemmas", tail_lemmas),
        ("engine_consistency", engine),
        ("level_inequalities", levels_inequalities),
        ("m4_propagation", moments),
    ]


def cmd_verify(cfg, out: Outcome, outdir):
    rho = initial_density(cfg)
    raw = from_profile(cfg.grid, cfg.profile)
    levels = out.run("run_doubling", lambda: run_doubling(cfg))
    if levels is None:
        return {}
    rows, _ = _level_rows(levels, None)
    _write_levels(os.path.join(outdir, "levels.csv"), rows)
    for name, fn in _verify_checks(cfg, rho, raw, levels):
        out.run(name, fn)
    return {"levels": _level_dicts(rows)}


def stitch_levels(cfg):
    """``n = 4, 16, 64, ...`` up to ``2^k_max`` with the graft inside the resolvable radius."""
    c = 1.0 if cfg.stitch_c is None else cfg.stitch_c
    ns, n = [], 4
    while n <= 2**cfg.k_max:
        m = c * math.sqrt(n)
        if m >= 1.0 and m + 1.0 <= min(RESOLVABLE_RADIUS, cfg.grid.half_width):
            ns.append(n)
        n *= 4
    return c, ns


def cmd_stitch(cfg, out: Outcome, outdir):
    c, ns = stitch_levels(cfg)
    if not ns:
        raise ConfigError("no stitching level fits: need c sqrt(n) >= 1 and c sqrt(n) + 1 <= 8")
    start = initial_density(cfg)
    results = []

    def sweep():
        cur, n = start, 1
        for target in ns:
            while n < target:
                cur, n = double(cur), 2 * n
            results.append(stitch(cur, StitchConfig(c, n)))
        return [r.to_dict() for r in results]

    if out.run("stitch_sweep", sweep) is None:
        return {}
    write_sweep_csv(os.path.join(outdir, "stitch.csv"), results)
    for r in results:
        print(f"n={r.n} eps_n=({_fmt(r.eps_n[0])}, {_fmt(r.eps_n[1])}, {_fmt(r.eps_n[2])})")

    def trends():
        f = []
        for a, b in zip(results, results[1:]):
            if b.eps_magnitude > a.eps_magnitude + TREND_SLACK:
                f.append(CheckFailure("eps_decreasing", b.eps_magnitude, a.eps_magnitude,
                                      TREND_SLACK, level=b.n))
            if abs(b.entropy_gap) > abs(a.entropy_gap) + TREND_SLACK:
                f.append(CheckFailure("entropy_gap_decreasing", abs(b.entropy_gap),
                                      abs(a.entropy_gap), TREND_SLACK, level=b.n))
        for r in results:
            if not (r.sandwich[0] > 0 and math.isfinite(r.sandwich[1])):
                f.append(CheckFailure("sandwich", r.sandwich[0], r.sandwich[1], 0.0, level=r.n))
        return {"c1_min": min(r.sandwich[0] for r in results),
                "c2_max": max(r.sandwich[1] for r in results)}, f

    out.run("stitch_trends", trends)
    return {"c": c, "stitches": [r.to_dict() for r in results]}


def cmd_rate(cfg, out: Outcome, outdir):
    levels = out.run("run_doubling", lambda: run_doubling(cfg))
    if levels is None:
        return {}
    rows, _ = _level_rows(levels, None)
    _write_levels(os.path.join(outdir, "levels.csv"), rows)
    fit = fit_rate(rate_points(levels), cfg.k_min)
    if fit.exact_convergence:
        print(f"exact convergence: D below floor at every level; c_sup={_fmt(fit.c_sup)}")
    else:
        print(f"slope={_fmt(fit.slope)} c_sup={_fmt(fit.c_sup)}")

    def envelope():
        f = []
        if not fit.exact_convergence and fit.slope > RATE_ENVELOPE:
            f.append(CheckFailure("rate_envelope", fit.slope, RATE_ENVELOPE, 0.0))
        if not math.isfinite(fit.c_sup):
            f.append(CheckFailure("c_sup_finite", fit.c_sup, math.inf, 0.0))
        return {"slope": fit.slope, "c_sup": fit.c_sup}, f

    out.run("rate_envelope", envelope)
    delta0, ok = geometric_contraction_check(levels)
    out.run("geometric_contraction", lambda: (
        {"delta0": delta0},
        [] if ok else [CheckFailure("geometric_contraction", delta0, 0.0, 0.0)]))
    local = local_clt_check(levels, cfg.local_radii, cfg.k_min)
    return {"rate": fit.to_dict(), "delta0": delta0, "local_clt": local.to_dict()}


def cmd_pipeline(cfg, out: Outcome, outdir):
    if cfg.stitch_c is None:
        raise ConfigError("pipeline needs [stitch] c")
    rep = out.run("main_theorem_pipeline", lambda: main_theorem_pipeline(cfg))
    if rep is None:
        return {}
    out.failures.extend(rep.failed)
    _write_levels(os.path.join(outdir, "levels.csv"), rep.levels)
    slope = "exact" if rep.rate.exact_convergence else _fmt(rep.rate.slope)
    print(f"slope={slope} c_sup={_fmt(rep.rate.c_sup)} nd_sup={_fmt(rep.nd_sup)} "
          f"bounded={'yes' if rep.nd_bounded else 'no'}")
    return {"levels": _level_dicts(rep.levels), "rate": rep.rate.to_dict(),
            "delta0": rep.delta0, "nd_sup": rep.nd_sup, "nd_bounded": rep.nd_bounded}


COMMANDS = {
    "iterate": cmd_iterate,
    "report": cmd_report,
    "verify": cmd_verify,
    "stitch": cmd_stitch,
    "rate": cmd_rate,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cltlab", description="Entropic CLT laboratory.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set run.k_max=8 (repeatable)")
    return p


def dispatch(verb: str, config_path: str, outdir: str, overrides=()) -> int:
    try:
        cfg = parse_config(config_path, overrides)
        thread_count()
    except ConfigError as exc:
        print(f"cltlab: config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(outdir, exist_ok=True)
    out = Outcome()
    try:
        body = COMMANDS[verb](cfg, out, outdir)
    except ConfigError as exc:
        print(f"cltlab: config error: {exc}", file=sys.stderr)
        return 2
    doc = {"verb": verb, "checks": out.checks, **body,
           "passed": not out.failures}
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = [failure_line(f) for f in out.failures]
    with open(os.path.join(outdir, "failures.log"), "w") as fh:
        fh.write("".join(line + "\n" for line in lines))
    for line in lines:
        print(line, file=sys.stderr)
    if verb == "verify":
        for c in out.checks:
            print(f"{c['status'].upper():4s} {c['check']}")
    return 1 if out.failures else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args.verb, args.config, args.out, args.overrides)


if __name__ == "__main__":
    sys.exit(main())
