"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 budget or resource refusal.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from . import bounds, io, percolation, rng, selftest, spectral, tree, walks
from .io import ConfigError, ExperimentConfig

SUBCOMMANDS = (
    "exact", "mc", "chainsim", "trap", "optimize-trap", "spectrum", "shift", "certificate",
    "dense-prob", "witness-rank", "correction", "upper-split", "selftest",
)

# library operation -> the subcommand that exposes it
REGISTRY: dict[str, str] = {
    "tree.build_ball": "spectrum",
    "tree.forward_subtree": "shift",
    "tree.descendant_counts": "shift",
    "tree.ball_count": "certificate",
    "percolation.sample_config": "spectrum",
    "percolation.extract_cluster": "spectrum",
    "percolation.sphere_counts": "dense-prob",
    "percolation.dense_ball_probability": "dense-prob",
    "percolation.witness_set": "witness-rank",
    "spectral.assemble_killed": "spectrum",
    "spectral.top_eigen": "spectrum",
    "spectral.trap_spectrum": "spectrum",
    "spectral.eigen_count_above": "witness-rank",
    "spectral.shift_profile": "shift",
    "spectral.shift_calibration": "shift",
    "spectral.calibration_frontier": "shift",
    "spectral.sparse_ball_certificate": "certificate",
    "spectral.edge_tail_estimate": "upper-split",
    "walks.exact_return_prob": "exact",
    "walks.walk_range_census": "exact",
    "walks.mc_return_prob": "mc",
    "walks.chain_sim": "chainsim",
    "bounds.trap_bound": "trap",
    "bounds.optimize_trap_r": "optimize-trap",
    "bounds.correction_curve": "correction",
    "bounds.upper_split": "upper-split",
    "bounds.witness_rank_experiment": "witness-rank",
}


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


@dataclass
class Result:
    rows: list[dict]
    schema: str
    summary: str
    plot: tuple[str, str] | None = None


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    for flag, typ in (
        ("--d", int), ("--n", int), ("--r", int), ("--a", float), ("--delta", float),
        ("--radius", int), ("--samples", int), ("--seed", int), ("--threads", int),
        ("--eta", float), ("--depth", int), ("--size", int), ("--K", int), ("--theta-grid", int),
        ("--r-inner", int), ("--r-outer", int), ("--tail-mass", float), ("--budget", int),
    ):
        p.add_argument(flag, type=typ, default=None)
    p.add_argument("--mask", choices=("forward", "path", "random", "cluster"), default=None)
    p.add_argument("--n-list", default=None, help="comma-separated n values, e.g. 2,4,1e6")
    p.add_argument("--sources", default=None, help="comma-separated: exact,mc,trap-bound,theorem-target")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "plotdata", "json-lines"), default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--deterministic-reduce", action="store_true",
                   help="accepted for compatibility; reductions are always in chunk order")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lamptree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    common = _common()
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


class Params:
    """Merged parameters: command line, then config file, then defaults."""

    def __init__(self, ns: argparse.Namespace, cfg: ExperimentConfig | None):
        self.ns = ns
        self.cfg = cfg.params if cfg else {}

    def get(self, key: str, default=None):
        v = getattr(self.ns, key, None)
        if v is None:
            v = self.cfg.get(key)
        return default if v is None else v

    def require(self, key: str, lo=None, hi=None, default=None, strict_lo=False):
        v = self.get(key, default)
        flag = "--" + key.replace("_", "-")
        if v is None:
            raise ValidationError(f"{flag} is required")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            raise ValidationError(f"{flag}={v} is out of range (must be {'>' if strict_lo else '>='} {lo})")
        if hi is not None and v > hi:
            raise ValidationError(f"{flag}={v} is out of range (must be <= {hi})")
        return v

    def seed(self) -> int:
        v = self.get("seed")
        return rng.default_seed() if v is None else v


def _walk_row(e: walks.ReturnProbEstimate) -> dict:
    return {
        "method": e.method, "d": e.d, "n": e.n, "value": e.value, "std_error": e.std_error,
        "samples": e.samples, "seed": e.seed, "wall_time_ms": round(e.wall_time_ms, 3), "log_value": e.log_value,
    }


def cmd_exact(p: Params) -> Result:
    d, n = p.require("d", 3, default=3), p.require("n", 0, default=1)
    est = walks.exact_return_prob(d, n, p.get("budget"))
    census = walks.walk_range_census(d, 2 * n, p.get("budget")) if n <= 6 else "omitted"
    summary = f"p_{2 * n}(e,e) = {est.exact} = {est.value!r}  (range census {census})"
    return Result([_walk_row(est)], "walks", summary, ("n", "value"))


def cmd_mc(p: Params) -> Result:
    d, n = p.require("d", 3, default=3), p.require("n", 0, default=1)
    samples = p.require("samples", 1, default=100_000)
    radius = p.get("radius")
    if radius is not None and radius < n:
        raise ValidationError(f"--radius={radius} is out of range (must be >= n={n})")
    est = walks.mc_return_prob(d, n, samples, p.seed(), p.require("threads", 1, default=1), radius)
    return Result([_walk_row(est)], "walks", f"p_{2 * n} ~ {est.value!r} +- {est.std_error!r}", ("n", "value"))


def cmd_chainsim(p: Params) -> Result:
    d, n = p.require("d", 3, default=3), p.require("n", 0, default=1)
    samples = p.require("samples", 1, default=1_000_000)
    est = walks.chain_sim(d, n, samples, p.seed(), p.require("threads", 1, default=1))
    return Result([_walk_row(est)], "walks", f"p_{2 * n} ~ {est.value!r} +- {est.std_error!r}", ("n", "value"))


def cmd_trap(p: Params) -> Result:
    d, r, n = p.require("d", 3, default=3), p.require("r", 1, default=1), p.require("n", 1, default=1)
    tb = bounds.trap_bound(d, r, n)
    row = {
        "d": d, "r": r, "n": n, "log_value": tb.log_value, "value": tb.value, "log_prefactor": tb.log_prefactor,
        "log_trap_cost": tb.log_trap_cost, "log_spectral": tb.log_spectral,
    }
    return Result([row], "trap", f"trap bound = {tb.value:.6g} (log {tb.log_value:.6g})", ("n", "log_value"))


def cmd_optimize_trap(p: Params) -> Result:
    d, n = p.require("d", 3, default=3), p.require("n", 2, default=1000)
    opt = bounds.optimize_trap_r(d, n)
    row = {
        "d": d, "n": n, "r_best": opt.r_best, "log_best": opt.best.log_value,
        "r_prescribed": opt.r_prescribed, "log_prescribed": opt.prescribed.log_value,
    }
    summary = f"r* = {opt.r_best} (log bound {opt.best.log_value:.6g}); prescribed r_n = {opt.r_prescribed}"
    return Result([row], "optimize_trap", summary, ("n", "log_best"))


def cmd_spectrum(p: Params) -> Result:
    d = p.require("d", 3, default=3)
    samples = p.get("samples")
    if samples:
        radius = p.require("radius", 0, default=6)
        ball = tree.build_ball(d, radius)
        rows = []
        seed = p.seed()
        for i in range(samples):
            cfg = percolation.sample_config(ball, rng.stream(seed, i), seed_record=(seed, i))
            cl = percolation.extract_cluster(ball, cfg)
            if cl is None:
                rows.append({"instance_id": i, "n_vertices": 0, "top_eig": 0.0, "root_mass": None,
                             "residual": 0.0, "method": "empty"})
                continue
            rep = spectral.top_eigen(spectral.assemble_killed(cl))
            rows.append({"instance_id": i, "n_vertices": rep.n_vertices, "top_eig": rep.top_eigenvalue,
                         "root_mass": rep.root_mass, "residual": rep.residual, "method": rep.method})
        top = max(r["top_eig"] for r in rows)
        return Result(rows, "spectral", f"{samples} clusters, max top eigenvalue {top:.6g} (rho = {spectral.rho(d):.6g})",
                      ("instance_id", "top_eig"))
    r = p.require("r", 0, default=2)
    ts = spectral.trap_spectrum(d, r)
    rows = [
        {"d": d, "r": r, "k": k + 1, "eigenvalue": float(ts.eigenvalues[k]), "closed_form": float(ts.closed_form_eigenvalues[k]),
         "root_mass": float(ts.root_masses[k]), "closed_form_root_mass": float(ts.closed_form_root_masses[k])}
        for k in range(r + 1)
    ]
    rep = spectral.top_eigen(spectral.assemble_killed(tree.forward_subtree(tree.build_ball(d, r), r)))
    summary = (f"lambda_r = {float(ts.eigenvalues[0])!r}, root mass {float(ts.root_masses[0])!r}; "
               f"full-tree solve {rep.top_eigenvalue!r} / {rep.root_mass!r}")
    return Result(rows, "trap_spectrum", summary, ("k", "eigenvalue"))


def _mask(p: Params, d: int, margin: int = 0) -> tree.SubtreeMask:
    kind = p.get("mask", "forward")
    depth = p.require("depth", 0, default=3)
    if kind == "forward":
        ball = tree.build_ball(d, p.get("radius", depth + margin))
        return tree.forward_subtree(ball, depth)
    if kind == "path":
        ball = tree.build_ball(d, p.get("radius", depth + margin))
        return tree.path_mask(ball, depth + 1)
    if kind == "random":
        ball = tree.build_ball(d, p.require("radius", 1, default=depth + margin))
        return tree.random_subtree_mask(ball, p.require("size", 1, default=50), rng.stream(p.seed()))
    ball = tree.build_ball(d, p.require("radius", 1, default=depth + margin))
    seed = p.seed()
    for i in range(10_000):
        cl = percolation.extract_cluster(ball, percolation.config_from_seed(ball, seed, i))
        if cl is not None and not cl.truncated_at_boundary and cl.size > 1:
            return tree.SubtreeMask(ball, cl.member, 0)
    raise ValidationError("--mask=cluster: no nontrivial untruncated cluster found")


def cmd_shift(p: Params) -> Result:
    d = p.require("d", 3, default=3)
    K = p.require("K", 0, default=4)
    samples = p.get("samples")
    if samples:
        radius = p.require("radius", 1, default=6)
        size = p.require("size", 1, default=60)
        rows = spectral.shift_calibration(d, radius, [size], list(range(1, K + 1)), samples, p.seed())
        front = spectral.calibration_frontier(rows)
        worst = max(f["w_max"] for f in front)
        return Result(rows, "calibration", f"{len(rows)} calibration rows (empirical); frontier max w = {worst:.6g}",
                      ("m", "scaled_gap"))
    mask = _mask(p, d)
    prof = spectral.shift_profile(mask, K, p.require("theta_grid", 1, default=1024))
    rows = [
        {"instance_id": 0, "n_vertices": mask.size, "k": k, "shift_norm_sq": float(prof.shift_norms_sq[k]),
         "w_gauge": prof.numerical_radius, "w_sweep": prof.numerical_radius_sweep}
        for k in range(K + 1)
    ]
    summary = f"w(S) = {prof.numerical_radius!r} (gauge), {prof.numerical_radius_sweep!r} (sweep)"
    return Result(rows, "shift", summary, ("k", "shift_norm_sq"))


def cmd_certificate(p: Params) -> Result:
    d = p.require("d", 3, default=3)
    delta = p.require("delta", 0.0, 1.0, default=0.05, strict_lo=True)
    r = p.get("r")
    if r is None:
        r = spectral.sparse_ball_radius(delta, p.require("eta", 0.0, default=0.1))
    a = p.require("a", 0.0, default=0.5, strict_lo=True)
    mask = _mask(p, d, margin=r)
    try:
        cert = spectral.sparse_ball_certificate(mask, delta, r, a)
    except tree.InsufficientMarginError as exc:
        raise ValidationError(f"--radius: {exc}") from exc
    row = {
        "d": d, "r": r, "a": a, "delta": delta, "n_vertices": cert.n_vertices, "max_ball_count": cert.max_ball_count,
        "density": cert.density, "top_eig": cert.top_eigenvalue, "threshold": cert.threshold,
        "hypothesis": cert.hypothesis_holds, "conclusion": cert.conclusion_holds,
    }
    summary = (f"density {cert.density:.4g} vs a={a}: hypothesis {cert.hypothesis_holds}; "
               f"top {cert.top_eigenvalue:.6g} vs {cert.threshold:.6g}: conclusion {cert.conclusion_holds}")
    return Result([row], "certificate", summary, ("r", "density"))


def cmd_dense_prob(p: Params) -> Result:
    d, r = p.require("d", 3, default=3), p.require("r", 0, default=1)
    a = p.require("a", 0.0, default=0.9, strict_lo=True)
    est = percolation.dense_ball_probability(
        d, r, a, p.require("samples", 1, default=100_000), p.seed(), p.require("threads", 1, default=1)
    )
    row = {"d": d, "r": r, "a": a, "samples": est.samples, "estimate": est.estimate,
           "ci_low": est.ci_low, "ci_high": est.ci_high, "seed": est.seed}
    zs = ", ".join(f"{z:.4g}" for z in est.mean_sphere_counts)
    summary = f"P(dense ball) ~ {est.estimate!r} [{est.ci_low:.6g}, {est.ci_high:.6g}]; mean Z_j = ({zs})"
    return Result([row], "percolation", summary, ("r", "estimate"))


def cmd_witness_rank(p: Params) -> Result:
    d = p.require("d", 3, default=3)
    r = p.require("r", 0, default=2)
    r_inner = p.require("r_inner", 0, default=6)
    r_outer = p.require("r_outer", r_inner + r, default=r_inner + r)
    rep = bounds.witness_rank_experiment(
        d, r_inner, r_outer, r, p.require("a", 0.0, default=0.9, strict_lo=True),
        p.require("delta", 0.0, 1.0, default=0.05, strict_lo=True), p.require("samples", 1, default=1000), p.seed(),
    )
    rows = [vars(x) for x in rep.records]
    summary = f"{len(rows)} samples, hypothesis held on {rep.n_hypothesis}, violations {len(rep.violations)}"
    return Result(rows, "witness", summary, ("sample_id", "count"))


def _parse_n_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"--n-list: cannot parse {text!r}") from exc


def cmd_correction(p: Params) -> Result:
    d = p.require("d", 3, default=3)
    n_list = _parse_n_list(p.get("n_list", "1000,1000000,1000000000,1000000000000"))
    sources = tuple(s.strip() for s in p.get("sources", "trap-bound,theorem-target").split(","))
    bad = [s for s in sources if s not in bounds.SOURCES]
    if bad:
        raise ValidationError(f"--sources: unknown source {bad[0]!r}")
    pts = bounds.correction_curve(d, n_list, sources, p.get("samples", 100_000), p.seed(), p.get("threads", 1))
    rows = [{"n": x.n, "source": x.source, "L": x.L, "value_log": x.log_value} for x in pts]
    ref = bounds.target_constant(d)
    summary = f"{len(rows)} points; reference pi^2 (log b)^2 = {ref!r}"
    return Result(rows, "correction", summary, ("n", "L"))


def cmd_upper_split(p: Params) -> Result:
    d, n = p.require("d", 3, default=3), p.require("n", 2, default=1_000_000)
    delta = p.get("delta")
    if delta is None:
        delta = bounds.delta_n(d, n, p.get("eta"))
    if not 0 < delta < 1:
        raise ValidationError(f"--delta={delta} is out of range (must lie in (0, 1))")
    samples = p.get("samples")
    note = ""
    if p.get("tail_mass") is not None:
        tail = p.require("tail_mass", 0.0, 1.0)
    elif samples:
        et = spectral.edge_tail_estimate(d, p.require("radius", 1, default=min(n, 8)), delta, samples, p.seed())
        tail = et.tail_mass
        note = " (empirical tail, truncated)" if et.truncated else " (empirical tail)"
    else:
        tail = 1.0
    us = bounds.upper_split(d, n, delta, tail)
    row = {"d": d, "n": n, "delta": delta, "tail_mass": tail, "log_I1": us.log_I1, "log_I2": us.log_I2,
           "log_total": us.log_total, "log_rho_2n": us.log_rho_2n}
    return Result([row], "upper_split", f"log(I1+I2) <= {us.log_total!r}{note}", ("n", "log_total"))


HANDLERS = {
    "exact": cmd_exact, "mc": cmd_mc, "chainsim": cmd_chainsim, "trap": cmd_trap,
    "optimize-trap": cmd_optimize_trap, "spectrum": cmd_spectrum, "shift": cmd_shift,
    "certificate": cmd_certificate, "dense-prob": cmd_dense_prob, "witness-rank": cmd_witness_rank,
    "correction": cmd_correction, "upper-split": cmd_upper_split,
}


def _selftest() -> int:
    results = selftest.run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    failed = sum(not ok for _, ok, _ in results)
    print(f"selftest: {len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        pre = _Parser(add_help=False)
        pre.add_argument("--config", default=None)
        known, _ = pre.parse_known_args(argv)
        cfg = ExperimentConfig.load(known.config) if known.config else None
        if cfg is not None and cfg.subcommand and not any(a in SUBCOMMANDS for a in argv):
            argv = [cfg.subcommand, *argv]
        if not any(a in SUBCOMMANDS for a in argv) and not any(a in ("-h", "--help") for a in argv):
            raise ValidationError(f"a subcommand is required: one of {', '.join(SUBCOMMANDS)}")
        ns = build_parser().parse_args(argv)
        if ns.subcommand == "selftest":
            return _selftest()
        params = Params(ns, cfg)
        res = HANDLERS[ns.subcommand](params)
        out = params.get("out")
        if out is not None:
            run_cfg = ExperimentConfig(ns.subcommand, {
                k: params.get(k) for k in io.CONFIG_KEYS if k != "subcommand" and params.get(k) is not None
            })
            io.emit(res.rows, res.schema, out, params.get("format", "csv"), res.plot, run_cfg)
        print(res.summary)
        return 0
    except (ValidationError, ConfigError, FileNotFoundError, PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (tree.ResourceLimitError, walks.BudgetExceededError, MemoryError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
