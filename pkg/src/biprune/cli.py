"""Command line interface.

Every subcommand resolves its options into one flat config dict (defaults,
then command-line flags, then the keys of ``--config`` which take
precedence), and writes that config into its output so that a run can be
repeated exactly.  Replicate ``i`` always uses the stream ``(seed, i)``, so
outputs do not depend on ``--threads``.

Exit codes: 0 success, 2 usage error, 3 invalid input, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import cutdown as cd
from .generators import (
    OffspringDistribution,
    contour,
    default_scale,
    enumerate_shapes,
    gw_bimeasure,
    gw_conditioned,
    parse_family,
    tree_shape,
)
from .io import bimeasure_from_dict, bimeasure_to_dict, dumps, load_json
from .measure import BiMeasureTree
from .pruning import generator_apply, mc_expectation, semigroup_exact, simulate
from .rng import replicate_rng
from .statistics import convergence_report, depth_control
from .testfunctions import TestFunctionSpec, default_suite

EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 2, 3, 4

# run options that cannot change the results stay out of the embedded config
_RUNTIME = ("out", "contour_out", "moments_out", "threads")
_NOT_CONFIG = set(_RUNTIME) | {"config", "command_fn"}


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------------


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _family(cfg: dict) -> OffspringDistribution:
    try:
        return parse_family(cfg["family"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def named_psis() -> dict[str, TestFunctionSpec]:
    out = {p.name: p for p in default_suite()}
    out["mass"] = TestFunctionSpec(1, (), name="mass")
    return out


def _psis(cfg: dict) -> list[TestFunctionSpec]:
    spec = cfg.get("psi") or "default"
    if isinstance(spec, list):
        return [TestFunctionSpec.from_dict(d) for d in spec]
    if spec == "default":
        return default_suite()
    table = named_psis()
    out = []
    for name in str(spec).split(","):
        if name not in table:
            raise UsageError(f"unknown test function {name!r}; choose from {sorted(table)}")
        out.append(table[name])
    return out


def _tree_from_config(cfg: dict, rng: np.random.Generator | None = None) -> BiMeasureTree:
    """The input tree: a JSON file, or a generated conditioned GW tree."""
    if cfg.get("tree"):
        return bimeasure_from_dict(load_json(cfg["tree"]))
    if not cfg.get("family") or not cfg.get("nodes"):
        raise UsageError("give either --tree FILE or --family and --nodes")
    eta = _family(cfg)
    N = int(cfg["nodes"])
    a_N = cfg.get("edge_length") or default_scale(eta, N)
    rng = rng if rng is not None else replicate_rng(int(cfg["seed"]), 0)
    return gw_bimeasure(eta, N, rng, mu=cfg["mu"], nu=cfg["nu"], a_N=a_N, height=cfg.get("height"))


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _with_config(cfg: dict, body: str) -> str:
    return "# config: " + dumps(cfg)[:-1] + "\n" + body


def _emit(text: str, path: str | None) -> None:
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _float_or_inf(v: float):
    return float(v) if math.isfinite(v) else str(float(v))


# -- subcommands ---------------------------------------------------------------------------


def cmd_generate(cfg: dict, run: dict | None = None) -> str:
    eta = _family(cfg)
    N = int(cfg["nodes"])
    rng = replicate_rng(int(cfg["seed"]), 0)
    a_N = cfg.get("edge_length") or default_scale(eta, N)
    x = gw_bimeasure(eta, N, rng, mu=cfg["mu"], nu=cfg["nu"], a_N=a_N, height=cfg.get("height"))
    if run and run.get("contour_out"):
        _emit(_with_config(cfg, contour(x.tree).to_csv()), run["contour_out"])
    d = bimeasure_to_dict(x)
    d["config"] = cfg
    return dumps(d)


def cmd_prune(cfg: dict, run: dict | None = None) -> str:
    x = _tree_from_config(cfg)
    horizon = float(cfg["horizon"])
    path = simulate(x, horizon, replicate_rng(int(cfg["seed"]), 1))
    lines = [dumps({"config": cfg})]
    lines += [dumps(r) for r in path.event_records()]
    return "".join(lines)


def cmd_semigroup(cfg: dict, run: dict | None = None) -> str:
    x = _tree_from_config(cfg)
    ts = _floats(cfg["times"])
    psis = _psis(cfg)
    mean, se = mc_expectation(x, ts, psis, int(cfg["replicates"]), int(cfg["seed"]), draws=int(cfg["draws"]))
    rows = []
    for i, p in enumerate(psis):
        for j, t in enumerate(ts):
            try:
                ex = semigroup_exact(x, t, p)
            except ValueError:
                ex = math.nan
            rows.append([p.name, t, ex, float(mean[i, j]), float(se[i, j]), int(cfg["replicates"]), int(cfg["seed"])])
    return _with_config(cfg, _csv(["psi_id", "t", "exact", "mc", "stderr", "replicates", "seed"], rows))


def cmd_generator_check(cfg: dict, run: dict | None = None) -> str:
    x = _tree_from_config(cfg)
    ts = _floats(cfg["times"])
    rows = []
    for p in _psis(cfg):
        psi0 = semigroup_exact(x, 0.0, p)
        jump = generator_apply(x, p, form="jump")
        integral = generator_apply(x, p, form="integral") if p.damping is None else math.nan
        resid = []
        for t in ts:
            st = semigroup_exact(x, t, p)
            r = abs((st - psi0) / t - jump)
            resid.append(r)
            rows.append([p.name, t, st, psi0, jump, integral, r, math.nan])
        # log-log slope of the residual against t
        ok = [(t, r) for t, r in zip(ts, resid) if r > 0]
        slope = float(np.polyfit(np.log([a for a, _ in ok]), np.log([b for _, b in ok]), 1)[0]) if len(ok) >= 2 else math.nan
        rows.append([p.name, "slope", math.nan, psi0, jump, integral, math.nan, slope])
    header = ["psi_id", "t", "S_t_psi", "psi", "generator_jump", "generator_integral", "residual", "loglog_slope"]
    return _with_config(cfg, _csv(header, rows))


def cmd_cutdown(cfg: dict, run: dict | None = None) -> str:
    run = run or {}
    seed = int(cfg["seed"])
    R = int(cfg["replicates"])
    threads = run.get("threads")
    if cfg.get("tree"):
        x = _tree_from_config(cfg)
        res = cd.cutdown(x, R, seed, threads=threads)
    else:
        if not cfg.get("family") or not cfg.get("nodes"):
            raise UsageError("give either --tree FILE or --family and --nodes")
        eta = _family(cfg)
        res = cd.rayleigh_experiment(
            int(cfg["nodes"]), R, seed, eta=eta, mu=cfg["mu"], nu=cfg["nu"], a_N=cfg.get("edge_length"), threads=threads
        )
        x = None
    rows = [[r["replicate"], _float_or_inf(r["theta"]), _float_or_inf(r["cut_count"]), r["seed"]] for r in res.records]
    if run.get("moments_out"):
        mrows = []
        for n in _ints(cfg.get("moments") or "1,2,3"):
            if x is not None:
                val, se, mode = cd.theta_moment(x, n, rng=replicate_rng(seed, R + n))
            else:
                val, se = cd.theta_sample_moments(res.thetas, n)
                mode = "mc"
            mrows.append([n, mode, _float_or_inf(val), se])
        _emit(_with_config(cfg, _csv(["n", "exact_or_mc", "value", "stderr"], mrows)), run["moments_out"])
    return _with_config(cfg, _csv(["replicate", "theta", "cut_count", "seed"], rows))


def cmd_converge(cfg: dict, run: dict | None = None) -> str:
    eta = _family(cfg)
    mu, nu, h, a = cfg["mu"], cfg["nu"], cfg.get("height"), cfg.get("edge_length")

    def family(N: int, rng: np.random.Generator) -> BiMeasureTree:
        return gw_bimeasure(eta, N, rng, mu=mu, nu=nu, a_N=a, height=h)

    ctl = cfg.get("control") or "none"
    if ctl not in ("none", "depth"):
        raise UsageError(f"unknown control {ctl!r}; choose none or depth")
    if ctl == "depth" and eta.family != "poisson":
        raise UsageError("the depth control is exact only for Poisson offspring")
    rep = convergence_report(
        family,
        _ints(cfg["indices"]),
        _psis(cfg),
        int(cfg["replicates"]),
        int(cfg["seed"]),
        times=_floats(cfg["times"]),
        draws=int(cfg["draws"]),
        threads=(run or {}).get("threads"),
        paths=int(cfg.get("paths") or 1),
        control=depth_control if ctl == "depth" else None,
    )
    return _with_config(cfg, rep.to_csv())


def cmd_gw_shapes(cfg: dict, run: dict | None = None) -> str:
    eta = _family(cfg)
    N = int(cfg["nodes"])
    samples = int(cfg["samples"])
    seed = int(cfg["seed"])
    counts: dict[str, int] = {}
    for i in range(samples):
        s = tree_shape(gw_conditioned(eta, N, replicate_rng(seed, i)))
        counts[s] = counts.get(s, 0) + 1
    exact = enumerate_shapes(eta, N) if N <= 10 else {}
    rows = []
    for s in sorted(set(counts) | set(exact)):
        c = counts.get(s, 0)
        rows.append([s, c, c / samples, exact.get(s, math.nan)])
    return _with_config(cfg, _csv(["shape", "count", "frequency", "exact"], rows))


# -- argument parsing ------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--threads", type=int, default=None, help="worker threads over replicates")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def _tree_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tree", default=None, help="bi-measure tree JSON (as written by 'generate')")
    p.add_argument("--family", default=None, help='offspring law, e.g. "poisson:1.0"')
    p.add_argument("--nodes", type=int, default=None, help="number of non-root nodes N")
    p.add_argument("--edge-length", dest="edge_length", type=float, default=None, help="a_N (default from the law)")
    p.add_argument("--mu", default="mu_ske", help="sampling measure: mu_ske or mu_nod")
    p.add_argument("--nu", default="nu_ske", help="pruning measure: nu_ske, nu_nod, nu_adh or nu_height")
    p.add_argument("--height", type=float, default=None, help="level used by nu_height")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biprune", description="Pruning of bi-measure trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="conditioned Galton-Watson tree with standard measures")
    _common(p)
    p.add_argument("--family", default="poisson:1.0")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--edge-length", dest="edge_length", type=float, default=None)
    p.add_argument("--mu", default="mu_ske")
    p.add_argument("--nu", default="nu_ske")
    p.add_argument("--height", type=float, default=None)
    p.add_argument("--contour-out", dest="contour_out", default=None, help="also write the contour as CSV")
    p.set_defaults(command_fn=cmd_generate)

    p = sub.add_parser("prune", help="simulate one pruning path; JSON Lines event log")
    _common(p)
    _tree_args(p)
    p.add_argument("--horizon", type=float, default=1.0)
    p.set_defaults(command_fn=cmd_prune)

    p = sub.add_parser("semigroup", help="exact semigroup against Monte-Carlo")
    _common(p)
    _tree_args(p)
    p.add_argument("--times", default="0.1,0.5,1.0")
    p.add_argument("--psi", default="default", help='comma list of names or "default"')
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--draws", type=int, default=256)
    p.set_defaults(command_fn=cmd_semigroup)

    p = sub.add_parser("generator-check", help="(S_t psi - psi)/t against the generator")
    _common(p)
    _tree_args(p)
    p.add_argument("--times", default="0.1,0.01,0.001")
    p.add_argument("--psi", default="default")
    p.set_defaults(command_fn=cmd_generator_check)

    p = sub.add_parser("cutdown", help="separation times and cut counts")
    _common(p)
    _tree_args(p)
    p.set_defaults(mu="mu_nod")
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--moments", default="1,2,3")
    p.add_argument("--moments-out", dest="moments_out", default=None, help="also write the moment table")
    p.set_defaults(command_fn=cmd_cutdown)

    p = sub.add_parser("converge", help="test-function means along a family of random trees")
    _common(p)
    p.add_argument("--family", default="poisson:1.0")
    p.add_argument("--indices", default="125,250,500,1000")
    p.add_argument("--edge-length", dest="edge_length", type=float, default=None)
    p.add_argument("--mu", default="mu_ske")
    p.add_argument("--nu", default="nu_ske")
    p.add_argument("--height", type=float, default=None)
    p.add_argument("--times", default="0,0.5")
    p.add_argument("--psi", default="default")
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--draws", type=int, default=256)
    p.add_argument("--paths", type=int, default=1, help="pruning paths per tree for damped test functions")
    p.add_argument("--control", default="none", help='"depth": adjust means by the mean node depth (Poisson only)')
    p.set_defaults(command_fn=cmd_converge)

    p = sub.add_parser("gw-shapes", help="shape frequencies of small conditioned trees")
    _common(p)
    p.add_argument("--family", default="poisson:1.0")
    p.add_argument("--nodes", type=int, default=3)
    p.add_argument("--samples", type=int, default=10000)
    p.set_defaults(command_fn=cmd_gw_shapes)
    return parser


def read_config(path: str) -> dict:
    """A JSON config, or the config embedded in any output of this program."""
    with open(path) as fh:
        text = fh.read()
    first = text.split("\n", 1)[0]
    if first.startswith("# config:"):
        return json.loads(first[len("# config:") :])
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        d = json.loads(first)  # JSON Lines: the first record holds the config
    if isinstance(d, dict) and isinstance(d.get("config"), dict):
        return d["config"]
    return d


def resolve_config(args: argparse.Namespace) -> tuple[dict, dict]:
    """``(config, run)``: the result-defining options and the runtime-only ones."""
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    run = {k: getattr(args, k, None) for k in _RUNTIME}
    if args.config:
        try:
            override = read_config(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(override, dict):
            raise UsageError("the config file must hold a JSON object")
        if override.get("command", args.command) != args.command:
            raise UsageError(f"config is for {override['command']!r}, not {args.command!r}")
        for k, v in override.items():
            key = k.replace("-", "_")
            if key in _RUNTIME:
                run[key] = v
            elif key not in _NOT_CONFIG:
                cfg[key] = v
    if cfg.get("seed") is None:
        raise UsageError("--seed is required")
    if int(cfg["seed"]) < 0:
        raise UsageError("--seed must be nonnegative")
    return cfg, run


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg, run = resolve_config(args)
        text = args.command_fn(cfg, run)
        _emit(text, run["out"])
    except UsageError as exc:
        print(f"biprune: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError) as exc:
        print(f"biprune: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, MemoryError) as exc:
        print(f"biprune: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
