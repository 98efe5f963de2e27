"""Command-line entry point.

Every command writes its results to ``--out-dir`` as JSON (everything) or
CSV (the per-instance table, plus a JSON summary) and a manifest listing
each artifact with its SHA-256 digest. Exit status: 0 when every check
passes, 1 on a verification failure or an unwritable path, 2 on a usage
error or an invalid parameter.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import shutil
import sys
import tempfile

from . import __version__
from ._jit import BACKEND
from ._parallel import default_jobs
from .exact import InvalidParameter
from .monotone import CapabilityError
from .report import ReportError, RunManifest, read_json, write_report

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

GLOBAL_DEFAULTS = {"out_dir": "kmtc_out", "format": "json", "jobs": None, "seed": 0, "out": None}

COMMAND_DEFAULTS = {
    "verify-lemmas": {"m_max": 300, "m_max_shifted": 200, "h_max": 8, "grid": 10_000, "ash_n_max": 500,
                      "suites": ["mass", "shifted", "ratio", "tail", "entropy", "ash"]},
    "stein": {"n_max": 64, "max_states": 10_000, "hoeffding_n_max": 40,
              "suites": ["calculus", "stationary", "hoeffding"]},
    "couple": {"theorem": "1.5", "n": None, "k": None, "s": 0, "part": 1, "theta": None, "theta_grid": None,
               "exact_solve_limit": None, "n_max": None, "depth": 3, "table_limit": 2**15},
    "embed-ep": {"n": [256, 1024, 4096], "reps": 2000, "depth_rule": "ceil_log2", "refine": 2},
    "embed-rw": {"n": [64, 256, 1024, 4096], "t": None, "lambda_": None, "reps": 1000, "mode": "bridge",
                 "allow_above_lambda0": False},
    "report": {"manifest": None, "rerun": False},
}

N_MAX_DEFAULTS = {"1.4": 2000, "1.1": 4096, "1.5": 64, "1.6": 48}


class UsageError(Exception):
    pass


def _add_globals(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--out-dir", default=S, help="directory for reports and the manifest (default kmtc_out)")
    p.add_argument("--out", default=S, help="file name of the main report (extension picks the format)")
    p.add_argument("--format", choices=("json", "csv"), default=S, help="report format (default json)")
    p.add_argument("--jobs", type=int, default=S, help="worker processes (default: available cores)")
    p.add_argument("--seed", type=int, default=S, help="master seed (default 0)")
    p.add_argument("--config", default=S, help="plain-text 'key = value' file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="kmtcouple", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("verify-lemmas", help="exact binomial mass/tail comparisons, entropy and Ash bounds")
    _add_globals(p)
    p.add_argument("--m-max", type=int, default=S)
    p.add_argument("--m-max-shifted", type=int, default=S, help="range of the shifted comparison (capped by --m-max)")
    p.add_argument("--h-max", type=int, default=S)
    p.add_argument("--grid", type=int, default=S, help="grid size of the entropy bound")
    p.add_argument("--ash-n-max", type=int, default=S)
    p.add_argument("--suites", nargs="+", choices=COMMAND_DEFAULTS["verify-lemmas"]["suites"], default=S)

    p = sub.add_parser("stein", help="Stein calculus cross-validation, stationary corpus, Hoeffding comparison")
    _add_globals(p)
    p.add_argument("--n-max", type=int, default=S)
    p.add_argument("--max-states", type=int, default=S)
    p.add_argument("--hoeffding-n-max", type=int, default=S)
    p.add_argument("--suites", nargs="+", choices=COMMAND_DEFAULTS["stein"]["suites"], default=S)

    p = sub.add_parser("couple", help="exact couplings: 1.4 signed quantile, 1.1 Gaussian quantile, "
                                      "1.5 binomial scaling, 1.6 sample sums, chain sampling")
    _add_globals(p)
    p.add_argument("--theorem", choices=("1.4", "1.1", "1.5", "1.6", "chain"), default=S)
    p.add_argument("--n", type=int, default=S, help="single instance (default: sweep up to --n-max)")
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--s", type=int, default=S)
    p.add_argument("--part", type=int, choices=(1, 2), default=S)
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--theta-grid", type=float, nargs="+", default=S)
    p.add_argument("--exact-solve-limit", type=int, default=S)
    p.add_argument("--n-max", type=int, default=S)
    p.add_argument("--depth", type=int, default=S)
    p.add_argument("--table-limit", type=int, default=S)

    p = sub.add_parser("embed-ep", help="dyadic empirical-process / Brownian-bridge coupling Monte Carlo")
    _add_globals(p)
    p.add_argument("--n", type=int, nargs="+", default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--depth-rule", default=S, help="ceil_log2, floor_log2 or an integer depth")
    p.add_argument("--refine", type=int, default=S)

    p = sub.add_parser("embed-rw", help="recursive random-walk / Gaussian-bridge coupling Monte Carlo")
    _add_globals(p)
    p.add_argument("--n", type=int, nargs="+", default=S)
    p.add_argument("--t", type=int, nargs="+", default=S)
    p.add_argument("--lambda", dest="lambda_", type=float, nargs="+", default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--mode", choices=("bridge", "full"), default=S)
    p.add_argument("--allow-above-lambda0", action="store_true", default=S)

    p = sub.add_parser("report", help="verify a manifest's digests, optionally re-running its command")
    _add_globals(p)
    p.add_argument("manifest")
    p.add_argument("--rerun", action="store_true", default=S)
    return parser


def _actions(parser: argparse.ArgumentParser, command: str) -> dict:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest: a for a in sub.choices[command]._actions}


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _convert(action: argparse.Action, raw: str):
    if isinstance(action, (argparse._StoreTrueAction,)):
        return raw.lower() in ("1", "true", "yes", "on")
    conv = action.type or str
    if action.nargs in ("+", "*"):
        vals = [conv(x) for x in raw.replace(",", " ").split()]
    else:
        vals = [conv(raw)]
    if action.choices is not None and any(v not in action.choices for v in vals):
        raise UsageError(f"invalid value {raw!r} for {action.dest}")
    return vals if action.nargs in ("+", "*") else vals[0]


def resolve_params(parser, ns: argparse.Namespace) -> dict:
    """defaults < config file < flags."""
    command = ns.command
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    params = {**GLOBAL_DEFAULTS, **COMMAND_DEFAULTS[command]}
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        acts = _actions(parser, command)
        for key, raw in read_config(cfg_path).items():
            if key == "lambda":
                key = "lambda_"
            if key not in params or key not in acts:
                raise UsageError(f"unknown config key {key!r} for {command}")
            try:
                params[key] = _convert(acts[key], raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from exc
    params.update(given)
    if params["jobs"] is None:
        params["jobs"] = default_jobs()
    if params["jobs"] < 1:
        raise UsageError("--jobs must be positive")
    if params["seed"] < 0:
        raise UsageError("--seed must be nonnegative")
    return params


# Commands. Each returns (results, table, passed).

def _flat(rows) -> list:
    return [{k: v for k, v in r.items() if not isinstance(v, (dict, list, tuple))} for r in rows]


def cmd_verify_lemmas(p: dict):
    from . import lemmas as L

    suites = p["suites"]
    j = p["jobs"]
    reports, skipped = [], []
    m_max = p["m_max"]
    if "mass" in suites:
        reports.append(L.check_mass_domination(m_max, j))
    if "shifted" in suites:
        reports.append(L.check_shifted_domination(min(m_max, p["m_max_shifted"]), j))
    if "ratio" in suites:
        if m_max >= 2:
            reports.append(L.check_ratio_monotonicity(m_max, p["h_max"], j))
        else:
            skipped.append({"suite": "ratio", "reason": "needs m_max >= 2"})
    if "tail" in suites:
        reports.append(L.check_tail_domination(m_max, j))
    if "entropy" in suites:
        reports.append(L.check_entropy_bound(p["grid"]))
    if "ash" in suites:
        reports.append(L.check_ash_sandwich(p["ash_n_max"], j))
    passed = all(r.passed for r in reports)
    results = {"command": "verify-lemmas", "pass": passed, "reports": [r.to_dict() for r in reports],
               "skipped": skipped}
    table = [
        {"m": row.get("m"), "lemma": r.lemma, "pass": row["pass"], "worst_margin": row["worst_margin"]}
        for r in reports for row in r.per_param
    ]
    return results, table, passed


def cmd_stein(p: dict):
    from .stein import stein_crossvalidate
    from .theorems import hoeffding_sweep, stationary_corpus

    results = {"command": "stein"}
    table = []
    if "calculus" in p["suites"]:
        cv = stein_crossvalidate(p["n_max"], p["jobs"])
        results["calculus"] = cv
        for fam in ("binomial", "hypergeometric"):
            for kind, cnt in cv[fam]["instances"].items():
                table.append({"suite": "calculus", "family": f"{fam}_{kind}", "instances": cnt,
                              "failures": cv[fam]["mismatches_by_kind"][kind]})
    if "stationary" in p["suites"]:
        sc = stationary_corpus(p["max_states"], jobs=p["jobs"])
        results["stationary"] = sc
        for fam, d in sc["families"].items():
            table.append({"suite": "stationary", "family": fam, "instances": d["instances"],
                          "failures": d["failures"]})
    if "hoeffding" in p["suites"]:
        hs = hoeffding_sweep(p["hoeffding_n_max"], p["jobs"])
        results["hoeffding"] = hs
        table.append({"suite": "hoeffding", "family": "with_vs_without_replacement", "instances": hs["checks"],
                      "failures": hs["violation_count"]})
    passed = all(results[k]["pass"] for k in ("calculus", "stationary", "hoeffding") if k in results)
    results["pass"] = passed
    return results, table, passed


def cmd_couple(p: dict):
    from . import monotone as M
    from . import theorems as T

    th, n, j = p["theorem"], p["n"], p["jobs"]
    n_max = p["n_max"] if p["n_max"] is not None else N_MAX_DEFAULTS.get(th)
    if th == "1.5":
        theta = 0.25 if p["theta"] is None else p["theta"]
        if not T.admissible_theta(theta):
            raise InvalidParameter(f"theta={theta} is not admissible (need 8 theta^2 e^(2 theta) < 1)")
        if n is not None:
            res = T.couple_binomials(n, theta, exact_limit=p["exact_solve_limit"]).data
            return res, [_flat_instance(res)], res["pass"]
        res = T.binomial_scaling_sweep(n_max, theta, j)
        return res, [_flat_instance(r) for r in res["instances"]], res["pass"]
    if th == "1.6":
        grid = p["theta_grid"] or ([p["theta"]] if p["theta"] is not None else list(T.THETA_GRID))
        if any(t <= 0 for t in grid):
            raise InvalidParameter("theta values must be positive")
        if n is not None:
            k = p["k"] if p["k"] is not None else n // 2
            res = T.couple_hypergeos(n, k, p["s"], grid, part=p["part"], exact_limit=p["exact_solve_limit"]).data
            return res, [_flat_instance(res)], res["pass"]
        if n_max < 6:
            raise InvalidParameter("the sample-sum sweep needs n_max >= 6")
        res = T.sample_sum_sweep(tuple(range(6, n_max + 1, 2)), grid, j)
        table = [{"n": r["n"], "k": r["k"], "part": 1, "max_functional": max(r["functional"]), "pass": r["pass"]}
                 for r in res["part1_instances"]]
        return res, table, res["pass"]
    if th == "1.4":
        if n is not None:
            if n < 2 or n % 2:
                raise InvalidParameter("n must be even and at least 2")
            res = M.signed_coupling_margins(n)
            return res, [_flat_instance(res)], res["pass"]
        res = M.signed_coupling_sweep(n_max, j)
        return res, _flat(res["rows"]), res["pass"]
    if th == "1.1":
        if n is not None:
            if n < 1:
                raise InvalidParameter("n must be positive")
            res = M.gaussian_quantile_check(n).to_dict()
            return res, [res], res["pass"]
        res = M.quantile_coupling_sweep(n_max, j)
        return res, _flat(res["rows"]), res["pass"]
    # chain
    res = M.chain_sample(n if n is not None else 2, p["depth"], p["seed"], p["table_limit"]).to_dict()
    res["pass"] = all(s["ok"] for s in res["steps"])
    return res, _flat(res["steps"]), res["pass"]


def _flat_instance(d: dict) -> dict:
    row = {k: v for k, v in d.items() if not isinstance(v, (dict, list, tuple))}
    for k, v in d.get("solve", {}).items():
        row[k] = v
    return row


def cmd_embed_ep(p: dict):
    from .ep import run_ep_experiment

    if p["reps"] < 1:
        raise InvalidParameter("reps must be positive")
    rule = p["depth_rule"]
    if isinstance(rule, str) and rule.isdigit():
        rule = int(rule)
    res = run_ep_experiment(p["n"], p["reps"], p["seed"], rule, p["refine"], p["jobs"], min_reps=1)
    res["rate_checks_meaningful"] = p["reps"] >= 100
    return res, res["rows"], res["pass"]


def cmd_embed_rw(p: dict):
    from .rw import DEFAULT_CONFIG, run_rw_experiment

    if p["reps"] < 1:
        raise InvalidParameter("reps must be positive")
    lams = p["lambda_"] if p["lambda_"] is not None else [DEFAULT_CONFIG.lambda0]
    res = run_rw_experiment(p["n"], lams, p["reps"], p["seed"], p["mode"], p["t"],
                            allow_above_lambda0=p["allow_above_lambda0"], jobs=p["jobs"], min_reps=1)
    res["rate_checks_meaningful"] = p["reps"] >= 100
    return res, res["rows"], res["pass"]


COMMANDS = {
    "verify-lemmas": cmd_verify_lemmas,
    "stein": cmd_stein,
    "couple": cmd_couple,
    "embed-ep": cmd_embed_ep,
    "embed-rw": cmd_embed_rw,
}


def _stem(command: str, p: dict) -> str:
    if command == "couple":
        return f"couple_{p['theorem'].replace('.', '_')}"
    return command.replace("-", "_")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _outputs(command: str, p: dict):
    """(out_dir, main file name, format)."""
    out_dir, fmt, out = p["out_dir"], p["format"], p["out"]
    if out:
        if os.path.isabs(out):
            out_dir, out = os.path.dirname(out), os.path.basename(out)
        ext = os.path.splitext(out)[1].lower()
        if ext in (".json", ".csv"):
            fmt = ext[1:]
        return out_dir, out, fmt
    return out_dir, f"{_stem(command, p)}.{fmt}", fmt


def run_suite(command: str, argv: list, p: dict) -> int:
    started = _now()
    results, table, passed = COMMANDS[command](p)
    out_dir, main_name, fmt = _outputs(command, p)
    stem = os.path.splitext(main_name)[0]
    digests = {}
    if fmt == "json":
        digests[main_name] = write_report(results, os.path.join(out_dir, main_name), "json")
    else:
        digests[main_name] = write_report(table, os.path.join(out_dir, main_name), "csv")
        summary = {k: v for k, v in results.items() if k != "rows"}
        digests[f"{stem}.summary.json"] = write_report(summary, os.path.join(out_dir, f"{stem}.summary.json"))
    code = EXIT_OK if passed else EXIT_FAIL
    params = {k: v for k, v in p.items() if k not in ("out_dir",)}
    man = RunManifest(command, list(argv), params, p["seed"], __version__, BACKEND, started, _now(), code, digests)
    write_report(man.to_dict(), os.path.join(out_dir, f"{stem}.manifest.json"))
    status = "PASS" if passed else "FAIL"
    print(f"{command}: {status} -> {os.path.join(out_dir, main_name)}")
    return code


def run_report(argv: list, p: dict) -> int:
    path = p["manifest"]
    try:
        man = RunManifest.from_dict(read_json(path))
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    status = man.verify(base)
    ok = all(v == "ok" for v in status.values())
    result = {"manifest": path, "command": man.command, "digests": status, "digests_ok": ok}
    if p["rerun"]:
        tmp = tempfile.mkdtemp(prefix="kmtc_rerun_")
        try:
            args = list(man.argv) + ["--out-dir", tmp]
            if man.params.get("out"):
                args += ["--out", os.path.basename(man.params["out"])]
            with _quiet():
                main(args)
            fresh = RunManifest.from_dict(read_json(_find_manifest(tmp)))
            same = fresh.outputs == man.outputs
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        result["rerun_identical"] = same
        ok = ok and same
    result["pass"] = ok
    for name, st in status.items():
        print(f"{name}: {st}")
    if p["rerun"]:
        print(f"rerun: {'identical' if result['rerun_identical'] else 'DIFFERENT'}")
    return EXIT_OK if ok else EXIT_FAIL


def _find_manifest(d: str) -> str:
    names = sorted(n for n in os.listdir(d) if n.endswith(".manifest.json"))
    if len(names) != 1:
        raise ReportError(f"expected one manifest in {d}, found {len(names)}")
    return os.path.join(d, names[0])


class _quiet:
    def __enter__(self):
        self._old = sys.stdout
        sys.stdout = open(os.devnull, "w")

    def __exit__(self, *exc):
        sys.stdout.close()
        sys.stdout = self._old


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        p = resolve_params(parser, ns)
        if ns.command == "report":
            return run_report(argv, p)
        return run_suite(ns.command, argv, p)
    except (UsageError, InvalidParameter, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def entry() -> None:  # pragma: no cover
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    entry()
