"""Command-line entry point: ``proxsarah run | verify | presets``.

Config files are INI. Example::

    [experiment]
    epochs = 20
    seed = 42
    out = results            ; relative to the config file
    output_rule = last       ; last | uniform | weighted
    ; trace_stride = 50

    [problem]
    kind = nnpca             ; nnpca | binclass
    n = 1000                 ; synthetic size (ignored with dataset =)
    d = 50
    ; dataset = data/a9a.txt ; LIBSVM file, optionally gzipped
    ; n_features = 123
    ; loss = l2              ; binclass: l1 | l2 | l3
    ; lambda = 0.001         ; binclass, default 1/n
    ; omega = 1
    ; test_fraction = 0.2
    ; separability = 1.0     ; synthetic binclass label noise control
    ; data_seed = 7          ; defaults to the experiment seed

    [solver v1]              ; one section per solver; the label names the CSV
    preset = v1              ; defaults to the label
    ; batch = mini           ; svrg only
    ; eta0 = 0.1             ; sgd only
    ; eta_tilde = 1.0        ; sgd only
    ; b_hat = 1              ; sgd only

Exit codes: 0 success, 1 failed verification, 2 usage or configuration error.
"""

import argparse
import configparser
import hashlib
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, data, presets, problems, stepsize, svg, verify
from .errors import ConfigurationError, ParseError, ProxSarahError, UnsupportedOperationError
from .metrics import TraceRecorder, residual_is_absolute
from .solvers import OUTPUT_RULES, ProxSGD, SolverConfig, run

log = logging.getLogger("proxsarah")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

EXPERIMENT_KEYS = {"epochs", "seed", "out", "output_rule", "trace_stride"}
PROBLEM_KEYS = {
    "kind", "n", "d", "dataset", "n_features", "loss", "lambda", "omega",
    "test_fraction", "separability", "data_seed", "density",
}
SOLVER_KEYS = {"preset", "batch", "eta0", "eta_tilde", "b_hat"}


# config --------------------------------------------------------------------


def _unknown(section, keys, allowed):
    extra = sorted(set(keys) - allowed)
    if extra:
        raise ConfigurationError(f"[{section}]: unknown key(s) {', '.join(extra)}")


def _get(section, key, conv, default=None):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError:
        raise ConfigurationError(f"[{section.name}] {key} = {raw!r} is not a valid value") from None


def load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    for name in ("experiment", "problem"):
        if name not in cp:
            raise ConfigurationError(f"{path}: missing [{name}] section")
    exp, prob = cp["experiment"], cp["problem"]
    _unknown("experiment", exp.keys(), EXPERIMENT_KEYS)
    _unknown("problem", prob.keys(), PROBLEM_KEYS)
    solvers = []
    for sec in cp.sections():
        if sec in ("experiment", "problem"):
            continue
        if not sec.startswith("solver "):
            raise ConfigurationError(f"unknown section [{sec}]")
        label = sec[len("solver "):].strip()
        if not label or any(c in label for c in "/\\"):
            raise ConfigurationError(f"[{sec}]: bad solver label")
        _unknown(sec, cp[sec].keys(), SOLVER_KEYS)
        solvers.append((label, dict(cp[sec])))
    if not solvers:
        raise ConfigurationError("config lists no [solver ...] section")
    base = Path(path).resolve().parent
    return {
        "base": base,
        "epochs": _get(exp, "epochs", float, 10.0),
        "seed": _get(exp, "seed", int, 0),
        "out": base / exp.get("out", "results").strip(),
        "output_rule": exp.get("output_rule", "last").strip(),
        "trace_stride": _get(exp, "trace_stride", int),
        "problem": prob,
        "solvers": solvers,
        "text": Path(path).read_text(encoding="utf-8"),
    }


def build_problem(prob, seed, base):
    """Returns ``(oracle, train, test, dataset_key)``."""
    kind = prob.get("kind", "").strip()
    if kind not in ("nnpca", "binclass"):
        raise ConfigurationError(f"[problem] kind = {kind!r}; expected nnpca or binclass")
    data_seed = _get(prob, "data_seed", int, seed)
    path = prob.get("dataset")
    if path:
        full = (base / path.strip()).resolve()
        ds = data.load_libsvm(full, _get(prob, "n_features", int))
        key = f"file:{full}"
    else:
        n, d = _get(prob, "n", int, 1000), _get(prob, "d", int, 50)
        density = _get(prob, "density", float, 0.1)
        if kind == "nnpca":
            ds = data.synth_nnpca(n, d, data_seed, density=density)
        else:
            sep = _get(prob, "separability", float, 1.0)
            ds = data.synth_binclass(n, d, data_seed, separability=sep, density=density)
        key = f"synth:{kind}:n={n}:d={d}:seed={data_seed}:density={density!r}"
    ds = data.normalize_rows(ds)
    if kind == "nnpca":
        return problems.NnPcaProblem(ds), None, None, key
    ds = data.canonicalize_labels(ds)
    frac = _get(prob, "test_fraction", float, 0.0)
    train, test = data.split(ds, frac, data_seed) if frac > 0 else (ds, None)
    oracle = problems.BinClassProblem(
        train,
        loss=prob.get("loss", problems.TWO_LAYER).strip(),
        omega=_get(prob, "omega", float, 1.0),
        lam=_get(prob, "lambda", float),
    )
    key += f":loss={oracle.loss}:omega={oracle.omega!r}:lambda={oracle.lam!r}:test={frac!r}"
    return oracle, train, test, key


def build_method(label, opts, n, L):
    name = opts.get("preset", label).strip()
    if name not in presets.PRESETS:
        raise ConfigurationError(
            f"[solver {label}] preset = {name!r} is not a known solver; "
            f"known: {', '.join(presets.PRESETS)}"
        )
    extra = {}
    if "batch" in opts:
        if name != "svrg":
            raise ConfigurationError(f"[solver {label}] batch applies to svrg only")
        extra["batch"] = opts["batch"].strip()
    meth = presets.get(name)(n, L, **extra)
    sgd_keys = {"eta0", "eta_tilde", "b_hat"} & set(opts)
    if sgd_keys:
        if not isinstance(meth, ProxSGD):
            raise ConfigurationError(f"[solver {label}] {', '.join(sorted(sgd_keys))} apply to sgd only")
        try:
            meth = replace(meth, **{k: (int if k == "b_hat" else float)(opts[k]) for k in sgd_keys})
        except ValueError as exc:
            raise ConfigurationError(f"[solver {label}] {exc}") from None
    return replace(meth, name=label)


# run -----------------------------------------------------------------------


def _load_fstar(path, key):
    try:
        return json.loads(path.read_text()).get(key)
    except (FileNotFoundError, json.JSONDecodeError):
        return None


def _save_fstar(path, key, value):
    try:
        table = json.loads(path.read_text())
    except (FileNotFoundError, json.JSONDecodeError):
        table = {}
    table[key] = value
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")


def cmd_run(args):
    cfg = load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    epochs = cfg["epochs"] if args.epochs is None else args.epochs
    out = Path(args.out) if args.out else cfg["out"]
    if cfg["output_rule"] not in OUTPUT_RULES:
        raise ConfigurationError(f"[experiment] output_rule must be one of {', '.join(OUTPUT_RULES)}")
    oracle, train, test, key = build_problem(cfg["problem"], seed, cfg["base"])
    jobs = []
    for label, opts in cfg["solvers"]:
        meth = build_method(label, opts, oracle.n, oracle.L)
        scfg = SolverConfig(meth, epochs=epochs, seed=seed, output_rule=cfg["output_rule"],
                            trace_stride=cfg["trace_stride"])
        jobs.append((label, scfg))
    if len({label for label, _ in jobs}) != len(jobs):
        raise ConfigurationError("solver labels must be unique")

    threads = max(int(args.threads), 1)
    inner_workers = threads if len(jobs) == 1 else 1

    def execute(job):
        label, scfg = job
        rec = TraceRecorder(oracle, oracle.regularizer, train=train, test=test,
                            wall_clock=args.wall_clock)
        return run(oracle, oracle.regularizer, replace(scfg, workers=inner_workers), recorder=rec)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(execute, jobs))
    else:
        results = [execute(j) for j in jobs]

    out.mkdir(parents=True, exist_ok=True)
    fstar_path = out / "fstar.json"
    session_min = min(r.trace.min_objective() for r in results)
    previous = _load_fstar(fstar_path, key)
    f_star = session_min if previous is None else min(previous, session_min)
    if not math.isfinite(f_star):
        raise ProxSarahError("no finite objective value recorded")
    _save_fstar(fstar_path, key, f_star)
    if residual_is_absolute(f_star):
        log.warning("F* = 0: rel_residual column holds the absolute residual F - F*")

    for (label, _), res in zip(jobs, results):
        with open(out / f"{label}.csv", "w", encoding="utf-8", newline="") as fh:
            res.trace.write_csv(fh, f_star)
    _write_plots(out, jobs, results, f_star, train is not None)
    _write_manifest(out, cfg, args, key, seed, epochs, f_star, jobs, results)
    print(f"wrote {len(results)} trace(s) to {out} (F* = {f_star:.17g})")
    return EXIT_OK


def _write_plots(out, jobs, results, f_star, with_accuracy):
    from .metrics import rel_residual

    def series(fn):
        return [(label, list(r.trace.column("epoch_fraction")), fn(r)) for (label, _), r in zip(jobs, results)]

    ylabel = "F(w) - F*" if residual_is_absolute(f_star) else "(F(w) - F*) / |F*|"
    charts = {
        "objective_residual.svg": (
            series(lambda r: [rel_residual(x.objective, f_star) for x in r.trace.rows]),
            "Relative objective residual", ylabel, True,
        ),
        "grad_map_norm.svg": (
            series(lambda r: list(r.trace.column("grad_map_norm_sq"))),
            "Gradient mapping norm", "||G_0.5(w)||^2", True,
        ),
    }
    if with_accuracy:
        charts["accuracy.svg"] = (
            series(lambda r: list(r.trace.column("train_acc"))),
            "Training accuracy", "accuracy", False,
        )
    for name, (ser, title, ylab, log_y) in charts.items():
        (out / name).write_text(svg.line_chart(ser, title, "epochs", ylab, log_y=log_y), encoding="utf-8")


def _write_manifest(out, cfg, args, key, seed, epochs, f_star, jobs, results):
    manifest = {
        "config_sha256": hashlib.sha256(cfg["text"].encode()).hexdigest(),
        "dataset": key,
        "seed": seed,
        "epochs": epochs,
        "F_star": f_star,
        "residual": "absolute" if residual_is_absolute(f_star) else "relative",
        "eta_ref": results[0].trace.eta_ref,
        "versions": {
            "proxsarah": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "solvers": [
            {
                "label": label,
                "method": type(scfg.method).__name__,
                "seed": scfg.seed,
                "output_rule": scfg.output_rule,
                "outer_iterations": r.outer_iterations,
                "sfo": r.counters.sfo,
                "prox_calls": r.counters.prox_calls,
                "rows": len(r.trace.rows),
                **r.trace.meta,
            }
            for (label, scfg), r in zip(jobs, results)
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# verify / presets ------------------------------------------------------------


def cmd_verify(args):
    original = stepsize.omega_finite_sum
    if args.mutate == "omega":
        stepsize.omega_finite_sum = lambda n, b: 1.01 * original(n, b)
    # sweeps hit the weight clamp on purpose
    quiet = logging.getLogger(stepsize.__name__)
    level = quiet.level
    quiet.setLevel(logging.ERROR)
    try:
        results = verify.run_all()
    finally:
        stepsize.omega_finite_sum = original
        quiet.setLevel(level)
    print(verify.format_table(results))
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"\n{r.name}: {len(r.failures)} failing case(s)", file=sys.stderr)
        for case in r.failures[:5]:
            print(f"  {case}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_presets(args):
    if args.action == "list":
        for name in presets.SARAH_PRESETS + presets.BASELINE_PRESETS:
            print(f"{name:12s} {presets.PRESETS[name].summary}")
        return EXIT_OK
    if not args.name:
        raise ConfigurationError("presets describe needs a preset name")
    extra = {"batch": args.batch} if args.batch else {}
    info = presets.describe(args.name, args.n, args.L, **extra)
    print(f"{args.name}: {presets.PRESETS[args.name].summary}")
    for k, v in info.items():
        print(f"  {k} = {v!r}" if isinstance(v, float) else f"  {k} = {v}")
    return EXIT_OK


def _parser():
    p = argparse.ArgumentParser(prog="proxsarah", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the solvers listed in a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--epochs", type=float)
    r.add_argument("--out")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--wall-clock", action="store_true",
                   help="fill wall_ms (makes CSVs run-dependent)")

    v = sub.add_parser("verify", help="run the brute-force property checks")
    v.add_argument("--mutate", choices=["omega"], help=argparse.SUPPRESS)

    ps = sub.add_parser("presets", help="list or describe solver presets")
    ps.add_argument("action", choices=["list", "describe"])
    ps.add_argument("name", nargs="?")
    ps.add_argument("--n", type=int, default=1000)
    ps.add_argument("--L", type=float, default=1.0)
    ps.add_argument("--batch", choices=["single", "mini"])
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "verify": cmd_verify, "presets": cmd_presets}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, ParseError, UnsupportedOperationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProxSarahError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
