"""Command line entry point: ``hsicnoma {eval,sweep,validate,figure}``.

Exit status: 0 when everything ran and agreed, 1 on a numerical
disagreement, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness
from .errors import ConfigError
from .sampling import SamplerSpec

EXIT_OK, EXIT_DISAGREE, EXIT_CONFIG = 0, 1, 2

_DEFAULTS = {"users": 5, "m": 1, "n": 5, "beta": 1 / 3, "rm": 0.2, "ratio": 5.0, "snr_db": 20.0}


def _default_seed():
    raw = os.environ.get(harness.SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{harness.SEED_ENV} must be an integer, got {raw!r}") from None


def _number(text):
    try:
        return harness.parse_number(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _list(text):
    return [t for t in text.replace(",", " ").split() if t]


def _add_scenario(p):
    g = p.add_argument_group("scenario (flags override --config)")
    g.add_argument("--config", help="INI scenario file")
    g.add_argument("--users", type=int, help="number of users M")
    g.add_argument("--m", type=int, help="order index of the legacy user")
    g.add_argument("--n", type=int, help="order index of the opportunistic user")
    g.add_argument("--beta", type=_number, help="power-reducing coefficient in (0, 1/2)")
    g.add_argument("--rm", type=_number, help="legacy target rate (BPCU)")
    g.add_argument("--ratio", type=_number, help="rho_n / rho_m")
    g.add_argument("--snr-db", dest="snr_db", type=_number, help="SNR = rho_n in dB")


def _add_run(p, methods="MC,CF"):
    g = p.add_argument_group("run")
    g.add_argument("--methods", default=None, help=f"comma list of MC,CF,QUAD,ASYM (default {methods})")
    g.add_argument("--schemes", default=None, help="comma list of HSIC,FSIC (default HSIC)")
    g.add_argument("--samples", type=float, default=None, help="Monte Carlo draws")
    g.add_argument("--seed", type=int, default=None, help=f"base seed (default ${harness.SEED_ENV} or 0)")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--tol", type=float, default=1e-10, help="quadrature relative tolerance")
    g.add_argument("--out", help="output file (or directory for figure)")
    g.add_argument("--format", choices=("csv", "json"), default=None)


def _doc(args):
    return harness.read_scenario(args.config) if args.config else {
        "scenario": {}, "sweep": {}, "run": {}, "curves": {}, "meta": {}}


def _scenario(args, doc):
    scen = dict(_DEFAULTS)
    scen.update(doc["scenario"])
    for key in _DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            scen[key] = val
    return scen


def _run_opts(args, doc, methods="MC,CF"):
    run = doc["run"]
    meths = _list(args.methods) if args.methods else run.get("methods", _list(methods))
    schemes = _list(args.schemes) if args.schemes else run.get("schemes", ["HSIC"])
    samples = int(args.samples) if args.samples is not None else run.get("samples", 10**6)
    seed = args.seed if args.seed is not None else run.get("seed", _default_seed())
    sampler = SamplerSpec(seed=seed, n_samples=samples, workers=args.workers)
    return harness.parse_methods(meths), harness.parse_schemes(schemes), sampler


def cmd_eval(args):
    doc = _doc(args)
    cfg = harness.build_config(_scenario(args, doc))
    methods, schemes, sampler = _run_opts(args, doc, "MC,CF,QUAD")
    report = harness.run_eval(cfg, methods, sampler, schemes, tol=args.tol)
    text = json.dumps(report, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["agree"] else EXIT_DISAGREE


def cmd_sweep(args):
    doc = _doc(args)
    sweep = dict(doc["sweep"])
    for key in ("axis", "start", "stop", "steps"):
        val = getattr(args, key)
        if val is not None:
            sweep[key] = val
    missing = [k for k in ("axis", "start", "stop", "steps") if k not in sweep]
    if missing:
        raise ConfigError(f"sweep needs {', '.join('--' + k for k in missing)}")
    scen = _scenario(args, doc)
    scen[harness.axis_scenario_key(sweep["axis"])] = sweep["start"]
    methods, schemes, sampler = _run_opts(args, doc)
    spec = harness.SweepSpec(sweep["axis"], float(sweep["start"]), float(sweep["stop"]),
                             int(sweep["steps"]), harness.build_config(scen), methods, schemes)
    rows = harness.run_sweep(spec, args.out, sampler, args.format, args.tol)
    if not args.out:
        harness.write_rows_stream(rows, sys.stdout, args.format or "csv")
    return EXIT_DISAGREE if any(r.probability is None for r in rows) else EXIT_OK


def cmd_validate(args):
    seed = args.seed if args.seed is not None else _default_seed()

    def progress(rec):
        if args.verbose and "error" in rec:
            print(f"[{rec['index']:3d}] FAIL {rec['error']}", file=sys.stderr)
        elif args.verbose:
            status = "ok" if rec["pass"] else "FAIL"
            print(f"[{rec['index']:3d}] {status} {rec['regime']} rel={rec['rel_cf_quad']:.2e} "
                  f"sig={rec['sigmas_cf_mc']:.2f}", file=sys.stderr)

    report = harness.run_validate(args.configs, seed, args.rtol, args.k, int(args.samples),
                                  args.workers, args.tol, progress)
    doc = report.to_dict()
    doc["seconds"] = report.seconds
    text = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(f"{len(report.records) - len(report.failures)}/{len(report.records)} configurations "
          f"passed ({report.seconds:.1f} s)")
    return EXIT_OK if report.passed else EXIT_DISAGREE


def cmd_figure(args):
    if args.preset == "list":
        print("\n".join(harness.preset_names()))
        return EXIT_OK
    doc = harness.load_preset(args.preset)
    run = doc["run"]
    samples = int(args.samples) if args.samples is not None else run.get("samples", 10**6)
    seed = args.seed if args.seed is not None else run.get("seed", _default_seed())
    sampler = SamplerSpec(seed=seed, n_samples=samples, workers=args.workers)
    paths = harness.run_figure(args.preset, args.out or ".", sampler, args.format or "csv",
                               tol=args.tol)
    for path in paths:
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hsicnoma",
        description="Probability that HSIC/FSIC hybrid NOMA fails to beat OMA.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate one configuration by several methods")
    _add_scenario(p)
    _add_run(p, "MC,CF,QUAD")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sweep one parameter and write CSV/JSON rows")
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--axis", choices=harness.AXES)
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="closed form vs quadrature vs Monte Carlo on random configs")
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--samples", type=float, default=1e7)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rtol", type=float, default=1e-6, help="closed form vs quadrature")
    p.add_argument("--k", type=float, default=3.0, help="closed form vs MC, in standard errors")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figure", help="run a figure preset ('list' shows them)")
    p.add_argument("preset")
    p.add_argument("--samples", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(func=cmd_figure)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
