"""Evaluation, sweeps, cross-method validation and figure presets.

Every output row has the same nine columns whatever the method, so a sweep
can be plotted or diffed without knowing which routes produced it.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .asymptotics import ptilde_joint_limit
from .closed_form import classify_regime, derive_constants, ptilde_closed
from .errors import ConfigError, NonConvergenceError, SingularRegimeError
from .estimates import Method
from .model import Scheme, SystemConfig
from .quadrature import ptilde_quadrature
from .sampling import SamplerSpec, binomial_estimate, mc_counts

COLUMNS = ("axis", "axis_value", "scheme", "method", "probability", "stderr",
           "regime_table", "regime_column", "flags")
AXES = ("snr_db", "beta", "R_m", "rho_ratio")
HYBRID_SCHEMES = (Scheme.HSIC_HYBRID, Scheme.FSIC_HYBRID)
SEED_ENV = "HSICNOMA_SEED"


def parse_methods(values):
    return tuple(dict.fromkeys(Method.parse(v) for v in values))


def parse_schemes(values):
    out = tuple(dict.fromkeys(Scheme.parse(v) for v in values))
    if Scheme.OMA in out:
        raise ConfigError("OMA is the baseline, not a comparable scheme")
    return out


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    steps: int
    fixed: SystemConfig
    methods: tuple = (Method.MONTE_CARLO, Method.CLOSED_FORM)
    schemes: tuple = (Scheme.HSIC_HYBRID,)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if int(self.steps) < 2:
            raise ConfigError("a sweep needs at least 2 steps")
        if not self.start < self.stop:
            raise ConfigError(f"need start < stop, got {self.start} >= {self.stop}")
        object.__setattr__(self, "methods", parse_methods(self.methods))
        object.__setattr__(self, "schemes", parse_schemes(self.schemes))
        if not self.methods or not self.schemes:
            raise ConfigError("a sweep needs at least one method and one scheme")
        for value in (self.start, self.stop):
            self.config_at(value)  # raises ConfigError on an invalid endpoint

    def grid(self):
        return np.linspace(self.start, self.stop, int(self.steps))

    def config_at(self, value):
        cfg, value = self.fixed, float(value)
        if self.axis == "snr_db":
            return cfg.with_snr_db(value)
        if self.axis == "beta":
            return cfg.replace(beta=value)
        if self.axis == "R_m":
            return cfg.replace(R_m=value)
        if value <= 0:
            raise ConfigError("rho_ratio must be positive")
        return cfg.replace(rho_m=cfg.rho_n / value)


@dataclass(frozen=True)
class SweepRow:
    axis: str
    axis_value: float
    scheme: str
    method: str
    probability: float | None
    stderr: float | None
    regime_table: str = ""
    regime_column: int | None = None
    flags: tuple = field(default=())

    def __post_init__(self):
        p = self.probability
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError(f"row probability outside [0, 1]: {p!r}")

    def to_record(self):
        return {
            "axis": self.axis,
            "axis_value": self.axis_value,
            "scheme": self.scheme,
            "method": self.method,
            "probability": self.probability,
            "stderr": self.stderr,
            "regime_table": self.regime_table,
            "regime_column": self.regime_column,
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            axis=rec["axis"], axis_value=float(rec["axis_value"]), scheme=rec["scheme"],
            method=rec["method"], probability=rec["probability"], stderr=rec["stderr"],
            regime_table=rec["regime_table"], regime_column=rec["regime_column"],
            flags=tuple(rec["flags"]),
        )


# --- per-point evaluation ---------------------------------------------------


def _regime_fields(cfg):
    try:
        regime = classify_regime(cfg)
    except ArithmeticError:
        return "", None
    return regime.table.value, regime.column


def _closed_or_fallback(cfg, tol):
    try:
        return ptilde_closed(cfg), ()
    except SingularRegimeError as exc:
        est = ptilde_quadrature(cfg, tol)
        return est, ("singular", "fallback=quadrature", *(f"near_zero={c}" for c in exc.constants))


def evaluate_point(cfg, methods, schemes, sampler, tol=1e-10):
    """``[(scheme, method, estimate or None, flags)]`` for one configuration.

    Analytical routes exist for HSIC only; FSIC gets Monte Carlo alone.
    Errors are captured in the flags instead of propagating.
    """
    out = []
    counts = None
    for method in methods:
        for scheme in schemes:
            if method is not Method.MONTE_CARLO and scheme is not Scheme.HSIC_HYBRID:
                continue
            flags = ()
            try:
                if method is Method.MONTE_CARLO:
                    counts = counts or mc_counts(cfg, sampler)
                    hits = counts.hsic if scheme is Scheme.HSIC_HYBRID else counts.fsic
                    est = binomial_estimate(hits, counts.n_samples)
                elif method is Method.CLOSED_FORM:
                    est, flags = _closed_or_fallback(cfg, tol)
                elif method is Method.QUADRATURE:
                    est = ptilde_quadrature(cfg, tol)
                else:
                    est = ptilde_joint_limit(cfg)
                    flags = tuple(f for f in est.flags if f == "extrapolated")
            except (ArithmeticError, NonConvergenceError, ValueError) as exc:
                est, flags = None, (f"error={type(exc).__name__}",)
            out.append((scheme, method, est, flags))
    return out


def run_sweep(spec, out=None, sampler=None, fmt=None, tol=1e-10):
    """Evaluate every grid point of ``spec``; optionally write the rows to ``out``."""
    sampler = sampler or SamplerSpec()
    rows = []
    for value in spec.grid():
        cfg = spec.config_at(value)
        table, column = _regime_fields(cfg)
        for scheme, method, est, flags in evaluate_point(cfg, spec.methods, spec.schemes,
                                                         sampler, tol):
            rows.append(SweepRow(
                axis=spec.axis, axis_value=float(value), scheme=scheme.value,
                method=method.value,
                probability=None if est is None else float(est.value),
                stderr=None if est is None else float(est.stderr),
                regime_table=table, regime_column=column, flags=flags))
    if out is not None:
        write_rows(rows, out, fmt)
    return rows


# --- row I/O ------------------------------------------------------------------


def _fmt_path(path, fmt):
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    return fmt


def write_rows_stream(rows, fh, fmt="csv"):
    if fmt == "json":
        doc = {"columns": list(COLUMNS), "rows": [r.to_record() for r in rows]}
        fh.write(json.dumps(doc, indent=1) + "\n")
        return
    writer = csv.writer(fh)
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([
            r.axis, repr(float(r.axis_value)), r.scheme, r.method,
            "" if r.probability is None else repr(r.probability),
            "" if r.stderr is None else repr(r.stderr),
            r.regime_table, "" if r.regime_column is None else r.regime_column,
            ";".join(r.flags),
        ])


def write_rows(rows, path, fmt=None):
    path = Path(path)
    fmt = _fmt_path(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        write_rows_stream(rows, fh, fmt)
    return path


def read_rows(path, fmt=None):
    path = Path(path)
    fmt = _fmt_path(path, fmt)
    if fmt == "json":
        doc = json.loads(path.read_text())
        if tuple(doc["columns"]) != COLUMNS:
            raise ConfigError(f"unexpected columns {doc['columns']}")
        return [SweepRow.from_record(rec) for rec in doc["rows"]]
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != COLUMNS:
            raise ConfigError(f"unexpected columns {header}")
        for rec in reader:
            d = dict(zip(COLUMNS, rec))
            rows.append(SweepRow(
                axis=d["axis"], axis_value=float(d["axis_value"]), scheme=d["scheme"],
                method=d["method"],
                probability=float(d["probability"]) if d["probability"] else None,
                stderr=float(d["stderr"]) if d["stderr"] else None,
                regime_table=d["regime_table"],
                regime_column=int(d["regime_column"]) if d["regime_column"] else None,
                flags=tuple(d["flags"].split(";")) if d["flags"] else ()))
    return rows


# --- single point report ----------------------------------------------------


def run_eval(cfg, methods, spec=None, schemes=(Scheme.HSIC_HYBRID,), rtol=1e-6, k=3.0,
             tol=1e-10):
    """Evaluate ``cfg`` by each method and compare the HSIC estimates pairwise.

    Returns a JSON-ready dict; ``report["agree"]`` is False when closed form
    and quadrature differ by more than ``rtol`` relative, or when an
    analytical value is further than ``k`` standard errors from Monte Carlo.
    """
    methods = parse_methods(methods)
    schemes = parse_schemes(schemes)
    spec = spec or SamplerSpec()
    table, column = _regime_fields(cfg)
    results = evaluate_point(cfg, methods, schemes, spec, tol)
    estimates = []
    hsic = {}
    for scheme, method, est, flags in results:
        rec = {"scheme": scheme.value, "method": method.value,
               "probability": None if est is None else est.value,
               "stderr": None if est is None else est.stderr,
               "n_samples": None if est is None else est.n_samples,
               "flags": list(flags)}
        estimates.append(rec)
        if scheme is Scheme.HSIC_HYBRID and est is not None:
            hsic[method] = est
    deltas = []
    agree = all(est is not None for _, _, est, _ in results)
    keys = list(hsic)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            ea, eb = hsic[a], hsic[b]
            diff = ea.value - eb.value
            rel = abs(diff) / abs(eb.value) if eb.value else (0.0 if diff == 0 else math.inf)
            entry = {"pair": f"{a.value}-{b.value}", "delta": diff, "relative": rel}
            mc = ea if a is Method.MONTE_CARLO else eb if b is Method.MONTE_CARLO else None
            if mc is not None:
                entry["sigmas"] = abs(diff) / mc.stderr
                ok = abs(diff) <= k * mc.stderr
            elif {a, b} == {Method.CLOSED_FORM, Method.QUADRATURE}:
                ok = rel <= rtol
            else:
                ok = True  # asymptotic values are approximations; reported only
            entry["ok"] = ok
            agree = agree and ok
            deltas.append(entry)
    return {
        "config": config_record(cfg),
        "regime": {"table": table, "column": column},
        "estimates": estimates,
        "deltas": deltas,
        "agree": agree,
    }


def config_record(cfg):
    return {"M": cfg.M, "m": cfg.m, "n": cfg.n, "beta": cfg.beta, "rho_n": cfg.rho_n,
            "rho_m": cfg.rho_m, "R_m": cfg.R_m, "snr_db": cfg.snr_db, "ratio": cfg.eta}


# --- random three-way validation ------------------------------------------------


def random_config(rng):
    """One configuration from the validation distribution (may be singular)."""
    M = int(rng.integers(3, 7))
    m, n = (int(v) for v in rng.choice(np.arange(1, M + 1), size=2, replace=False))
    beta = float(rng.uniform(0.05, 0.45))
    R_m = float(rng.uniform(0.1, 2.0))
    snr_db = float(rng.uniform(5.0, 45.0))
    ratio = float(rng.uniform(0.5, 12.0))
    return SystemConfig.from_snr_db(M, m, n, beta, snr_db, ratio, R_m)


def validation_configs(n_configs, seed):
    """``n_configs`` non-singular configurations, deterministic in ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    out = []
    while len(out) < n_configs:
        cfg = random_config(rng)
        if not derive_constants(cfg).singular:
            out.append(cfg)
    return out


@dataclass
class ValidationReport:
    records: list
    rtol: float
    k: float
    n_samples: int
    seconds: float = 0.0

    @property
    def failures(self):
        return [r for r in self.records if not r["pass"]]

    @property
    def passed(self):
        return not self.failures

    def to_dict(self):
        return {"passed": self.passed, "n_configs": len(self.records),
                "n_failures": len(self.failures), "rtol": self.rtol, "k": self.k,
                "n_samples": self.n_samples, "records": self.records}


def run_validate(n_configs=100, seed=0, rtol=1e-6, k=3.0, n_samples=10**7, workers=1,
                 tol=1e-10, progress=None):
    """Three-way agreement (closed form, quadrature, Monte Carlo) on random configs."""
    if n_configs < 1:
        raise ConfigError("n_configs must be at least 1")
    if rtol < 0 or k < 0:
        raise ConfigError("tolerances must be non-negative")
    start = time.perf_counter()
    records = []
    for index, cfg in enumerate(validation_configs(n_configs, seed)):
        mc_seed = int(np.random.SeedSequence([int(seed), index]).generate_state(1, np.uint64)[0])
        sampler = SamplerSpec(seed=mc_seed, n_samples=int(n_samples), workers=workers)
        rec = {"index": index, "config": config_record(cfg), "mc_seed": mc_seed}
        try:
            cf = ptilde_closed(cfg).value
            quad = ptilde_quadrature(cfg, tol).value
            mc = binomial_estimate(mc_counts(cfg, sampler).hsic, sampler.n_samples)
        except (ArithmeticError, NonConvergenceError) as exc:
            rec.update({"pass": False, "error": f"{type(exc).__name__}: {exc}"})
            records.append(rec)
            if progress:
                progress(rec)
            continue
        rel = abs(cf - quad) / quad if quad else (0.0 if cf == quad else math.inf)
        sig = abs(cf - mc.value) / mc.stderr
        rec.update({
            "regime": classify_regime(cfg).label, "closed_form": cf, "quadrature": quad,
            "monte_carlo": mc.value, "mc_stderr": mc.stderr, "rel_cf_quad": rel,
            "sigmas_cf_mc": sig, "quad_ok": rel <= rtol, "mc_ok": sig <= k,
        })
        rec["pass"] = rec["quad_ok"] and rec["mc_ok"]
        records.append(rec)
        if progress:
            progress(rec)
    return ValidationReport(records, rtol, k, int(n_samples), time.perf_counter() - start)


# --- scenario files and presets ------------------------------------------------

_SCENARIO_KEYS = {"users": int, "m": int, "n": int, "beta": float, "rm": float,
                  "ratio": float, "snr_db": float}


def parse_number(text):
    """Float from ``"0.25"`` or a fraction such as ``"1/3"``."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def _values(text, kind=float):
    return [kind(parse_number(v)) for v in text.replace(",", " ").split()]


def read_scenario(path_or_text):
    """Parse an INI scenario into plain dicts (``scenario``, ``sweep``, ``run``, ``curves``)."""
    parser = configparser.ConfigParser()
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str)
                                          and "\n" not in path_or_text):
        path = Path(path_or_text)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    else:
        parser.read_string(path_or_text)
    doc = {"scenario": {}, "sweep": {}, "run": {}, "curves": {}, "meta": {}}
    try:
        if parser.has_section("scenario"):
            for key, val in parser.items("scenario"):
                if key not in _SCENARIO_KEYS:
                    raise ConfigError(f"unknown scenario key {key!r}")
                doc["scenario"][key] = _SCENARIO_KEYS[key](parse_number(val))
        if parser.has_section("sweep"):
            s = dict(parser.items("sweep"))
            doc["sweep"] = {"axis": s["axis"], "start": parse_number(s["start"]),
                            "stop": parse_number(s["stop"]), "steps": int(parse_number(s["steps"]))}
        if parser.has_section("run"):
            r = dict(parser.items("run"))
            if "methods" in r:
                doc["run"]["methods"] = r["methods"].replace(",", " ").split()
            if "schemes" in r:
                doc["run"]["schemes"] = r["schemes"].replace(",", " ").split()
            if "samples" in r:
                doc["run"]["samples"] = int(parse_number(r["samples"]))
            if "seed" in r:
                doc["run"]["seed"] = int(parse_number(r["seed"]))
        if parser.has_section("curves"):
            c = dict(parser.items("curves"))
            key = c["vary"]
            if key not in _SCENARIO_KEYS:
                raise ConfigError(f"cannot vary {key!r}")
            doc["curves"] = {"vary": key, "values": _values(c["values"], _SCENARIO_KEYS[key])}
        if parser.has_section("meta"):
            doc["meta"] = dict(parser.items("meta"))
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scenario: {exc}") from None
    return doc


def build_config(scenario):
    """``SystemConfig`` from scenario keys (users, m, n, beta, rm, ratio, snr_db)."""
    missing = [k for k in _SCENARIO_KEYS if k not in scenario]
    if missing:
        raise ConfigError(f"scenario is missing {', '.join(missing)}")
    s = scenario
    return SystemConfig.from_snr_db(s["users"], s["m"], s["n"], s["beta"], s["snr_db"],
                                    s["ratio"], s["rm"])


def preset_names():
    folder = resources.files("hsicnoma") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def load_preset(name):
    path = resources.files("hsicnoma") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    doc = read_scenario(path.read_text())
    doc["meta"].setdefault("name", name)
    return doc


def preset_sweeps(doc, overrides=None):
    """``[(curve label, SweepSpec)]`` for a preset document, one per curve."""
    overrides = overrides or {}
    base = {**doc["scenario"], **{k: v for k, v in overrides.items() if v is not None}}
    run = doc["run"]
    sweep = doc["sweep"]
    curves = doc["curves"] or {"vary": None, "values": [None]}
    out = []
    for value in curves["values"]:
        scenario = dict(base)
        label = ""
        if curves["vary"] is not None:
            scenario[curves["vary"]] = value
            label = f"{curves['vary']}{_label(value)}"
        # the swept quantity needs a placeholder so the template config is valid
        scenario.setdefault(axis_scenario_key(sweep["axis"]), sweep["start"])
        spec = SweepSpec(sweep["axis"], sweep["start"], sweep["stop"], sweep["steps"],
                         build_config(scenario), tuple(run.get("methods", ("MC", "CF"))),
                         tuple(run.get("schemes", ("HSIC",))))
        out.append((label, spec))
    return out


def _label(value):
    return str(int(value)) if float(value).is_integer() else f"{value:g}"


def axis_scenario_key(axis):
    return {"snr_db": "snr_db", "beta": "beta", "R_m": "rm", "rho_ratio": "ratio"}[axis]


def run_figure(name, out_dir, sampler=None, fmt="csv", overrides=None, tol=1e-10):
    """Run every curve of preset ``name``; one file per curve in ``out_dir``."""
    doc = load_preset(name)
    if sampler is None:
        run = doc["run"]
        sampler = SamplerSpec(seed=run.get("seed", 0), n_samples=run.get("samples", 10**6))
    written = []
    for label, spec in preset_sweeps(doc, overrides):
        stem = f"{name}_{label}" if label else name
        path = Path(out_dir) / f"{stem}.{fmt}"
        run_sweep(spec, path, sampler, fmt, tol)
        written.append(path)
    return written
