"""Command-line runner: ``liehmc run --config run.json``.

One JSON document describes a run. The runner writes three files into the
output directory:

``samples.jsonl`` / ``samples.csv``
    First line is a header carrying ``schema_version``. Every further line
    is one retained sample: ``index``, ``chain``, ``q`` (row-major,
    ``%.17g``), ``H`` (Hamiltonian at the start of the trajectory that
    produced the sample), ``dH``, ``accepted`` and, for quotient targets,
    ``x`` (the representative; Stiefel frames column-major). CSV columns
    follow the same order with ``q_0 .. q_{n^2-1}`` and ``x_*`` expanded.
``report.json``
    Acceptance, energy-error statistics, ESS, leakage and membership-defect
    maxima, optional energy-error scaling fit and, for von Mises-Fisher
    targets, the mean resultant length against its closed form.
``manifest.json``
    ``{"liehmc_version", "schema_version", "config"}``. The manifest is
    itself a valid ``--config`` and reproduces the run.

Exit codes: 0 success, 2 configuration error, 3 K-invariance gate failure,
4 I/O failure, 5 blow-up rate above ``diagnostics.max_blowup_rate``.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .diagnostics import Benchmark, energy_error_scan, ess, vmf_mean_resultant_length
from .expmap import ExpMethod
from .flows import GeodesicKind, GeodesicKindError, default_geodesic_kind
from .homogeneous import sphere, stiefel
from .integrators import OMELYAN_LAMBDA, IntegratorScheme
from .lie_core import InvalidBasisError, MetricError, make_geometry
from .potentials import (constant_potential, gauge_potential, quadratic_trace_potential,
                         stiefel_fisher_lift, vmf_sphere_lift)
from .sampler import ChainRunner, HmcConfig, KInvarianceError

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_K_INVARIANCE = 3
EXIT_IO = 4
EXIT_BLOWUP = 5

log = logging.getLogger("liehmc")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["target", "integrator", "sampling"],
    "properties": {
        "target": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type", "n"],
            "properties": {
                "type": {"enum": ["group", "sphere", "stiefel"]},
                "family": {"enum": ["SO", "SL", "GLplus"]},
                "n": {"type": "integer", "minimum": 2, "maximum": 64},
                "k": {"type": "integer", "minimum": 1},
            },
        },
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "flavor": {"enum": ["trace", "neg_killing", "custom"]},
                "matrix": _matrix,
            },
        },
        "geodesic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["auto", "biinvariant", "reductive_matrix"]},
                "exp_method": {"enum": ["scaling_squaring", "cayley", "pade"]},
                "pade_order": {"type": "integer", "minimum": 1, "maximum": 13},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["zero", "gauge", "quadratic_trace", "vmf", "fisher"]},
                "beta": {"type": "number"},
                "U": _matrix,
                "mu": _vector,
                "kappa": {"type": "number", "minimum": 0},
                "F": _matrix,
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["scheme", "step_size", "n_steps"],
            "properties": {
                "scheme": {"enum": ["leapfrog", "omelyan", "force_gradient"]},
                "step_size": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "retract_every": {"type": "integer", "minimum": 0},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_samples"],
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "thinning": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                "chains": {"type": "integer", "minimum": 1, "maximum": 1024},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["jsonl", "csv"]},
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_blowup_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "energy_scan": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["step_sizes"],
                    "properties": {
                        "step_sizes": {"type": "array", "minItems": 3,
                                       "items": {"type": "number", "exclusiveMinimum": 0}},
                        "total_time": {"type": "number", "exclusiveMinimum": 0},
                        "n_trajectories": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
    },
}

DEFAULTS = {
    "metric": {"flavor": "trace"},
    "geodesic": {"kind": "auto", "exp_method": "scaling_squaring"},
    "potential": {"name": "zero"},
    "integrator": {"lambda": OMELYAN_LAMBDA, "retract_every": 0},
    "sampling": {"burn_in": 0, "thinning": 1, "seed": 0, "chains": 1},
    "output": {"dir": "liehmc_out", "format": "jsonl"},
    "diagnostics": {"max_blowup_rate": 0.5},
}


class ConfigError(ValueError):
    pass


def _merge_defaults(cfg):
    out = copy.deepcopy(cfg)
    for section, values in DEFAULTS.items():
        sec = out.setdefault(section, {})
        for key, val in values.items():
            sec.setdefault(key, val)
    if out["target"]["type"] == "group":
        out["target"].setdefault("family", "SO")
    return out


def load_config(path, seed_override=None, chains=None, output_dir=None):
    """Read, validate and resolve a config (or a manifest) file."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if isinstance(raw, dict) and "liehmc_version" in raw and "config" in raw:
        raw = raw["config"]
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = _merge_defaults(raw)
    if seed_override is not None:
        if not 0 <= seed_override < 2 ** 64:
            raise ConfigError("seed override must be a 64-bit unsigned integer")
        cfg["sampling"]["seed"] = seed_override
    if chains is not None:
        if chains < 1:
            raise ConfigError("--chains must be >= 1")
        cfg["sampling"]["chains"] = chains
    if output_dir is not None:
        cfg["output"]["dir"] = str(output_dir)
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg):
    t = cfg["target"]
    if t["type"] == "stiefel":
        if "k" not in t or not 1 <= t["k"] < t["n"]:
            raise ConfigError("target/k: stiefel needs 1 <= k < n")
    elif "k" in t:
        raise ConfigError("target/k: only meaningful for stiefel")
    if t["type"] != "group" and "family" in t and t["family"] != "SO":
        raise ConfigError("target/family: quotients are built on SO(n)")
    if t["type"] != "group" and cfg["metric"]["flavor"] == "custom":
        raise ConfigError("metric/flavor: custom metrics are only supported on group targets")
    if cfg["metric"]["flavor"] == "custom" and "matrix" not in cfg["metric"]:
        raise ConfigError("metric/matrix: required for a custom metric")
    p = cfg["potential"]
    need = {"gauge": ["U"], "quadratic_trace": ["U"], "vmf": ["mu", "kappa"], "fisher": ["F"]}
    for key in need.get(p["name"], []):
        if key not in p:
            raise ConfigError(f"potential/{key}: required for {p['name']}")


def build_run(cfg):
    """Geometry, potential, geodesic kind, scheme and optional quotient."""
    t, m, p = cfg["target"], cfg["metric"], cfg["potential"]
    n = t["n"]
    quot = None
    try:
        if t["type"] == "group":
            geom = make_geometry(t["family"], n, m["flavor"], m.get("matrix"))
        elif t["type"] == "sphere":
            quot = sphere(n, m["flavor"])
            geom = quot.geom
        else:
            quot = stiefel(n, t["k"], m["flavor"])
            geom = quot.geom
        beta = p.get("beta", 1.0)
        if p["name"] == "zero":
            potential = constant_potential(0.0)
        elif p["name"] == "gauge":
            potential = gauge_potential(np.array(p["U"], dtype=float), beta)
        elif p["name"] == "quadratic_trace":
            potential = quadratic_trace_potential(np.array(p["U"], dtype=float), beta)
        elif p["name"] == "vmf":
            potential = vmf_sphere_lift(n, np.array(p["mu"], dtype=float), p["kappa"])
        else:
            potential = stiefel_fisher_lift(n, np.array(p["F"], dtype=float))
        if p["name"] in ("gauge", "quadratic_trace") and np.shape(p["U"]) != (n, n):
            raise ConfigError(f"potential/U: must be {n}x{n}")
        gd = cfg["geodesic"]
        method = ExpMethod(gd["exp_method"], gd.get("pade_order", 1))
        if gd["kind"] == "auto":
            kind = default_geodesic_kind(geom, method)
        elif gd["kind"] == "biinvariant":
            kind = GeodesicKind.biinvariant(geom, method)
        else:
            kind = GeodesicKind.reductive_matrix(geom, method)
        it = cfg["integrator"]
        scheme = IntegratorScheme(it["scheme"], it["step_size"], it["n_steps"],
                                  it["lambda"], it["retract_every"])
    except ConfigError:
        raise
    except (ValueError, MetricError, InvalidBasisError, GeodesicKindError) as exc:
        raise ConfigError(str(exc)) from None
    return geom, potential, kind, scheme, quot


def _fmt(x):
    return "%.17g" % x


def _json_num(x):
    return _fmt(x) if np.isfinite(x) else "null"


class SampleWriter:
    """Streams one line per retained sample; the header carries the schema version."""

    def __init__(self, fh, fmt, n, rep_size):
        self.fh, self.fmt = fh, fmt
        cols = ["index", "chain", "q", "H", "dH", "accepted"] + (["x"] if rep_size else [])
        header = {"schema": "liehmc.samples", "schema_version": SCHEMA_VERSION,
                  "liehmc_version": __version__, "columns": cols, "q_shape": [n, n],
                  "q_order": "row-major"}
        if rep_size:
            header["x_order"] = "column-major"
        if fmt == "jsonl":
            fh.write(json.dumps(header, sort_keys=True) + "\n")
        else:
            fh.write(f"# liehmc.samples schema_version={SCHEMA_VERSION} q_shape={n}x{n}"
                     + (" x_order=column-major" if rep_size else "") + "\n")
            names = (["index", "chain"] + [f"q_{i}" for i in range(n * n)]
                     + ["H", "dH", "accepted"] + [f"x_{i}" for i in range(rep_size)])
            fh.write(",".join(names) + "\n")

    def write(self, index, chain, q, H, dH, accepted, x=None):
        qf = np.asarray(q).ravel()
        if self.fmt == "jsonl":
            parts = [f'"index": {index}', f'"chain": {chain}',
                     '"q": [' + ", ".join(_fmt(v) for v in qf) + "]",
                     f'"H": {_json_num(H)}', f'"dH": {_json_num(dH)}',
                     f'"accepted": {"true" if accepted else "false"}']
            if x is not None:
                parts.append('"x": [' + ", ".join(_fmt(v) for v in np.ravel(x)) + "]")
            self.fh.write("{" + ", ".join(parts) + "}\n")
        else:
            vals = ([str(index), str(chain)] + [_fmt(v) for v in qf]
                    + [_fmt(H), _fmt(dH), "1" if accepted else "0"])
            if x is not None:
                vals += [_fmt(v) for v in np.ravel(x)]
            self.fh.write(",".join(vals) + "\n")


def _ess_or_none(series):
    return ess(series) if len(series) >= 100 else None


def _vmf_report(xs, ess_parts, cfg):
    """Mean resultant length of the pooled sphere samples with its MC error."""
    n = cfg["target"]["n"]
    kappa = cfg["potential"]["kappa"]
    mean = xs.mean(axis=0)
    rbar = float(np.linalg.norm(mean))
    # project on the mean direction; the SE of R-bar is the SE of that mean
    direction = mean / rbar if rbar > 0 else np.asarray(cfg["potential"]["mu"], dtype=float)
    proj = xs @ direction
    total_ess = sum(ess_parts(proj)) if len(xs) >= 100 else float(len(xs))
    se = float(proj.std(ddof=1) / np.sqrt(total_ess))
    oracle = vmf_mean_resultant_length(n, kappa)
    return {"mean_resultant_length": rbar, "oracle": oracle, "standard_error": se,
            "ess": total_ess, "z_score": (rbar - oracle) / se if se > 0 else None,
            "within_3se": bool(abs(rbar - oracle) <= 3 * se)}


def run(cfg, quiet=False):
    """Execute a resolved config. Returns the exit code."""
    try:
        geom, potential, kind, scheme, quot = build_run(cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    s = cfg["sampling"]
    out_dir = Path(cfg["output"]["dir"])
    fmt = cfg["output"]["format"]
    rep_size = 0 if quot is None else quot.n * quot.k
    n = geom.n

    chains = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        samples_path = out_dir / f"samples.{fmt}"
        with open(samples_path, "w", newline="\n") as fh:
            writer = SampleWriter(fh, fmt, n, rep_size)
            for c in range(s["chains"]):
                config = HmcConfig(scheme, s["n_samples"], s["burn_in"], s["seed"], s["thinning"],
                                   horizontal=None if quot is None else quot.split, chain=c)
                try:
                    runner = ChainRunner(np.eye(n), potential, geom, kind, config)
                except KInvarianceError as exc:
                    log.error("K-invariance gate failed: %s", exc)
                    return EXIT_K_INVARIANCE
                traces, reps = [], []
                for i, tr in runner.samples():
                    x = None if quot is None else quot.flat_representative(tr.q)
                    writer.write(i, c, tr.q, tr.h_before, tr.delta_h, tr.accepted, x)
                    traces.append(float(np.trace(tr.q)))
                    if x is not None:
                        reps.append(x)
                chains.append((runner.stats, np.array(traces), np.array(reps)))
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO

    report = _build_report(cfg, chains, geom, potential, kind)
    try:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        manifest = {"liehmc_version": __version__, "schema_version": SCHEMA_VERSION, "config": cfg}
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO

    if not quiet:
        print(f"acceptance {report['acceptance_rate']:.4f}  "
              f"blowup rate {report['blowup_rate']:.4f}  -> {out_dir}")
    if report["blowup_rate"] > cfg["diagnostics"]["max_blowup_rate"]:
        log.error("blow-up rate %.3g exceeds ceiling %.3g",
                  report["blowup_rate"], cfg["diagnostics"]["max_blowup_rate"])
        return EXIT_BLOWUP
    return EXIT_OK


def _build_report(cfg, chains, geom, potential, kind):
    per_chain = []
    total = accepted = blowups = 0
    dh_all = []
    for stats, traces, _ in chains:
        summ = stats.summary()
        summ["ess_trace"] = _ess_or_none(traces)
        per_chain.append(summ)
        total += stats.n
        accepted += stats.n_accepted
        blowups += stats.n_blowup
        dh_all.extend(stats.delta_h)
    dh = np.asarray(dh_all)
    report = {
        "schema_version": SCHEMA_VERSION,
        "liehmc_version": __version__,
        "chains": per_chain,
        "transitions": total,
        "acceptance_rate": accepted / total if total else 0.0,
        "blowups": blowups,
        "blowup_rate": blowups / total if total else 0.0,
        "max_vertical_leakage": max(c["max_vertical_leakage"] for c in per_chain),
        "max_membership_defect": max(c["max_membership_defect"] for c in per_chain),
        "delta_h": None if dh.size == 0 else {
            "mean": float(dh.mean()), "abs_mean": float(np.abs(dh).mean()),
            "abs_max": float(np.abs(dh).max()), "std": float(dh.std()),
            "expected_acceptance": float(np.exp(np.minimum(0.0, -dh)).mean()),
        },
    }
    ess_vals = [c["ess_trace"] for c in per_chain]
    report["ess_trace_total"] = None if None in ess_vals else float(sum(ess_vals))

    if cfg["potential"]["name"] == "vmf" and cfg["target"]["type"] == "sphere":
        xs = np.concatenate([reps for _, _, reps in chains])
        sizes = [len(reps) for _, _, reps in chains]

        def ess_parts(series):
            out, start = [], 0
            for size in sizes:
                part = series[start:start + size]
                out.append(ess(part) if size >= 100 else float(size))
                start += size
            return out

        report["vmf"] = _vmf_report(xs, ess_parts, cfg)

    scan = cfg["diagnostics"].get("energy_scan")
    if scan is not None:
        bench = Benchmark(geom, potential, kind, scan.get("total_time", 1.0),
                          scan.get("n_trajectories", 100), scan.get("seed", 0))
        try:
            fit = energy_error_scan(bench, cfg["integrator"]["scheme"], scan["step_sizes"],
                                    cfg["integrator"]["lambda"])
            report["energy_scan"] = fit.as_dict()
        except ValueError as exc:
            report["energy_scan"] = {"error": str(exc)}
    return report


def main(argv=None):
    parser = argparse.ArgumentParser(prog="liehmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run chains described by a JSON config")
    p_run.add_argument("--config", required=True, help="config or manifest JSON file")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--chains", type=int, default=None)
    p_run.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="liehmc: %(message)s")
    try:
        cfg = load_config(args.config, args.seed_override, args.chains, args.output_dir)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return run(cfg, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
