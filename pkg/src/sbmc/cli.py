"""Command-line driver: ``sbmc estimate | validate | sweep | oracle``."""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import estimators as est
from . import oracle
from .config import ConfigError, RunConfig, load_config
from .kernel import DiscreteModes
from .path import QuadrantBoundViolated
from .sampler import ActionDriftWarning, NonErgodicWarning, Samples, rng_metadata, run_chains

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2, 3
CSV_COLUMNS = ["name", "paper_ref", "source", "value", "stderr", "systematic", "tau_int", "n_samples",
               "config_fingerprint"]
DEFAULT_OBSERVABLES = [
    {"kind": "field_moment", "f": "h", "n": [2], "xi": "1"},
    {"kind": "char_fn", "f": "h", "beta": [0.5, 1.0]},
    {"kind": "n_moments", "m": [1, 2]},
    {"kind": "parity_pair"},
]


def _fmt(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


def _label(kind: str, **params) -> str:
    inner = ",".join(f"{k}={_fmt(v)}" for k, v in params.items() if v is not None)
    return f"{kind}[{inner}]" if inner else kind


def _named(res: est.EstimatorResult, label: str, params: dict) -> est.EstimatorResult:
    res.name = label
    res.extra = {**res.extra, "params": params}
    return res


def evaluate(cfg: RunConfig, samples: Samples, kernels, observables=None) -> list[est.EstimatorResult]:
    """Run the requested estimators on merged chain records."""
    obs_list = cfg.estimators.observables or DEFAULT_OBSERVABLES if observables is None else observables
    out = []
    for obs in obs_list:
        kind = obs["kind"]
        f = obs.get("f", "h")
        if kind == "energy":
            mc = cfg.mcmc(chain=10_000)
            if obs.get("sweeps"):
                mc.sweeps = obs["sweeps"]
            top = samples.action[samples.chain == samples.chain[0]]
            top = top if top.size == mc.sweeps else None
            res, table = est.energy(mc, kernels, n_nodes=obs.get("nodes", 5), top_actions=top)
            res.extra["ladder"] = table
            out.append(_named(res, "energy", {"nodes": obs.get("nodes", 5)}))
        elif kind == "spin_correlation":
            for t in obs["lags"]:
                out.append(_named(est.spin_correlation(samples, t), _label(kind, t=t), {"t": t}))
        elif kind == "gap":
            w = tuple(obs["window"])
            out.append(_named(est.gap_fit(samples, w), _label("gap", window=f"{w[0]:g}-{w[1]:g}"),
                              {"window": list(w)}))
        elif kind == "char_fn":
            for b in obs["beta"]:
                out.append(_named(est.char_fn(samples, kernels, f, b), _label(kind, f=f, beta=b), {"f": f, "beta": b}))
        elif kind == "field_moment":
            for n in obs["n"]:
                out.append(_named(est.field_moment(samples, kernels, f, n, obs.get("xi", "1")),
                                  _label(kind, f=f, n=n, xi=obs.get("xi", "1")), {"f": f, "n": n}))
        elif kind == "field_function":
            if obs["function"] == "gaussian":
                width = obs["width"]
                res = est.field_function(samples, kernels, f, lambda x, a=width: np.exp(-(x / a) ** 2), obs["xi"])
                label = _label(kind, f=f, gaussian=width, xi=obs["xi"])
            else:
                res = est.field_function(samples, kernels, f, obs["values"], obs["xi"], grid=obs["grid"])
                label = _label(kind, f=f, grid=len(obs["grid"]), xi=obs["xi"])
            out.append(_named(res, label, {"f": f}))
        elif kind == "fluctuations":
            Fa, Ga = est.fluctuations(samples, kernels, f)
            out += [_named(Fa, _label("fluctuations_F", f=f), {"f": f}),
                    _named(Ga, _label("fluctuations_G", f=f), {"f": f})]
        elif kind == "gaussian_moment":
            for b in obs["resolved_beta"]:
                out.append(_named(est.gaussian_moment(samples, kernels, f, b), _label(kind, f=f, beta=b),
                                  {"f": f, "beta": b}))
        elif kind == "fractional_moment":
            for s in obs["s"]:
                out.append(_named(est.fractional_moment(samples, kernels, f, s), _label(kind, f=f, s=s),
                                  {"f": f, "s": s}))
        elif kind == "exp_moment":
            for b in obs["beta"]:
                a, c = est.exp_moment(samples, kernels, f, b)
                out += [_named(a, _label(kind, f=f, beta=b), {"f": f, "beta": b}),
                        _named(c, _label("exp_moment_sigma", f=f, beta=b), {"f": f, "beta": b})]
        elif kind == "boson_generating":
            for re_, im in obs["beta"]:
                beta = complex(re_, im)
                out.append(_named(est.boson_generating(samples, kernels, beta),
                                  _label(kind, beta=f"{re_:g}{im:+g}j" if im else re_), {"beta": [re_, im]}))
        elif kind == "parity_pair":
            p1, p2 = est.parity_pair(samples, kernels)
            out += [_named(p1, "parity", {}), _named(p2, "sigma_parity", {})]
        elif kind == "n_moments":
            for m in obs["m"]:
                out.append(_named(est.n_moments(samples, kernels, m), _label(kind, m=m), {"m": m}))
        elif kind == "resolvent":
            w = tuple(obs["window"])
            rk = est.resolvent_kernel(samples, kernels, obs["omega"], w, obs.get("sigma_test"))
            out += [_named(rk["table"], "resolvent", {"window": list(w)}),
                    _named(rk["n"], "n_resolvent", {"window": list(w)}),
                    _named(rk["middle"], "n_chain_middle", {"window": list(w)})]
        elif kind == "n_consistency":
            res = est.n_consistency(samples, kernels, tuple(obs["window"]))
            for route, r in res["routes"].items():
                r.extra["checks"] = r.extra.get("checks", []) + [
                    {"check": "routes_agree", "passed": bool(res["agree"]), "pairs": res["pairs"]}]
                out.append(_named(r, _label("n_route", route=route), {"route": route}))
        else:  # pragma: no cover - rejected at parse time
            raise ValueError(kind)
    for r in out:
        r.config_fingerprint = cfg.fingerprint()
    return out


def oracle_records(cfg: RunConfig, kernels) -> list[dict]:
    """Reference values that need no sampling, emitted as source="oracle" records."""
    fp = cfg.fingerprint()
    eps, alpha = cfg.model.epsilon, cfg.model.alpha
    rows = []

    def rec(name, value, ref=""):
        rows.append({"name": name, "value": est.jsonable(float(value)), "stderr": 0.0, "tau_int": 0.0,
                     "n_samples": 0, "systematic": 0.0, "config_fingerprint": fp, "paper_ref": ref,
                     "source": "oracle", "truncation": {}, "extra": {}})

    bath = kernels.bath
    rec("perturbative_energy", oracle.perturbative_energy(eps, alpha, bath), est.FORMULA_IDS["energy"])
    rec("n_upper_bound", 0.5 * alpha**2 * kernels.norm_h_over_omega_sq, est.FORMULA_IDS["n_chain"])
    rec("parity_lower_bound", math.exp(-alpha**2 * kernels.norm_h_over_omega_sq), est.FORMULA_IDS["parity"])
    for name in kernels.cross:
        for beta in (0.5, 1.0):
            vh = oracle.van_hove_closed_forms(kernels, name, beta, alpha)
            rec(f"van_hove_char_fn[f={name},beta={beta:g}]", vh["char_fn"], est.FORMULA_IDS["char_fn"])
    if isinstance(bath, DiscreteModes):
        model = oracle.TruncatedModel(eps, alpha, bath.couplings, bath.frequencies, cfg.oracle.n_max)
        if model.dim <= oracle.MAX_DIM:
            sol = oracle.ground_state(model)
            for key, value in oracle.observables(sol).items():
                rec(f"ed:{key}", value)
            if cfg.oracle.certificate and model.with_cutoff(model.n_max + 10).dim <= oracle.MAX_DIM:
                cert = oracle.cutoff_certificate(model)
                rec("ed:cutoff_energy_change", cert["delta"])
    return rows


def _capture(fn):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn()
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught
                   if issubclass(w.category, (NonErgodicWarning, ActionDriftWarning, est.IdentityCheckWarning,
                                              RuntimeWarning))})
    return result, msgs


def _write_json(path: Path, payload: dict):
    text = json.dumps(est.jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _write_csv(path: Path, records: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in CSV_COLUMNS])


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_estimate(cfg: RunConfig, chains: int):
    kernels = cfg.kernels()

    def go():
        samples, diags = run_chains(cfg.mcmc(), kernels, cfg.plan(), chains, cfg.sampler.workers)
        results = evaluate(cfg, samples, kernels)
        return samples, diags, results

    (samples, diags, results), msgs = _capture(go)
    records = [r.record() for r in results]
    if cfg.oracle.enabled:
        records += oracle_records(cfg, kernels)
    checks = []
    for r in results:
        for c in r.extra.get("checks", []):
            checks.append({"record": r.name, **c})
    payload = {
        "created": _now(),
        "version": __version__,
        "config": cfg.canonical(),
        "config_fingerprint": cfg.fingerprint(),
        "rng": {**rng_metadata(), "seed": cfg.seed, "chains": chains},
        "diagnostics": diags,
        "records": records,
        "checks": checks,
        "warnings": msgs,
    }
    return payload, samples


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "chains", None) is not None:
        cfg.sampler.chains = args.chains
    if getattr(args, "out", None):
        cfg.output.dir = args.out
    return cfg


def _status(payload: dict, strict: bool) -> int:
    failed = [c for c in payload["checks"] if not c.get("passed", True)]
    for c in failed:
        print(f"check failed: {c['record']}: {c['check']}", file=sys.stderr)
    for m in payload["warnings"]:
        print(f"warning: {m}", file=sys.stderr)
    if strict and (failed or payload["warnings"]):
        return EXIT_CHECKS
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    payload, samples = run_estimate(cfg, cfg.sampler.chains)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "results.json", payload)
    if cfg.output.csv:
        _write_csv(out / "results.csv", payload["records"])
    if cfg.output.samples_csv:
        samples.to_csv(out / "samples.csv")
    for r in payload["records"]:
        if r["source"] == "mcmc":
            print(f"{r['name']:<40s} {r['value']:.8g} +- {r['stderr'] or 0:.2g} (sys {r['systematic'] or 0:.2g})")
    print(f"wrote {out / 'results.json'}")
    return _status(payload, args.strict)


def cmd_validate(args) -> int:
    from .validation import run_suites

    checks = run_suites(args.level)
    for c in checks:
        print(c.line())
    n_fail = sum(not c.passed for c in checks)
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "validate.json", {
            "created": _now(), "level": args.level,
            "checks": [{"suite": c.suite, "name": c.name, "value": c.value, "tolerance": c.tolerance,
                        "passed": c.passed, "detail": c.detail} for c in checks]})
    return EXIT_OK if n_fail == 0 else EXIT_CHECKS


SWEEP_AXES = {"T": ("sampler", "T"), "alpha": ("model", "alpha"), "epsilon": ("model", "epsilon")}


def cmd_sweep(args) -> int:
    base = _apply_overrides(load_config(args.config), args)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    rows, payloads = [], []
    if args.axis == "beta":
        kernels = base.kernels()
        F = kernels.norm_f_sq[args.f]
        fracs = values or [0.5, 0.8, 0.9, 0.95]
        obs = [{"kind": "gaussian_moment", "f": args.f, "beta": None, "beta_over_norm": fracs,
                "resolved_beta": [c / F for c in fracs]}]
        for c in fracs:
            if not c < 1:
                raise ConfigError(f"--values: beta ||f||^2 = {c:g} violates beta < 1/||f||^2")
        cfg = copy.deepcopy(base)
        cfg.estimators.observables = obs
        payload, _ = run_estimate(cfg, cfg.sampler.chains)
        payloads.append(payload)
        for c, r in zip(fracs, payload["records"]):
            rows.append({"axis": "beta_over_norm", "point": c, **{k: r[k] for k in ("name", "value", "stderr",
                                                                                   "systematic")}})
    else:
        if not values:
            raise ConfigError("--values is required for this axis")
        section, key = SWEEP_AXES[args.axis]
        for v in values:
            cfg = copy.deepcopy(base)
            setattr(getattr(cfg, section), key, v)
            if cfg.estimators.t_w + cfg.estimators.truncation > cfg.sampler.T:
                raise ConfigError(f"sweep point {args.axis}={v:g}: t_w + truncation exceeds T")
            if args.axis == "epsilon" and not v > 0:
                raise ConfigError("epsilon must be > 0")
            payload, _ = run_estimate(cfg, cfg.sampler.chains)
            payloads.append(payload)
            for r in payload["records"]:
                rows.append({"axis": args.axis, "point": v, **{k: r[k] for k in ("name", "value", "stderr",
                                                                                "systematic")}})
    out = Path(base.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{args.axis}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["axis", "point", "name", "value", "stderr", "systematic"])
        w.writeheader()
        for r in rows:
            w.writerow(r)
    _write_json(out / f"sweep_{args.axis}.json", {"created": _now(), "axis": args.axis,
                                                  "points": [p for p in payloads]})
    for r in rows:
        print(f"{r['axis']}={r['point']:<8g} {r['name']:<40s} {r['value']:.8g} +- {r['stderr'] or 0:.2g}")
    status = [_status(p, args.strict) for p in payloads]
    return max(status) if status else EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    kernels = cfg.kernels()
    records = oracle_records(cfg, kernels)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "oracle.json", {"created": _now(), "config_fingerprint": cfg.fingerprint(),
                                      "records": records})
    if cfg.output.csv:
        _write_csv(out / "oracle.csv", records)
    for r in records:
        print(f"{r['name']:<40s} {r['value']:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbmc", description="Path-measure Monte Carlo for spin-boson ground states.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--chains", type=int, help="number of independent chains")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--strict", action="store_true", help="non-zero exit on warnings or failed checks")

    common(sub.add_parser("estimate", help="run chains and evaluate estimators"))
    v = sub.add_parser("validate", help="run the built-in check suites")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--out", help="directory for validate.json")
    s = sub.add_parser("sweep", help="repeat an estimate along a parameter ladder")
    common(s)
    s.add_argument("--axis", choices=("T", "alpha", "epsilon", "beta"), required=True)
    s.add_argument("--values", help="comma-separated ladder (beta: fractions of 1/||f||^2)")
    s.add_argument("--f", default="h", help="test function for the beta ladder")
    common(sub.add_parser("oracle", help="reference values without sampling"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"estimate": cmd_estimate, "validate": cmd_validate, "sweep": cmd_sweep, "oracle": cmd_oracle}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionError, QuadrantBoundViolated) as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except est.DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
