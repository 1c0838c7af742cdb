"""Run configuration: TOML in, validated dataclasses out.

Every error names the offending key and, when it can be found, the line in
the source file.  The canonical form (all defaults filled in) is what gets
hashed into the config fingerprint and written next to the results.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .kernel import (DiscreteModes, InfraredDivergent, KernelError, PowerLawExpCutoff, TestFunction,
                     build_kernels, load_tabulated)
from .sampler import McmcConfig, MeasurementPlan, MoveMix


class ConfigError(ValueError):
    pass


OBSERVABLES = {
    "energy": {"nodes": 5, "sweeps": None},
    "spin_correlation": {"lags": [0.5, 1.0, 2.0]},
    "gap": {"window": [0.1, 1.0]},
    "char_fn": {"f": "h", "beta": [0.5, 1.0]},
    "field_moment": {"f": "h", "n": [2], "xi": "1"},
    "field_function": {"f": "h", "function": "gaussian", "width": 1.0, "grid": None, "values": None, "xi": "1"},
    "fluctuations": {"f": "h"},
    "gaussian_moment": {"f": "h", "beta": None, "beta_over_norm": [0.5]},
    "fractional_moment": {"f": "h", "s": [1.0]},
    "exp_moment": {"f": "h", "beta": [0.5]},
    "boson_generating": {"beta": [0.5]},
    "parity_pair": {},
    "n_moments": {"m": [1, 2]},
    "resolvent": {"omega": [0.5, 1.0, 2.0], "window": [0.1, 1.0], "sigma_test": None},
    "n_consistency": {"window": [0.1, 1.0]},
}

BATH_KEYS = {
    "discrete": {"couplings", "frequencies"},
    "power_law": {"amplitude", "exponent", "cutoff"},
    "tabulated": {"file", "refine"},
}


@dataclass
class ModelConfig:
    epsilon: float
    alpha: float
    bath: dict
    test_functions: list = field(default_factory=list)


@dataclass
class SamplerConfig:
    T: float = 20.0
    burn_in: int = 200
    sweeps: int = 1000
    chains: int = 1
    workers: int = 1
    shift_width: float = 0.5
    pair_width: float = 1.0
    sweep_length: int = 0
    validate_every: int = 1000
    moves: dict = field(default_factory=lambda: asdict(MoveMix()))


@dataclass
class EstimatorConfig:
    t_w: float = 5.0
    truncation: float | None = None
    probe_spacing: float = 1.0
    lag_spacing: float = 0.05
    lag_max: float = 5.0
    observables: list = field(default_factory=list)


@dataclass
class OracleConfig:
    enabled: bool = False
    n_max: int = 30
    certificate: bool = True


@dataclass
class OutputConfig:
    dir: str = "results"
    csv: bool = True
    samples_csv: bool = False


@dataclass
class RunConfig:
    model: ModelConfig
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    estimators: EstimatorConfig = field(default_factory=EstimatorConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    source: str = field(default="<string>", compare=False)
    base_dir: str = field(default=".", compare=False)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d.pop("base_dir")
        d["output"].pop("dir")
        d["sampler"].pop("workers")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def bath(self):
        b = self.model.bath
        kind = b["kind"]
        if kind == "discrete":
            return DiscreteModes(tuple(b["couplings"]), tuple(b["frequencies"]))
        if kind == "power_law":
            return PowerLawExpCutoff(b["amplitude"], b["exponent"], b["cutoff"])
        path = Path(b["file"])
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        tab = load_tabulated(path)
        return tab if "refine" not in b else type(tab)(tab.omega, tab.rho, refine=b["refine"])

    def kernels(self):
        bath = self.bath()
        tests = [TestFunction.from_power(bath, t["power"], t["name"]) for t in self.model.test_functions]
        return build_kernels(bath, tests, t_max=max(200.0, 4 * self.sampler.T))

    def mcmc(self, chain: int = 0, seed: int | None = None) -> McmcConfig:
        s = self.sampler
        return McmcConfig(
            T=s.T, epsilon=self.model.epsilon, alpha=self.model.alpha, moves=MoveMix(**s.moves),
            shift_width=s.shift_width, pair_width=s.pair_width, sweep_length=s.sweep_length,
            burn_in=s.burn_in, sweeps=s.sweeps, seed=self.seed if seed is None else seed, chain=chain,
            validate_every=s.validate_every,
        )

    def plan(self) -> MeasurementPlan:
        e = self.estimators
        return MeasurementPlan(t_w=e.t_w, truncation=e.truncation, probe_spacing=e.probe_spacing,
                               lag_spacing=e.lag_spacing, lag_max=e.lag_max)


# ---------------------------------------------------------------------------
# source locations


def _locate(text: str, path: tuple) -> int | None:
    """Line number (1-based) where the dotted ``path`` is set, if it can be found."""
    if not text:
        return None
    table: tuple = ()
    counts: dict = {}
    keys = [p for p in path if isinstance(p, str)]
    index = [p for p in path if isinstance(p, int)]
    best = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^\[\[\s*([^\]]+?)\s*\]\]$", line)
        if m:
            table = tuple(x.strip() for x in m.group(1).split("."))
            counts[table] = counts.get(table, -1) + 1
            table = table + (counts[table],)
            continue
        m = re.match(r"^\[\s*([^\]]+?)\s*\]$", line)
        if m:
            table = tuple(x.strip() for x in m.group(1).split("."))
            continue
        m = re.match(r"^([A-Za-z0-9_.\"-]+)\s*=", line)
        if not m:
            continue
        full = table + tuple(x.strip().strip('"') for x in m.group(1).split("."))
        names = [p for p in full if isinstance(p, str)]
        idx = [p for p in full if isinstance(p, int)]
        if names == keys and idx == index[: len(idx)]:
            return no
        if best is None and names and names == keys[: len(names)] and idx == index[: len(idx)]:
            best = no
    if best is None:
        # the table header itself
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if re.match(r"^\[{1,2}\s*" + re.escape(".".join(keys)) + r"\s*\]{1,2}$", line):
                return no
    return best


class _Ctx:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, path: tuple, msg: str):
        where = _locate(self.text, path)
        dotted = ".".join(str(p) if isinstance(p, str) else f"[{p}]" for p in path).replace(".[", "[")
        loc = f"{self.source}:{where}" if where else self.source
        raise ConfigError(f"{loc}: {dotted}: {msg}")

    def table(self, data, path: tuple, allowed: set, required: set = frozenset()) -> dict:
        if not isinstance(data, dict):
            self.fail(path, "expected a table")
        for k in data:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in data:
                self.fail(path + (k,) if path else (k,), "missing required key")
        return data

    def number(self, data, path: tuple, default=None, required=False, integer=False) -> float | int | None:
        key = path[-1]
        if key not in data:
            if required:
                self.fail(path, "missing required key")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer:
            if not isinstance(v, int):
                self.fail(path, f"expected an integer, got {v!r}")
            return int(v)
        if not math.isfinite(v):
            self.fail(path, "must be finite")
        return float(v)


def _number_list(ctx: _Ctx, v, path, integer=False):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        ctx.fail(path, f"expected a number or a list of numbers, got {v!r}")
    if integer and not all(isinstance(x, int) for x in v):
        ctx.fail(path, "expected integers")
    return [int(x) for x in v] if integer else [float(x) for x in v]


# ---------------------------------------------------------------------------


def _parse_bath(ctx, raw, path):
    ctx.table(raw, path, {"kind"} | set().union(*BATH_KEYS.values()), {"kind"})
    kind = raw["kind"]
    if kind not in BATH_KEYS:
        ctx.fail(path + ("kind",), f"unknown bath kind {kind!r} (one of {', '.join(BATH_KEYS)})")
    ctx.table(raw, path, {"kind"} | BATH_KEYS[kind], BATH_KEYS[kind] - {"refine"})
    out = {"kind": kind}
    if kind == "discrete":
        g = _number_list(ctx, raw["couplings"], path + ("couplings",))
        w = _number_list(ctx, raw["frequencies"], path + ("frequencies",))
        if len(g) != len(w) or not g:
            ctx.fail(path + ("frequencies",), "couplings and frequencies must be non-empty and equally long")
        if any(x <= 0 for x in w):
            ctx.fail(path + ("frequencies",), "mode frequencies must be > 0 (infrared regularity)")
        out.update(couplings=g, frequencies=w)
    elif kind == "power_law":
        for k in ("amplitude", "exponent", "cutoff"):
            out[k] = ctx.number(raw, path + (k,), required=True)
        if out["exponent"] <= 1:
            ctx.fail(path + ("exponent",), "exponent s must be > 1 so that h/omega is square integrable")
        if out["cutoff"] <= 0:
            ctx.fail(path + ("cutoff",), "cutoff must be > 0")
        if out["amplitude"] < 0:
            ctx.fail(path + ("amplitude",), "amplitude must be >= 0")
    else:
        if not isinstance(raw["file"], str):
            ctx.fail(path + ("file",), "expected a file path")
        out["file"] = raw["file"]
        if "refine" in raw:
            out["refine"] = ctx.number(raw, path + ("refine",), integer=True)
    return out


def _parse_observable(ctx, raw, path):
    if not isinstance(raw, dict) or "kind" not in raw:
        ctx.fail(path, "each observable needs a 'kind'")
    kind = raw["kind"]
    if kind not in OBSERVABLES:
        ctx.fail(path + ("kind",), f"unknown observable {kind!r} (one of {', '.join(OBSERVABLES)})")
    spec = OBSERVABLES[kind]
    ctx.table(raw, path, {"kind"} | set(spec))
    out = {"kind": kind}
    for key, default in spec.items():
        v = raw.get(key, default)
        p = path + (key,)
        if v is None:
            out[key] = None
        elif key in ("f", "xi", "function", "sigma_test"):
            if not isinstance(v, str):
                ctx.fail(p, "expected a string")
            out[key] = v
        elif key in ("n", "m"):
            out[key] = _number_list(ctx, v, p, integer=True)
        elif key in ("nodes", "sweeps"):
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                ctx.fail(p, "expected a positive integer")
            out[key] = v
        elif key == "width":
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                ctx.fail(p, f"width must be a positive number, got {v!r}")
            out[key] = float(v)
        elif key == "window":
            w = _number_list(ctx, v, p)
            if len(w) != 2 or not 0 <= w[0] < w[1]:
                ctx.fail(p, "window must be [t_start, t_end] with 0 <= t_start < t_end")
            out[key] = w
        elif key == "beta" and kind == "boson_generating":
            vals = v if isinstance(v, list) else [v]
            betas = []
            for b in vals:
                if isinstance(b, list) and len(b) == 2:
                    betas.append([float(b[0]), float(b[1])])
                elif isinstance(b, (int, float)) and not isinstance(b, bool):
                    betas.append([float(b), 0.0])
                else:
                    ctx.fail(p, "beta entries are numbers or [re, im] pairs")
            out[key] = betas
        else:
            out[key] = _number_list(ctx, v, p)
    if kind == "field_moment" and out["xi"] not in ("1", "sigma"):
        ctx.fail(path + ("xi",), "xi must be '1' or 'sigma'")
    if kind == "field_function":
        if out["function"] not in ("gaussian", "grid"):
            ctx.fail(path + ("function",), "function must be 'gaussian' or 'grid'")
        if out["function"] == "grid" and (out["grid"] is None or out["values"] is None
                                          or len(out["grid"]) != len(out["values"])):
            ctx.fail(path + ("grid",), "grid functions need equally long 'grid' and 'values'")
    if kind == "fractional_moment" and any(not 0 < s < 2 for s in out["s"]):
        ctx.fail(path + ("s",), "fractional order s must lie in (0, 2)")
    if kind == "n_moments" and any(not 1 <= m <= 20 for m in out["m"]):
        ctx.fail(path + ("m",), "moment order m must lie in 1..20")
    return out


def parse_config(text: str, source: str = "<string>", base_dir: str = ".") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    ctx = _Ctx(text, source)
    ctx.table(data, (), {"seed", "model", "sampler", "estimators", "oracle", "output"}, {"model"})
    seed = ctx.number(data, ("seed",), default=0, integer=True)
    if seed < 0:
        ctx.fail(("seed",), "seed must be non-negative")

    m = ctx.table(data["model"], ("model",), {"epsilon", "alpha", "bath", "test_functions"}, {"bath"})
    eps = ctx.number(m, ("model", "epsilon"), required=True)
    alpha = ctx.number(m, ("model", "alpha"), required=True)
    if not eps > 0:
        ctx.fail(("model", "epsilon"), "epsilon must be > 0")
    bath = _parse_bath(ctx, m["bath"], ("model", "bath"))
    tests = []
    for i, t in enumerate(m.get("test_functions", [])):
        p = ("model", "test_functions", i)
        ctx.table(t, p, {"name", "power"}, {"name"})
        if not isinstance(t["name"], str) or t["name"] == "h":
            ctx.fail(p + ("name",), "test function names are strings other than 'h'")
        tests.append({"name": t["name"], "power": ctx.number(t, p + ("power",), default=0.0)})

    s_raw = ctx.table(data.get("sampler", {}), ("sampler",), set(asdict(SamplerConfig())))
    sc = SamplerConfig()
    for k, default in asdict(sc).items():
        if k == "moves":
            mv = ctx.table(s_raw.get("moves", {}), ("sampler", "moves"), set(default))
            moves = {mk: ctx.number(mv, ("sampler", "moves", mk), default=dv) for mk, dv in default.items()}
            try:
                MoveMix(**moves)
            except ValueError as exc:
                ctx.fail(("sampler", "moves"), str(exc))
            sc.moves = moves
        else:
            setattr(sc, k, ctx.number(s_raw, ("sampler", k), default=default, integer=isinstance(default, int)))
    if not sc.T > 0:
        ctx.fail(("sampler", "T"), "T must be > 0")
    for k in ("sweeps", "chains", "workers"):
        if getattr(sc, k) < 1:
            ctx.fail(("sampler", k), "must be >= 1")
    if sc.burn_in < 0:
        ctx.fail(("sampler", "burn_in"), "must be >= 0")

    e_raw = ctx.table(data.get("estimators", {}), ("estimators",), set(asdict(EstimatorConfig())))
    ec = EstimatorConfig()
    for k in ("t_w", "truncation", "probe_spacing", "lag_spacing", "lag_max"):
        setattr(ec, k, ctx.number(e_raw, ("estimators", k), default=getattr(ec, k)))
    if ec.truncation is None:
        ec.truncation = ec.t_w
    if not ec.t_w > 0 or not ec.truncation > 0:
        ctx.fail(("estimators", "t_w"), "t_w and truncation must be > 0")
    if ec.t_w + ec.truncation > sc.T:
        ctx.fail(("estimators", "t_w"), f"t_w + truncation = {ec.t_w + ec.truncation:g} exceeds T = {sc.T:g}; "
                 "the probe quadrants must fit inside the window")
    if ec.lag_max > 2 * ec.t_w:
        ctx.fail(("estimators", "lag_max"), "lag_max must not exceed 2 t_w")
    ec.observables = [_parse_observable(ctx, o, ("estimators", "observables", i))
                      for i, o in enumerate(e_raw.get("observables", []))]

    o_raw = ctx.table(data.get("oracle", {}), ("oracle",), set(asdict(OracleConfig())))
    oc = OracleConfig(
        enabled=bool(o_raw.get("enabled", False)),
        n_max=ctx.number(o_raw, ("oracle", "n_max"), default=30, integer=True),
        certificate=bool(o_raw.get("certificate", True)),
    )
    u_raw = ctx.table(data.get("output", {}), ("output",), set(asdict(OutputConfig())))
    uc = OutputConfig(dir=str(u_raw.get("dir", "results")), csv=bool(u_raw.get("csv", True)),
                      samples_csv=bool(u_raw.get("samples_csv", False)))

    cfg = RunConfig(ModelConfig(eps, alpha, bath, tests), sc, ec, oc, uc, seed, source, base_dir)
    _check_physics(cfg, ctx)
    return cfg


def _check_physics(cfg: RunConfig, ctx: _Ctx):
    try:
        kernels = cfg.kernels()
    except InfraredDivergent as exc:
        ctx.fail(("model", "bath"), f"infrared divergent bath: {exc}")
    except (KernelError, OSError, ValueError) as exc:
        ctx.fail(("model", "bath"), str(exc))
    names = set(kernels.cross)
    for i, obs in enumerate(cfg.estimators.observables):
        p = ("estimators", "observables", i)
        for key in ("f", "sigma_test"):
            if obs.get(key) is not None and obs[key] not in names:
                ctx.fail(p + (key,), f"unknown test function {obs[key]!r} (defined: {', '.join(sorted(names))})")
        if obs["kind"] == "gaussian_moment":
            F = kernels.norm_f_sq[obs["f"]]
            betas = list(obs["beta"] or []) + [b / F for b in (obs["beta_over_norm"] or [])]
            for b in betas:
                if not b * F < 1:
                    ctx.fail(p + ("beta" if obs["beta"] else "beta_over_norm",),
                             f"gaussian_moment needs beta < 1/||f||^2 = {1 / F:g}; got beta = {b:g}")
            obs["resolved_beta"] = betas
        if obs["kind"] in ("spin_correlation",):
            if any(t > cfg.estimators.lag_max + 1e-12 for t in obs["lags"]):
                ctx.fail(p + ("lags",), "lags must not exceed estimators.lag_max")
        if obs["kind"] in ("gap", "resolvent", "n_consistency"):
            if obs["window"][1] > cfg.estimators.lag_max + 1e-12:
                ctx.fail(p + ("window",), "fit window must lie within estimators.lag_max")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), str(path.parent))
