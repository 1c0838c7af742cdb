"""Metropolis-Hastings sampling of jump paths under the finite-window Gibbs measure.

The target density, relative to a uniform initial sign times a homogeneous
Poisson point process of jump times on [-T, T], is

    eps**n * exp(lam * A(Y)),

with ``A`` the pair action.  Normalised, the reference is a rate-``eps`` flip
process.  All moves flip the path on some region and obtain the action change
from :func:`sbmc.path.delta_action_flip`.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kernel import KernelSet
from .path import SpinPath, delta_action_flip, k_of, pair_action, quadrant
from .stats import tau_int

MOVES = ("insert", "delete", "shift", "pair_insert", "pair_delete", "global_flip")
RNG_ALGORITHM = "numpy.random.PCG64"


class NonErgodicWarning(UserWarning):
    pass


class ActionDriftWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MoveMix:
    insert: float = 0.2
    delete: float = 0.2
    shift: float = 0.3
    pair_insert: float = 0.1
    pair_delete: float = 0.1
    global_flip: float = 0.1

    def __post_init__(self):
        p = self.as_array()
        if np.any(p < 0):
            raise ValueError("move probabilities must be non-negative")
        if abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"move probabilities must sum to 1, got {p.sum()}")
        if self.insert != self.delete:
            raise ValueError("insert and delete probabilities must be equal")
        if self.pair_insert != self.pair_delete:
            raise ValueError("pair_insert and pair_delete probabilities must be equal")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, m) for m in MOVES], dtype=float)


@dataclass
class MeasurementPlan:
    """Which path functionals are recorded after every measurement sweep."""

    t_w: float
    truncation: float | None = None
    probe_spacing: float = 1.0
    lag_spacing: float = 0.05
    lag_max: float = 5.0
    tests: tuple | None = None
    modified: tuple = ()
    record_quadrant: bool = True
    record_k: bool = True

    def __post_init__(self):
        if self.truncation is None:
            self.truncation = self.t_w
        if self.lag_max > 2 * self.t_w:
            raise ValueError("lag_max must not exceed the measurement window 2 t_w")

    @property
    def centers(self) -> np.ndarray:
        k = max(int(round(2 * self.t_w / self.probe_spacing)), 0)
        return np.linspace(-self.t_w, self.t_w, k + 1) if k else np.zeros(1)

    @property
    def grid(self) -> np.ndarray:
        k = int(round(2 * self.t_w / self.lag_spacing))
        return np.linspace(-self.t_w, self.t_w, k + 1)

    @property
    def lags(self) -> np.ndarray:
        n = int(round(self.lag_max / self.lag_spacing))
        return np.arange(n + 1) * (self.t_w * 2 / (self.grid.size - 1))


@dataclass
class McmcConfig:
    T: float
    epsilon: float
    alpha: float
    lam: float | None = None
    moves: MoveMix = field(default_factory=MoveMix)
    shift_width: float = 0.5
    pair_width: float = 1.0
    sweep_length: int = 0
    burn_in: int = 200
    sweeps: int = 1000
    seed: int = 0
    chain: int = 0
    grid_slots: int | None = None
    validate_every: int = 1000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0 (epsilon = 0 is handled by closed forms)")
        if not self.T > 0:
            raise ValueError("T must be > 0")
        lam_max = self.alpha**2 / 2
        if self.lam is None:
            self.lam = lam_max
        if not 0 <= self.lam <= lam_max * (1 + 1e-12):
            raise ValueError(f"lam must lie in [0, alpha^2/2 = {lam_max}]")
        if self.grid_slots is not None and not 1 <= self.grid_slots <= 4096:
            raise ValueError("grid_slots must be a positive integer")
        if not 0 < self.shift_width < 2 * self.T:
            raise ValueError("shift_width must lie in (0, 2T)")
        if not self.pair_width > 0:
            raise ValueError("pair_width must be > 0")

    @property
    def moves_per_sweep(self) -> int:
        if self.sweep_length:
            return int(self.sweep_length)
        return max(10, int(math.ceil(2 * self.T * self.epsilon)))

    # grid geometry (only meaningful when grid_slots is set)
    @property
    def slot_width(self) -> float:
        return 2 * self.T / self.grid_slots

    @property
    def slot_positions(self) -> np.ndarray:
        return -self.T + (np.arange(self.grid_slots) + 0.5) * self.slot_width

    @property
    def shift_slots(self) -> int:
        return min(max(1, int(round(self.shift_width / self.slot_width))), self.grid_slots - 1 or 1)

    @property
    def pair_slots(self) -> int:
        return max(1, int(round(self.pair_width / self.slot_width)))

    @property
    def pair_length(self) -> float:
        """Length scale entering the pair-move acceptance ratio."""
        if self.grid_slots is None:
            return self.pair_width
        return self.pair_slots * self.slot_width


def make_rng(seed: int, chain: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(chain)))))


def rng_metadata() -> dict:
    return {"algorithm": RNG_ALGORITHM, "seeding": "SeedSequence((seed, chain))", "numpy": np.__version__}


@dataclass
class ChainState:
    path: SpinPath
    action: float
    rng: np.random.Generator
    kernels: KernelSet
    proposed: np.ndarray = field(default_factory=lambda: np.zeros(len(MOVES), dtype=np.int64))
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(len(MOVES), dtype=np.int64))
    max_drift: float = 0.0

    @classmethod
    def initial(cls, config: McmcConfig, kernels: KernelSet, path: SpinPath | None = None) -> "ChainState":
        rng = make_rng(config.seed, config.chain)
        if path is None:
            path = SpinPath(config.T, 1 if rng.random() < 0.5 else -1, [])
        return cls(path, pair_action(path, kernels), rng, kernels)

    def revalidate(self) -> float:
        exact = pair_action(self.path, self.kernels)
        drift = abs(self.action - exact) / max(abs(exact), 1e-300)
        self.max_drift = max(self.max_drift, drift)
        if drift > 1e-9:
            warnings.warn(f"cached action drifted by {drift:.2e}; recomputed", ActionDriftWarning)
        self.action = exact
        return drift


def _accept(state: ChainState, log_ratio: float) -> bool:
    return log_ratio >= 0 or state.rng.random() < math.exp(log_ratio)


def _draw_point(state, config) -> float:
    r = state.rng.random()
    if config.grid_slots is None:
        return config.T * (2 * r - 1)
    return config._slots[min(int(r * config.grid_slots), config.grid_slots - 1)]


def _commit(state, dA, jumps, v=None):
    p = state.path
    state.path = SpinPath.__new__(SpinPath)
    state.path.T, state.path.v, state.path.jumps = p.T, p.v if v is None else v, jumps
    state.action += dA


def _move_insert(state, config) -> bool:
    path = state.path
    u = _draw_point(state, config)
    idx = int(path.jumps.searchsorted(u))
    if (idx < path.n and path.jumps[idx] == u) or abs(u) >= config.T:
        return False
    dA = delta_action_flip(path, state.kernels, u)
    lr = math.log(2 * config.T * config.epsilon / (path.n + 1)) + config.lam * dA
    if not _accept(state, lr):
        return False
    _commit(state, dA, np.insert(path.jumps, idx, u))
    return True


def _move_delete(state, config) -> bool:
    path = state.path
    n = path.n
    if n == 0:
        return False
    idx = min(int(state.rng.random() * n), n - 1)
    dA = delta_action_flip(path, state.kernels, path.jumps[idx])
    lr = math.log(n / (2 * config.T * config.epsilon)) + config.lam * dA
    if not _accept(state, lr):
        return False
    _commit(state, dA, np.delete(path.jumps, idx))
    return True


def _move_shift(state, config) -> bool:
    path = state.path
    n = path.n
    if n == 0:
        return False
    T = config.T
    idx = min(int(state.rng.random() * n), n - 1)
    tau = path.jumps[idx]
    r = state.rng.random()
    if config.grid_slots is None:
        u = tau + config.shift_width * (2 * r - 1)
        if u < -T:
            u = -2 * T - u
        elif u > T:
            u = 2 * T - u
    else:
        m, L = config.grid_slots, config.shift_slots
        j = min(int(r * 2 * L), 2 * L - 1)
        d = j - L if j < L else j - L + 1
        k = int(round((tau + T) / config.slot_width - 0.5)) + d
        if k < 0:
            k = -k - 1
        elif k >= m:
            k = 2 * m - 1 - k
        u = config._slots[k]
    if u == tau:
        return True
    left = path.jumps[idx - 1] if idx > 0 else -T
    right = path.jumps[idx + 1] if idx < n - 1 else T
    if not left < u < right:
        return False
    dA = delta_action_flip(path, state.kernels, min(u, tau), max(u, tau))
    if not _accept(state, config.lam * dA):
        return False
    jumps = path.jumps.copy()
    jumps[idx] = u
    _commit(state, dA, jumps)
    return True


def _move_pair_insert(state, config) -> bool:
    path = state.path
    T = config.T
    if config.grid_slots is None:
        u1 = _draw_point(state, config)
        u2 = u1 + config.pair_width * state.rng.random()
        if u2 >= T or u2 == u1:
            return False
    else:
        m = config.grid_slots
        k1 = min(int(state.rng.random() * m), m - 1)
        k2 = k1 + 1 + min(int(state.rng.random() * config.pair_slots), config.pair_slots - 1)
        if k2 >= m:
            return False
        u1, u2 = config._slots[k1], config._slots[k2]
    i1 = int(path.jumps.searchsorted(u1, "left"))
    i2 = int(path.jumps.searchsorted(u2, "right"))
    if i1 != i2:
        return False
    dA = delta_action_flip(path, state.kernels, u1, u2)
    L = config.pair_length
    lr = math.log(config.epsilon**2 * 2 * T * L / (path.n + 1)) + config.lam * dA
    if not _accept(state, lr):
        return False
    _commit(state, dA, np.insert(path.jumps, [i1, i1], [u1, u2]))
    return True


def _move_pair_delete(state, config) -> bool:
    path = state.path
    n = path.n
    if n < 2:
        return False
    i = min(int(state.rng.random() * (n - 1)), n - 2)
    a, b = path.jumps[i], path.jumps[i + 1]
    if config.grid_slots is None:
        if b - a >= config.pair_width:
            return False
    elif int(round((b - a) / config.slot_width)) > config.pair_slots:
        return False
    dA = delta_action_flip(path, state.kernels, a, b)
    L = config.pair_length
    lr = math.log((n - 1) / (config.epsilon**2 * 2 * config.T * L)) + config.lam * dA
    if not _accept(state, lr):
        return False
    _commit(state, dA, np.delete(path.jumps, [i, i + 1]))
    return True


def _move_global_flip(state, config) -> bool:
    _commit(state, 0.0, state.path.jumps, -state.path.v)
    return True


_MOVE_FUNCS = (_move_insert, _move_delete, _move_shift, _move_pair_insert, _move_pair_delete, _move_global_flip)


def _prepare(config: McmcConfig):
    # cached derived quantities used in the inner loop
    if not hasattr(config, "_cum"):
        object.__setattr__(config, "_cum", np.cumsum(config.moves.as_array()))
        object.__setattr__(config, "_slots", config.slot_positions if config.grid_slots else None)


def step(state: ChainState, config: McmcConfig) -> ChainState:
    """Propose one move from the mix and accept or reject it in place."""
    _prepare(config)
    k = int(config._cum.searchsorted(state.rng.random(), "right"))
    k = min(k, len(MOVES) - 1)
    state.proposed[k] += 1
    if _MOVE_FUNCS[k](state, config):
        state.accepted[k] += 1
    return state


def sweep(state: ChainState, config: McmcConfig) -> ChainState:
    for _ in range(config.moves_per_sweep):
        step(state, config)
    return state


# ---------------------------------------------------------------------------
# measurement records


@dataclass
class Samples:
    """Per-sweep path functionals of one or more chains."""

    action: np.ndarray
    n: np.ndarray
    y: np.ndarray
    quadrant: np.ndarray
    k: dict
    corr: np.ndarray
    quadrant_mod: dict = field(default_factory=dict)
    chain: np.ndarray | None = None
    centers: np.ndarray | None = None
    lags: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.action.size

    @classmethod
    def concatenate(cls, parts: list["Samples"]) -> "Samples":
        first = parts[0]
        chain = np.concatenate([
            p.chain if p.chain is not None else np.full(len(p), i) for i, p in enumerate(parts)
        ])
        return cls(
            action=np.concatenate([p.action for p in parts]),
            n=np.concatenate([p.n for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            quadrant=np.concatenate([p.quadrant for p in parts]),
            k={name: np.concatenate([p.k[name] for p in parts]) for name in first.k},
            corr=np.concatenate([p.corr for p in parts]),
            quadrant_mod={name: np.concatenate([p.quadrant_mod[name] for p in parts]) for name in first.quadrant_mod},
            chain=chain,
            centers=first.centers,
            lags=first.lags,
            meta=dict(first.meta),
        )

    def subset(self, stop: int) -> "Samples":
        """The first ``stop`` records of every chain."""
        ids = self.chain if self.chain is not None else np.zeros(len(self), dtype=int)
        mask = np.zeros(len(self), dtype=bool)
        for c in np.unique(ids):
            where = np.flatnonzero(ids == c)[:stop]
            mask[where] = True
        return Samples(
            action=self.action[mask], n=self.n[mask], y=self.y[mask], quadrant=self.quadrant[mask],
            k={a: b[mask] for a, b in self.k.items()}, corr=self.corr[mask],
            quadrant_mod={a: b[mask] for a, b in self.quadrant_mod.items()},
            chain=ids[mask], centers=self.centers, lags=self.lags, meta=dict(self.meta),
        )

    def columns(self) -> list[str]:
        nc = self.y.shape[1]
        cols = ["chain", "action", "n"]
        cols += [f"y_{i}" for i in range(nc)]
        cols += [f"w_{i}" for i in range(nc)]
        for name in self.quadrant_mod:
            cols += [f"wmod_{name}_{i}" for i in range(nc)]
        for name in self.k:
            cols += [f"k_{name}_{i}" for i in range(nc)]
        cols += [f"corr_{j}" for j in range(self.corr.shape[1])]
        return cols

    def to_csv(self, path) -> None:
        """One row per measurement sweep, columns as given by :meth:`columns`."""
        ids = self.chain if self.chain is not None else np.zeros(len(self), dtype=int)
        blocks = [ids[:, None], self.action[:, None], self.n[:, None], self.y, self.quadrant]
        blocks += list(self.quadrant_mod.values()) + list(self.k.values()) + [self.corr]
        table = np.hstack([np.asarray(b, dtype=float) for b in blocks])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in table:
                w.writerow([repr(float(x)) for x in row])


def _measure(path: SpinPath, kernels: KernelSet, alpha: float, plan: MeasurementPlan, tests, buffers, i):
    centers = plan.centers
    buffers["y"][i] = path.spin_at(centers)
    if plan.record_quadrant:
        for j, c in enumerate(centers):
            buffers["quadrant"][i, j] = quadrant(path, kernels, plan.truncation, center=c)
            for label, rho_op, beta in plan.modified:
                buffers["mod"][label][i, j] = quadrant(path, kernels, plan.truncation, center=c, mode=(rho_op, beta))
    if plan.record_k:
        for name in tests:
            for j, c in enumerate(centers):
                buffers["k"][name][i, j] = k_of(path, kernels, name, alpha, center=c, truncation=plan.truncation)
    g = path.spin_at(plan.grid).astype(float)
    nl = buffers["corr"].shape[1]
    full = np.correlate(g, g, mode="full")[g.size - 1 : g.size - 1 + nl]
    buffers["corr"][i] = full / (g.size - np.arange(nl))


@dataclass
class ChainResult:
    samples: Samples
    diagnostics: dict
    final_path: SpinPath


def run_chain(config: McmcConfig, kernels: KernelSet, plan: MeasurementPlan | None = None,
              initial: SpinPath | None = None) -> ChainResult:
    """Burn in, then record path functionals after every sweep."""
    _prepare(config)
    state = ChainState.initial(config, kernels, initial)
    if plan is None:
        t_w = min(config.T / 2, 5.0)
        plan = MeasurementPlan(t_w=t_w, lag_max=min(t_w, 5.0))
    if plan.truncation > config.T - plan.t_w + 1e-12:
        raise ValueError("truncation T' must satisfy t_w + T' <= T")
    tests = tuple(kernels.cross) if plan.tests is None else tuple(plan.tests)
    nc = plan.centers.size
    nl = plan.lags.size
    S = config.sweeps
    buffers = {
        "y": np.zeros((S, nc), dtype=np.int8),
        "quadrant": np.zeros((S, nc)),
        "mod": {label: np.zeros((S, nc)) for label, _, _ in plan.modified},
        "k": {name: np.zeros((S, nc)) for name in tests},
        "corr": np.zeros((S, nl)),
    }
    action = np.zeros(S)
    njumps = np.zeros(S, dtype=np.int64)

    count = 0
    for _ in range(config.burn_in):
        sweep(state, config)
        count += 1
        if count % config.validate_every == 0:
            state.revalidate()
    burn_prop, burn_acc = state.proposed.copy(), state.accepted.copy()
    if config.burn_in:
        probs = config.moves.as_array()
        dead = [m for m, p, a, q in zip(MOVES, probs, burn_acc, burn_prop) if p > 0 and q > 0 and a == 0]
        if dead:
            warnings.warn(f"moves never accepted during burn-in: {', '.join(dead)}", NonErgodicWarning)

    for i in range(S):
        sweep(state, config)
        count += 1
        if count % config.validate_every == 0:
            state.revalidate()
        action[i] = state.action
        njumps[i] = state.path.n
        _measure(state.path, kernels, config.alpha, plan, tests, buffers, i)
    state.revalidate()

    samples = Samples(
        action=action, n=njumps, y=buffers["y"], quadrant=buffers["quadrant"], k=buffers["k"],
        corr=buffers["corr"], quadrant_mod=buffers["mod"], chain=np.full(S, config.chain),
        centers=plan.centers, lags=plan.lags,
        meta={"T": config.T, "t_w": plan.t_w, "truncation": plan.truncation, "epsilon": config.epsilon,
              "alpha": config.alpha, "lam": config.lam},
    )
    prop = np.maximum(state.proposed, 1)
    diagnostics = {
        "acceptance": {m: float(a / p) for m, a, p in zip(MOVES, state.accepted, prop)},
        "proposed": {m: int(p) for m, p in zip(MOVES, state.proposed)},
        "tau_int_action": tau_int(action) if S > 1 else 0.5,
        "max_action_drift": state.max_drift,
        "moves_per_sweep": config.moves_per_sweep,
        "burn_in": config.burn_in,
        "sweeps": S,
        "seed": config.seed,
        "chain": config.chain,
        "rng": rng_metadata(),
    }
    return ChainResult(samples, diagnostics, state.path)


def _chain_job(args):
    config, kernels, plan = args
    return run_chain(config, kernels, plan)


def run_chains(config: McmcConfig, kernels: KernelSet, plan: MeasurementPlan | None = None, chains: int = 1,
               workers: int = 1) -> tuple[Samples, list[dict]]:
    """Independent chains ``config.chain, config.chain + 1, ...`` merged into one record set.

    Each chain owns its RNG stream, so the merged result does not depend on
    ``workers``.
    """
    jobs = [(replace(config, chain=config.chain + c), kernels, plan) for c in range(chains)]
    if workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    return Samples.concatenate([r.samples for r in results]), [r.diagnostics for r in results]


def run_action_chain(config: McmcConfig, kernels: KernelSet) -> tuple[np.ndarray, dict]:
    """Cheaper chain that records only the pair action (for coupling ladders)."""
    _prepare(config)
    state = ChainState.initial(config, kernels)
    for i in range(config.burn_in):
        sweep(state, config)
    out = np.zeros(config.sweeps)
    for i in range(config.sweeps):
        sweep(state, config)
        if (i + 1) % config.validate_every == 0:
            state.revalidate()
        out[i] = state.action
    state.revalidate()
    prop = np.maximum(state.proposed, 1)
    return out, {"acceptance": {m: float(a / p) for m, a, p in zip(MOVES, state.accepted, prop)},
                 "max_action_drift": state.max_drift}


# ---------------------------------------------------------------------------
# exact transition matrix on the slot grid


def _state_code(v: int, slots, m: int) -> int:
    code = 0 if v > 0 else 1
    for k in slots:
        code |= 1 << (k + 1)
    return code


def decode_state(code: int, m: int):
    v = 1 if code & 1 == 0 else -1
    slots = [k for k in range(m) if code >> (k + 1) & 1]
    return v, slots


def path_code(path: SpinPath, config: McmcConfig) -> int:
    ks = np.rint((path.jumps + config.T) / config.slot_width - 0.5).astype(int)
    return _state_code(path.v, ks, config.grid_slots)


def grid_transition_matrix(config: McmcConfig, kernels: KernelSet) -> np.ndarray:
    """Dense one-step transition matrix of :func:`step` on the slot grid."""
    m = config.grid_slots
    if m is None or m > 12:
        raise ValueError("grid_slots must be set and at most 12")
    _prepare(config)
    T, eps, lam = config.T, config.epsilon, config.lam
    xs = config._slots
    probs = config.moves.as_array()
    size = 2 << m
    P = np.zeros((size, size))
    L, Lp, ell = config.shift_slots, config.pair_slots, config.pair_length

    def acc(log_ratio):
        return 1.0 if log_ratio >= 0 else math.exp(log_ratio)

    for code in range(size):
        v, occ = decode_state(code, m)
        path = SpinPath(T, v, xs[occ])
        A = pair_action(path, kernels)
        n = len(occ)
        occset = set(occ)

        def add(target_v, target_occ, prob):
            tgt = _state_code(target_v, target_occ, m)
            P[code, tgt] += prob

        def dA_of(target_occ, target_v=v):
            return pair_action(SpinPath(T, target_v, xs[sorted(target_occ)]), kernels) - A

        # insert
        for k in range(m):
            q = probs[0] / m
            if k in occset:
                continue
            new = sorted(occ + [k])
            a = acc(math.log(2 * T * eps / (n + 1)) + lam * dA_of(new))
            add(v, new, q * a)
        # delete
        for j in range(n):
            q = probs[1] / n
            new = occ[:j] + occ[j + 1 :]
            a = acc(math.log(n / (2 * T * eps)) + lam * dA_of(new))
            add(v, new, q * a)
        # shift
        for j in range(n):
            for d in list(range(-L, 0)) + list(range(1, L + 1)):
                q = probs[2] / n / (2 * L)
                k = occ[j] + d
                if k < 0:
                    k = -k - 1
                elif k >= m:
                    k = 2 * m - 1 - k
                if k == occ[j]:
                    continue
                lo = occ[j - 1] if j > 0 else -1
                hi = occ[j + 1] if j < n - 1 else m
                if not lo < k < hi:
                    continue
                new = occ[:j] + [k] + occ[j + 1 :]
                add(v, new, q * acc(lam * dA_of(new)))
        # pair insert
        for k1 in range(m):
            for d in range(1, Lp + 1):
                q = probs[3] / (m * Lp)
                k2 = k1 + d
                if k2 >= m or any(k1 <= k <= k2 for k in occ):
                    continue
                new = sorted(occ + [k1, k2])
                a = acc(math.log(eps**2 * 2 * T * ell / (n + 1)) + lam * dA_of(new))
                add(v, new, q * a)
        # pair delete
        for i in range(n - 1):
            q = probs[4] / (n - 1)
            if occ[i + 1] - occ[i] > Lp:
                continue
            new = occ[:i] + occ[i + 2 :]
            a = acc(math.log((n - 1) / (eps**2 * 2 * T * ell)) + lam * dA_of(new))
            add(v, new, q * a)
        # global flip
        add(-v, occ, probs[5])
        P[code, code] += 1.0 - P[code].sum()
    return P


def run_grid_histogram(config: McmcConfig, kernels: KernelSet, n_steps: int) -> np.ndarray:
    """Visit counts of every slot-grid state over ``n_steps`` single moves."""
    _prepare(config)
    state = ChainState.initial(config, kernels)
    counts = np.zeros(2 << config.grid_slots, dtype=np.int64)
    bit = {float(x): 1 << (k + 1) for k, x in enumerate(config._slots)}
    for _ in range(n_steps):
        step(state, config)
        code = 0 if state.path.v > 0 else 1
        for x in state.path.jumps.tolist():
            code |= bit[x]
        counts[code] += 1
    return counts
