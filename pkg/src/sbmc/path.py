"""Piecewise-constant spin paths and their exact integral functionals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelSet, LaplaceKernel


class TruncationTooLarge(ValueError):
    pass


class QuadrantBoundViolated(AssertionError):
    pass


@dataclass
class SpinPath:
    """A +-1 path on [-T, T]: value ``v`` on [-T, tau_1), flipping at each jump."""

    T: float
    v: int
    jumps: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.jumps = np.asarray(self.jumps, dtype=float).reshape(-1)
        self.v = int(self.v)
        if self.v not in (-1, 1):
            raise ValueError("initial sign must be +1 or -1")
        if not self.T > 0:
            raise ValueError("window half-width must be positive")
        if self.jumps.size:
            if np.any(np.diff(self.jumps) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if self.jumps[0] <= -self.T or self.jumps[-1] >= self.T:
                raise ValueError("jump times must lie inside the open window")

    @property
    def n(self) -> int:
        return self.jumps.size

    def spin_at(self, t):
        k = np.searchsorted(self.jumps, t, side="right")
        return self.v * (1 - 2 * (np.asarray(k) & 1))

    def bounds(self) -> np.ndarray:
        return np.concatenate(([-self.T], self.jumps, [self.T]))

    def signs(self) -> np.ndarray:
        s = np.full(self.n + 1, self.v, dtype=float)
        s[1::2] *= -1
        return s

    def segments(self, lo: float | None = None, hi: float | None = None):
        """Segments ``(a, b, s)`` of the path restricted to [lo, hi]."""
        lo = -self.T if lo is None else lo
        hi = self.T if hi is None else hi
        return clip_segments(self.bounds(), self.signs(), lo, hi)

    def flipped(self) -> "SpinPath":
        return SpinPath(self.T, -self.v, self.jumps.copy())

    def copy(self) -> "SpinPath":
        return SpinPath(self.T, self.v, self.jumps.copy())

    def to_line(self) -> str:
        parts = [repr(float(self.T)), str(self.v), str(self.n)] + [repr(float(x)) for x in self.jumps]
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "SpinPath":
        tok = line.split()
        T, v, n = float(tok[0]), int(tok[1]), int(tok[2])
        jumps = np.array([float(x) for x in tok[3:]])
        if jumps.size != n:
            raise ValueError(f"expected {n} jump times, found {jumps.size}")
        return cls(T, v, jumps)

    def __eq__(self, other):
        return (
            isinstance(other, SpinPath)
            and self.T == other.T
            and self.v == other.v
            and np.array_equal(self.jumps, other.jumps)
        )


def clip_segments(bnds, signs, lo, hi):
    if hi <= lo:
        e = np.empty(0)
        return e, e, e
    i = int(np.searchsorted(bnds, lo, side="right")) - 1
    j = int(np.searchsorted(bnds, hi, side="left"))
    i = max(i, 0)
    j = min(j, len(bnds) - 1)
    a = bnds[i:j].copy()
    b = bnds[i + 1 : j + 1].copy()
    if a.size:
        a[0] = max(a[0], lo)
        b[-1] = min(b[-1], hi)
    return a, b, signs[i:j]


def breakpoints(path: SpinPath, lo: float, hi: float):
    """Breakpoints of the path restricted to [lo, hi] and their weights.

    For a piece with value s_0 on [lo, t_1), s_1 on [t_1, t_2), ... the
    weights are -s_0 at lo, s_{p-1} - s_p at each interior jump and s_last at
    hi.  Integrals of Y against antiderivatives then telescope onto these
    points.
    """
    jumps = path.jumps
    i = int(jumps.searchsorted(lo, "right"))
    j = int(jumps.searchsorted(hi, "left"))
    k = max(j - i, 0)
    s0 = path.v if i % 2 == 0 else -path.v
    x = np.empty(k + 2)
    x[0] = lo
    x[1:-1] = jumps[i:j]
    x[-1] = hi
    c = np.empty(k + 2)
    c[0] = -s0
    c[1:-1] = 2.0 * s0
    c[2:-1:2] = -2.0 * s0
    c[-1] = s0 if k % 2 == 0 else -s0
    return x, c


def _lk(kernels) -> LaplaceKernel:
    return kernels.kernel if isinstance(kernels, KernelSet) else kernels


def point_sum(kern: LaplaceKernel, x, cx, y, cy) -> float:
    """-sum_pq cx_p cy_q U(x_p - y_q); equals the segment-pair rectangle sum."""
    if x.size == 0 or y.size == 0:
        return 0.0
    return -float(cx @ kern.u2(x[:, None] - y[None, :]) @ cy)


def rect_sum(kern: LaplaceKernel, a1, b1, s1, a2, b2, s2) -> float:
    """Sum over segment pairs of s_i s_j * integral of w(t - s)."""
    if a1.size == 0 or a2.size == 0:
        return 0.0
    u = kern.u2
    B1 = b1[:, None]
    A1 = a1[:, None]
    val = u(B1 - a2) - u(A1 - a2) - u(B1 - b2) + u(A1 - b2)
    return float(s1 @ val @ s2)


def pair_action(path: SpinPath, kernels) -> float:
    """Double integral of Y_t Y_s w(t - s) over the window squared."""
    kern = _lk(kernels)
    x, c = breakpoints(path, -path.T, path.T)
    return point_sum(kern, x, c, x, c)


def delta_action_flip(path: SpinPath, kernels, lo: float, hi: float | None = None) -> float:
    """Change of the pair action when the path is negated on [lo, hi].

    ``hi`` defaults to the right window edge (a suffix flip).
    """
    kern = _lk(kernels)
    T = path.T
    hi = T if hi is None else hi
    lo, hi = max(lo, -T), min(hi, T)
    if hi <= lo or (lo == -T and hi == T):
        return 0.0
    xr, cr = breakpoints(path, lo, hi)
    parts = []
    if lo > -T:
        parts.append(breakpoints(path, -T, lo))
    if hi < T:
        parts.append(breakpoints(path, hi, T))
    if len(parts) == 1:
        xc, cc = parts[0]
    else:
        xc = np.concatenate((parts[0][0], parts[1][0]))
        cc = np.concatenate((parts[0][1], parts[1][1]))
    return -4.0 * point_sum(kern, xr, cr, xc, cc)


def k_of(path: SpinPath, kernels: KernelSet, name: str, alpha: float, center: float = 0.0, truncation=None) -> float:
    """-(alpha/2) * integral of C_hf(r - center) Y_r dr over the (truncated) window."""
    if alpha == 0:
        return 0.0
    lo, hi = -path.T, path.T
    if truncation is not None:
        lo, hi = max(lo, center - truncation), min(hi, center + truncation)
    x, c = breakpoints(path, lo, hi)
    # sum_i s_i (Q(b_i) - Q(a_i)) telescopes to sum_p c_p Q(x_p)
    q = kernels.c_cross_antideriv(name, x - center)
    return float(-0.5 * alpha * (c @ q))


def quadrant(path: SpinPath, kernels, truncation: float, center: float = 0.0, mode=None, bound: float | None = None) -> float:
    """Integral of Y_t Y_s w(t - s) over t in [c - T', c], s in [c, c + T'].

    ``mode`` is ``None`` for the bath kernel or ``(rho_op, beta)`` for the
    modified kernel.  The value is checked against ``bound`` (by default half
    the norm of the kernel in use), a bound that holds for every path.
    """
    if truncation > path.T or center - truncation < -path.T or center + truncation > path.T:
        raise TruncationTooLarge(
            f"quadrant [{center - truncation}, {center + truncation}] leaves window [-{path.T}, {path.T}]"
        )
    if mode is None:
        kern = _lk(kernels)
    else:
        kern = kernels.modified(*mode)
    xl, cl = breakpoints(path, center - truncation, center)
    xr, cr = breakpoints(path, center, center + truncation)
    val = point_sum(kern, xl, cl, xr, cr)
    lim = 0.5 * kern.norm_sq if bound is None else bound
    if abs(val) > lim * (1 + 1e-9) + 1e-14:
        raise QuadrantBoundViolated(f"|quadrant| = {abs(val)} exceeds {lim}")
    return val


@dataclass
class PathFunctionals:
    action: float
    quadrant: float
    k: dict
    n: int


def functionals(path: SpinPath, kernels: KernelSet, alpha: float, truncation: float) -> PathFunctionals:
    return PathFunctionals(
        action=pair_action(path, kernels),
        quadrant=quadrant(path, kernels, truncation),
        k={name: k_of(path, kernels, name, alpha, truncation=truncation) for name in kernels.cross},
        n=path.n,
    )
