"""Independent reference values.

* exact diagonalisation of the rotated Hamiltonian
  ``H = -eps sigma_x + sum_m w_m a_m^+ a_m + alpha sigma_z sum_m g_m x_m``
  with ``x = (a + a^+)/sqrt(2)`` on a truncated Fock space;
* a brute-force sum over all paths whose jumps sit on a slot grid;
* closed forms at eps = 0 and second-order perturbation theory.

The path spin ``Y`` corresponds to the sigma_z label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import integrate, linalg
from scipy.sparse.linalg import eigsh

from .kernel import DiscreteModes, KernelSet, PowerLawExpCutoff, Tabulated

MAX_DIM = 2**15


class NoConvergence(RuntimeError):
    pass


class TooManySlots(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedModel:
    epsilon: float
    alpha: float
    couplings: tuple
    frequencies: tuple
    n_max: int = 30

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(float(g) for g in np.atleast_1d(self.couplings)))
        object.__setattr__(self, "frequencies", tuple(float(w) for w in np.atleast_1d(self.frequencies)))
        if len(self.couplings) != len(self.frequencies):
            raise ValueError("couplings and frequencies differ in length")
        if self.dim > MAX_DIM:
            raise ValueError(f"Hilbert dimension {self.dim} exceeds {MAX_DIM}")

    @classmethod
    def from_bath(cls, bath: DiscreteModes, epsilon, alpha, n_max=30):
        return cls(epsilon, alpha, bath.couplings, bath.frequencies, n_max)

    @property
    def modes(self) -> int:
        return len(self.couplings)

    @property
    def boson_dim(self) -> int:
        return (self.n_max + 1) ** self.modes

    @property
    def dim(self) -> int:
        return 2 * self.boson_dim

    def with_cutoff(self, n_max: int) -> "TruncatedModel":
        return TruncatedModel(self.epsilon, self.alpha, self.couplings, self.frequencies, n_max)

    # boson-space operators
    def _single(self, m: int, op: sp.spmatrix) -> sp.csr_matrix:
        eye = sp.identity(self.n_max + 1, format="csr")
        out = sp.identity(1, format="csr")
        for j in range(self.modes):
            out = sp.kron(out, op if j == m else eye, format="csr")
        return out

    @cached_property
    def annihilators(self) -> list:
        a = sp.diags(np.sqrt(np.arange(1, self.n_max + 1)), 1, format="csr")
        return [self._single(m, a) for m in range(self.modes)]

    @cached_property
    def number(self) -> np.ndarray:
        """Diagonal of the total number operator on the boson space."""
        n1 = np.arange(self.n_max + 1)
        diag = np.zeros(1)
        for _ in range(self.modes):
            diag = (diag[:, None] + n1[None, :]).ravel()
        return diag

    def field(self, coeffs) -> sp.csr_matrix:
        """sum_m c_m x_m on the boson space."""
        out = sp.csr_matrix((self.boson_dim, self.boson_dim))
        for c, a in zip(coeffs, self.annihilators):
            out = out + (c / math.sqrt(2)) * (a + a.T)
        return out.tocsr()

    def hamiltonian(self) -> sp.csr_matrix:
        nb = self.boson_dim
        hf = sp.csr_matrix((nb, nb))
        for w, a in zip(self.frequencies, self.annihilators):
            hf = hf + w * (a.T @ a)
        phi = self.field(self.couplings)
        sx = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        sz = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
        eye_b = sp.identity(nb, format="csr")
        eye_s = sp.identity(2, format="csr")
        H = -self.epsilon * sp.kron(sx, eye_b) + sp.kron(eye_s, hf) + self.alpha * sp.kron(sz, phi)
        return H.tocsr()


@dataclass
class EDSolution:
    """Ground state of a truncated model and the spectral data needed for comparisons.

    The state is stored as the pair (psi_up, psi_down) of boson-space vectors.
    """

    model: TruncatedModel
    energy: float
    psi: np.ndarray
    energies: np.ndarray
    sigma_weights: np.ndarray
    residual: float

    @property
    def up(self):
        return self.psi[: self.model.boson_dim]

    @property
    def down(self):
        return self.psi[self.model.boson_dim :]

    @property
    def gap(self) -> float:
        """Lowest excitation with non-negligible overlap with sigma_z psi."""
        dE = self.energies - self.energy
        mask = (self.sigma_weights > 1e-10) & (dE > 1e-9)
        return float(dE[mask].min())

    def spin_correlation(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        dE = np.maximum(self.energies - self.energy, 0.0)
        return np.exp(-np.multiply.outer(t, dE)) @ self.sigma_weights

    def resolvent(self, omega):
        """Integral over r >= 0 of exp(-omega r) <Y_0 Y_r>."""
        omega = np.asarray(omega, dtype=float)
        dE = self.energies - self.energy
        keep = dE > 1e-9  # the ground state itself carries <sigma_z>^2 = 0
        return (1.0 / np.add.outer(omega, dE[keep])) @ self.sigma_weights[keep]

    # boson reduced matrices
    def _rho(self, xi: str = "1") -> np.ndarray:
        u, d = self.up, self.down
        if xi == "1":
            return np.outer(u, u) + np.outer(d, d)
        if xi == "sigma":
            return np.outer(u, u) - np.outer(d, d)
        raise ValueError(xi)

    def _diag_expect(self, values, xi="1"):
        u, d = self.up, self.down
        s = 1.0 if xi == "1" else -1.0
        return float(values @ (u * u) + s * (values @ (d * d)))

    def n_moment(self, m: int) -> float:
        return self._diag_expect(self.model.number**m)

    def boson_generating(self, beta) -> complex:
        """<exp(-beta N)> for complex beta."""
        vals = np.exp(-complex(beta) * self.model.number)
        return complex(vals @ (self.up**2 + self.down**2))

    def parity(self) -> float:
        return self._diag_expect((-1.0) ** self.model.number)

    def sigma_z_parity(self) -> float:
        """<sigma_z (-1)^N>: the spin label of the path times boson parity."""
        return self._diag_expect((-1.0) ** self.model.number, xi="sigma")

    def original_frame_parity(self) -> float:
        """<P> for P = sigma_z (-1)^N of the unrotated Hamiltonian, i.e. <-sigma_x (-1)^N> here."""
        par = (-1.0) ** self.model.number
        return float(-2.0 * (self.up @ (par * self.down)))

    @cached_property
    def _phi_cache(self):
        return {}

    def _phi_eig(self, coeffs):
        key = tuple(coeffs)
        if key not in self._phi_cache:
            mat = self.model.field(coeffs).toarray()
            self._phi_cache[key] = linalg.eigh(mat)
        return self._phi_cache[key]

    def field_function(self, coeffs, func, xi: str = "1"):
        """<xi F(phi(f))> via the spectral decomposition of phi(f)."""
        x, V = self._phi_eig(coeffs)
        rho = self._rho(xi)
        weights = np.einsum("ij,ik,kj->j", V, rho, V)
        return np.sum(weights * func(x))

    def field_moment(self, coeffs, n: int, xi: str = "1") -> float:
        return float(np.real(self.field_function(coeffs, lambda x: x**n, xi)))

    def char_fn(self, coeffs, beta) -> complex:
        return complex(self.field_function(coeffs, lambda x: np.exp(1j * beta * x)))

    def gaussian_moment(self, coeffs, beta) -> float:
        """<exp(beta phi(f)^2)> = ||exp(beta phi^2 / 2) psi||^2."""
        return float(np.real(self.field_function(coeffs, lambda x: np.exp(beta * x * x))))

    def exp_moment(self, coeffs, beta, xi="1") -> float:
        return float(np.real(self.field_function(coeffs, lambda x: np.exp(beta * x), xi)))

    def field_density(self, coeffs, x, xi: str = "1"):
        """Density of phi(f) on the points ``x`` (single-mode models only).

        Uses the Hermite-function wavefunctions, which resolves non-smooth
        functions of the field far better than the eigenbasis of the truncated
        field operator.
        """
        if self.model.modes != 1:
            raise ValueError("field_density is available for single-mode models")
        c = float(np.asarray(coeffs).reshape(-1)[0])
        q = np.asarray(x, dtype=float) / c
        nb = self.model.boson_dim
        psi = np.zeros((nb, q.size))
        psi[0] = np.pi**-0.25 * np.exp(-0.5 * q * q)
        if nb > 1:
            psi[1] = math.sqrt(2.0) * q * psi[0]
        for n in range(2, nb):
            psi[n] = math.sqrt(2.0 / n) * q * psi[n - 1] - math.sqrt((n - 1) / n) * psi[n - 2]
        rho = self._rho(xi)
        return np.einsum("ij,ik,jk->k", rho, psi, psi) / abs(c)

    def abs_moment(self, coeffs, s) -> float:
        """<|phi(f)|^s>; position-space quadrature for one mode, spectral otherwise."""
        if self.model.modes == 1:
            c = abs(float(np.asarray(coeffs).reshape(-1)[0]))
            edge = c * (math.sqrt(4.0 * self.model.boson_dim) + 10.0)
            half = np.linspace(0.0, edge, 20001)
            dens = self.field_density(coeffs, half) + self.field_density(coeffs, -half)
            return float(integrate.simpson(half**s * dens, x=half))
        return float(np.real(self.field_function(coeffs, lambda x: np.abs(x) ** s)))


def _sigma_z(psi, nb):
    out = psi.copy()
    out[nb:] *= -1
    return out


def ground_state(model: TruncatedModel, dense_limit: int = 4000, n_eig: int = 60) -> EDSolution:
    """Lowest eigenpair plus the spectrum seen by sigma_z psi."""
    H = model.hamiltonian()
    nb = model.boson_dim
    if model.dim <= dense_limit:
        E, V = linalg.eigh(H.toarray())
    else:
        k = min(n_eig, model.dim - 2)
        try:
            E, V = eigsh(H, k=k, which="SA", tol=1e-13, maxiter=20 * model.dim)
        except Exception as exc:
            raise NoConvergence(str(exc)) from exc
        order = np.argsort(E)
        E, V = E[order], V[:, order]
    psi = V[:, 0].copy()
    # fix the overall sign: largest component positive
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    resid = float(np.linalg.norm(H @ psi - E[0] * psi))
    if resid > 1e-10:
        raise NoConvergence(f"ground state residual {resid:.2e}")
    weights = (V.T @ _sigma_z(psi, nb)) ** 2
    return EDSolution(model, float(E[0]), psi, E, weights, resid)


def cutoff_certificate(model: TruncatedModel, step: int = 10, tol: float = 1e-8) -> dict:
    """Compare E_0 at n_max and n_max + step."""
    e1 = ground_state(model).energy
    hi = model.with_cutoff(model.n_max + step)
    e2 = ground_state(hi).energy if hi.dim <= MAX_DIM else math.nan
    return {"n_max": model.n_max, "E": e1, "E_higher": e2, "delta": abs(e2 - e1), "ok": abs(e2 - e1) < tol}


def mode_amplitudes(bath: DiscreteModes, overlap: DiscreteModes) -> np.ndarray:
    """Mode amplitudes f_m of a test function from its overlap density g_m f_m."""
    g = np.asarray(bath.couplings)
    return np.square(overlap.couplings) / g


def observables(sol: EDSolution, coeffs=None, betas=(0.5, 1.0)) -> dict:
    """Table of reference expectations; ``coeffs`` defaults to f = h."""
    m = sol.model
    c = np.asarray(m.couplings) if coeffs is None else np.asarray(coeffs)
    norm_f = float(c @ c)
    g, w = np.asarray(m.couplings), np.asarray(m.frequencies)
    table = {
        "energy": sol.energy,
        "gap": sol.gap,
        "parity": sol.parity(),
        "sigma_z_parity": sol.sigma_z_parity(),
        "original_frame_parity": sol.original_frame_parity(),
        "field_sq": sol.field_moment(c, 2),
        "field_var_sigma": sol.field_moment(c, 2) - sol.field_moment(c, 1, "sigma") ** 2,
        "n_bound": 0.5 * m.alpha**2 * float(np.sum(g**2 / w**2)),
        "norm_f_sq": norm_f,
    }
    for k in range(1, 5):
        table[f"N^{k}"] = sol.n_moment(k)
        table[f"phi^{k}"] = sol.field_moment(c, k)
    for b in betas:
        table[f"char_fn[{b:g}]"] = sol.char_fn(c, b).real
    table["gaussian_moment[0.5/F]"] = sol.gaussian_moment(c, 0.5 / norm_f)
    return table


# ---------------------------------------------------------------------------
# brute force over slot-grid paths


def _half_cell_kernel(kernels: KernelSet, h: float, ncells: int) -> np.ndarray:
    """H[d] = integral over two width-h cells d cells apart of w(t - s)."""
    w = lambda u: float(kernels.w_amp(u))
    out = np.zeros(ncells)
    for d in range(ncells):
        c = d * h
        f = lambda u: (h - abs(u)) * w(u + c)
        if d == 0:
            val = 2 * integrate.quad(f, 0, h, epsabs=1e-14, epsrel=1e-12)[0]
        else:
            val = integrate.quad(f, -h, h, points=[0.0], epsabs=1e-14, epsrel=1e-12)[0]
        out[d] = val
    return out


@dataclass
class PathSumResult:
    probabilities: np.ndarray  # indexed by state code (bit 0: v = -1, bit k+1: slot k jumped)
    log_normalization: float
    slots: int
    n_marginal: np.ndarray
    occupancy: np.ndarray
    same_sign: np.ndarray

    def marginals(self) -> dict:
        return {"n": self.n_marginal, "occupancy": self.occupancy, "same_sign": self.same_sign}


def marginals_from_distribution(p: np.ndarray, m: int) -> tuple:
    codes = np.arange(p.size)
    occ_bits = (codes[:, None] >> (np.arange(m)[None, :] + 1)) & 1
    n = occ_bits.sum(axis=1)
    n_marg = np.bincount(n, weights=p, minlength=m + 1)
    occupancy = occ_bits.T @ p
    # spin on each slot-separated cell relative to the first cell
    parity = np.cumsum(occ_bits, axis=1) & 1
    same = (1 - parity).T @ p
    return n_marg, occupancy, same


def brute_force_path_sum(T: float, epsilon: float, alpha: float, kernels: KernelSet, slots: int,
                         lam: float | None = None) -> PathSumResult:
    """Exact law of the slot-grid path measure.

    Jumps may occur only at slot centres -T + (k + 1/2) 2T/m; each jump carries
    odds eps * 2T/m and the weight is exp(lam * A) with A evaluated as a double
    sum over half-slot cells.
    """
    m = int(slots)
    if m > 12:
        raise TooManySlots(f"{m} slots exceed the enumeration limit of 12")
    if m < 1:
        raise ValueError("need at least one slot")
    lam = alpha**2 / 2 if lam is None else lam
    delta = 2 * T / m
    h = delta / 2
    ncell = 2 * m
    H = _half_cell_kernel(kernels, h, ncell)
    idx = np.arange(ncell)
    K = H[np.abs(idx[:, None] - idx[None, :])]
    size = 2 << m
    logw = np.zeros(size)
    for code in range(size):
        v = 1 if code & 1 == 0 else -1
        jumps = [(code >> (k + 1)) & 1 for k in range(m)]
        y = np.empty(ncell)
        s = v
        for k in range(m):
            y[2 * k] = s
            if jumps[k]:
                s = -s
            y[2 * k + 1] = s
        A = y @ K @ y
        logw[code] = sum(jumps) * math.log(epsilon * delta) + lam * A
    top = logw.max()
    p = np.exp(logw - top)
    Z = p.sum()
    p /= Z
    n_marg, occ, same = marginals_from_distribution(p, m)
    return PathSumResult(p, float(top + math.log(Z)), m, n_marg, occ, same)


def total_variation(p: dict, q: dict) -> dict:
    """Largest total-variation distance within each marginal family."""
    out = {"n": 0.5 * float(np.abs(p["n"] - q["n"]).sum())}
    out["occupancy"] = float(np.max(np.abs(p["occupancy"] - q["occupancy"])))
    out["same_sign"] = float(np.max(np.abs(p["same_sign"] - q["same_sign"])))
    return out


# ---------------------------------------------------------------------------
# closed forms


def van_hove_closed_forms(kernels: KernelSet, name: str, beta: float, alpha: float) -> dict:
    """eps = 0 references for the test function ``name``."""
    F = kernels.norm_f_sq[name]
    ov = kernels.overlap_h_over_omega_f[name]
    norm = kernels.norm_h_over_omega_sq
    return {
        "char_fn": math.exp(-beta**2 * F / 4) * math.cos(beta * alpha * ov),
        "energy": -0.5 * alpha**2 * kernels.bath.moment(-1),
        "n_mean": 0.5 * alpha**2 * norm,
        "k_constant_path": -alpha * ov,
        "parity": math.exp(-alpha**2 * norm),
    }


def perturbative_energy(epsilon: float, alpha: float, bath) -> float:
    """-eps - (alpha^2/2) * integral of rho / (2 eps + omega), second order in alpha."""
    if isinstance(bath, DiscreteModes):
        s = float(np.sum(bath.masses / (2 * epsilon + np.asarray(bath.frequencies))))
    else:
        omega, mass = bath.nodes() if isinstance(bath, Tabulated) else (None, None)
        if omega is not None:
            s = float(np.sum(mass / (2 * epsilon + omega)))
        else:
            s = integrate.quad(lambda x: bath.density(x) / (2 * epsilon + x), 0, np.inf,
                               epsabs=1e-12, epsrel=1e-10)[0]
    return -epsilon - 0.5 * alpha**2 * s


def free_spin_correlation(epsilon: float, t):
    return np.exp(-2 * epsilon * np.abs(np.asarray(t, dtype=float)))


def free_action_mean(kernels: KernelSet, T: float, epsilon: float) -> float:
    """<A> under the free flip process: 2 * int_0^{2T} (2T - u) exp(-2 eps u) w(u) du."""
    f = lambda u: (2 * T - u) * math.exp(-2 * epsilon * u) * float(kernels.w_amp(u))
    pts = [min(2 * T, x) for x in (0.1, 1.0, 10.0) if x < 2 * T]
    return 2 * integrate.quad(f, 0, 2 * T, points=pts or None, epsabs=1e-12, epsrel=1e-11, limit=400)[0]
