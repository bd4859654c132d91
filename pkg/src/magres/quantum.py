"""Spectra of the Weyl-quantized Hamiltonian in two dimensions.

Closed forms cover quadratic potentials (normal modes, Fock-Darwin); any
polynomial V of degree <= 4 goes through a Galerkin solve in a tensor
harmonic-oscillator basis with exact ladder-operator matrix elements.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from .model import HamiltonianSpec, SpecError, normal_modes

CONVERGENCE_RTOL = 1e-8
DEGENERACY_GAP = 1e-9  # in units of hbar


class TruncationError(RuntimeError):
    """Requested levels not converged in the chosen basis."""


@dataclass(frozen=True, eq=False)
class SpectralResult:
    energies: np.ndarray
    dE_dkappa: np.ndarray | None
    hbar: float
    kappa: float
    basis_per_axis: int | None = None
    change: np.ndarray | None = None
    converged: np.ndarray | None = None
    d2E_dkappa2: np.ndarray | None = None
    method: str = "closed-form"
    vectors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        if E.size and np.any(np.diff(E) < 0):
            raise ValueError("energies must be sorted ascending")
        object.__setattr__(self, "energies", E)

    def __len__(self) -> int:
        return self.energies.size

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "E", "dE_dkappa", "converged"])
            for j, e in enumerate(self.energies):
                d = "" if self.dE_dkappa is None else repr(float(self.dE_dkappa[j]))
                c = True if self.converged is None else bool(self.converged[j])
                w.writerow([j, repr(float(e)), d, int(c)])


# -- closed forms -----------------------------------------------------------------
def _enumerate_levels(freqs, e_max):
    """All occupation tuples with sum_i w_i (n_i + 1/2) <= e_max (energies in hbar units)."""
    freqs = np.asarray(freqs, dtype=float)
    zero = 0.5 * freqs.sum()
    budget = e_max - zero
    if budget < 0:
        return np.zeros((0, freqs.size), dtype=np.int64)
    grids = [np.zeros((1, 0), dtype=np.int64)]
    rem = [np.array([budget])]
    for w in freqs:
        new_g, new_r = [], []
        for g, r in zip(grids, rem):
            kmax = np.floor(r / w + 1e-12).astype(np.int64)
            for row, rr, km in zip(g, r, kmax):
                ks = np.arange(km + 1)
                new_g.append(np.column_stack([np.repeat(row[None, :], ks.size, 0), ks]))
                new_r.append(rr - ks * w)
        grids = [np.concatenate(new_g)]
        rem = [np.concatenate(new_r)]
    return grids[0]


def _mode_spectrum(freqs, dfreqs, d2freqs, offset, hbar, kappa, count=None, e_max=None,
                   method="closed-form"):
    freqs = np.asarray(freqs, dtype=float)
    if e_max is None:
        if count is None:
            raise ValueError("give count or e_max")
        # grow the window until it holds `count` levels
        span = hbar * freqs.max() * max(2.0, math.sqrt(count))
        while True:
            occ = _enumerate_levels(freqs, (span) / hbar)
            if occ.shape[0] >= count:
                break
            span *= 1.5
    else:
        occ = _enumerate_levels(freqs, (e_max - offset) / hbar)
    half = occ + 0.5
    E = offset + hbar * half @ freqs
    d1 = hbar * half @ np.asarray(dfreqs, dtype=float)
    d2 = hbar * half @ np.asarray(d2freqs, dtype=float)
    order = np.lexsort((occ[:, 0], E)) if occ.shape[0] else np.zeros(0, dtype=int)
    E, d1, d2 = E[order], d1[order], d2[order]
    if count is not None:
        E, d1, d2 = E[:count], d1[:count], d2[:count]
    return SpectralResult(E, d1, hbar, kappa, d2E_dkappa2=d2, method=method)


def fock_darwin_spectrum(omega: float, kappa: float, hbar: float, count: int | None = None,
                         e_max: float | None = None, offset: float = 1.0) -> SpectralResult:
    """E = offset + hbar W+ (n+ + 1/2) + hbar W- (n- + 1/2), W+- = sqrt(w^2 + k^2/4) +- k/2."""
    if omega <= 0 or hbar <= 0:
        raise ValueError("omega and hbar must be positive")
    if count is not None and count < 1:
        raise ValueError("count must be >= 1")
    s = math.sqrt(omega * omega + 0.25 * kappa * kappa)
    freqs = [s + 0.5 * kappa, s - 0.5 * kappa]
    base = kappa / (4.0 * s)
    dfreqs = [base + 0.5, base - 0.5]
    c = omega * omega / (4.0 * s**3)
    return _mode_spectrum(freqs, dfreqs, [c, c], offset, hbar, kappa, count, e_max,
                          method="fock-darwin")


def _branch_data(spec, kappa):
    m = normal_modes(spec, kappa)
    return m.frequencies, m.dfreq_dkappa, m.vectors / np.linalg.norm(m.vectors, axis=0)


def _follow(ref, other):
    """Reorder `other`'s modes onto `ref`'s by eigenvector overlap."""
    _, perm = optimize.linear_sum_assignment(-np.abs(ref[2].conj().T @ other[2]))
    return tuple(a[..., perm] for a in other)


def mode_branches(spec: HamiltonianSpec, kappa: float, dk: float = 1e-3):
    """Normal-mode frequencies with first and second kappa-derivatives along smooth branches.

    Branches are followed through crossings (e.g. the isotropic case at
    kappa = 0) by matching mode vectors at kappa +- dk and kappa +- 2 dk,
    where they are non-degenerate. Derivatives use the analytic first
    derivatives at those points, Richardson-extrapolated over the two steps.
    """
    modes = normal_modes(spec, kappa)
    m1 = _branch_data(spec, kappa - dk)
    p1 = _follow(m1, _branch_data(spec, kappa + dk))
    m2 = _follow(m1, _branch_data(spec, kappa - 2 * dk))
    p2 = _follow(p1, _branch_data(spec, kappa + 2 * dk))
    d2 = (4 * (p1[1] - m1[1]) / (2 * dk) - (p2[1] - m2[1]) / (4 * dk)) / 3
    d1_avg = (4 * 0.5 * (p1[1] + m1[1]) - 0.5 * (p2[1] + m2[1])) / 3
    order = np.argsort(0.5 * (p1[0] + m1[0]), kind="stable")  # branch j sits at sorted position j
    d1_avg, d2 = d1_avg[order], d2[order]
    w = modes.frequencies
    degenerate = np.zeros(w.size, dtype=bool)
    if w.size > 1:
        close = np.abs(np.diff(w)) <= 1e-6 * max(1.0, float(w.max()))
        degenerate[:-1] |= close
        degenerate[1:] |= close
    d1 = np.where(degenerate, d1_avg, modes.dfreq_dkappa)
    return w, d1, d2, modes.energy_min


def quadratic_spectrum(spec: HamiltonianSpec, kappa: float, hbar: float, count: int | None = None,
                       e_max: float | None = None, dk: float = 1e-3) -> SpectralResult:
    """Exact levels of a quadratic spec from its normal modes."""
    w, d1, d2, e0 = mode_branches(spec, kappa, dk)
    return _mode_spectrum(w, d1, d2, e0, hbar, kappa, count, e_max, method="normal-modes")


# -- Galerkin ---------------------------------------------------------------------
def _ladder_ops(size: int, omega: float, hbar: float, extra: int = 4):
    """q^k (k <= 4), p^2 and sym(p q) on one axis, exact in the first `size` states."""
    m = size + extra
    a = np.diag(np.sqrt(np.arange(1, m, dtype=float)), 1)
    ad = a.T
    Q = math.sqrt(hbar / (2.0 * omega)) * (a + ad)
    P = 1j * math.sqrt(hbar * omega / 2.0) * (ad - a)
    qpow = [np.eye(m)]
    for _ in range(4):
        qpow.append(qpow[-1] @ Q)
    cut = slice(0, size)
    out = {"q": [_herm(X[cut, cut].astype(complex)).real for X in qpow]}
    out["p"] = _herm(P[cut, cut])
    out["p2"] = _herm((P @ P)[cut, cut]).real
    out["pq"] = _herm(0.5 * (P @ Q + Q @ P)[cut, cut])
    return out


def _herm(X):
    return 0.5 * (X + X.conj().T)


def _basis_frequencies(spec: HamiltonianSpec, kappa: float) -> np.ndarray:
    A = spec.gauge.matrix
    W = spec.potential.quadratic_matrix() + kappa**2 * A.T @ A
    d = np.diag(W)
    return np.where(d > 1e-12, np.sqrt(np.abs(d)), 1.0)


def _q_polynomial(spec: HamiltonianSpec, kappa: float) -> dict:
    """Coefficients of V(q) + kappa^2/2 |A q|^2 (constant included)."""
    coeffs = dict(spec.potential.coefficients)
    coeffs[(0, 0)] = coeffs.get((0, 0), 0.0) + spec.potential.offset
    G = spec.gauge.matrix.T @ spec.gauge.matrix
    for i in range(2):
        for j in range(2):
            alpha = [0, 0]
            alpha[i] += 1
            alpha[j] += 1
            coeffs[tuple(alpha)] = coeffs.get(tuple(alpha), 0.0) + 0.5 * kappa**2 * G[i, j]
    return coeffs


def _dq_polynomial(spec: HamiltonianSpec, kappa: float) -> dict:
    G = spec.gauge.matrix.T @ spec.gauge.matrix
    coeffs = {}
    for i in range(2):
        for j in range(2):
            alpha = [0, 0]
            alpha[i] += 1
            alpha[j] += 1
            coeffs[tuple(alpha)] = coeffs.get(tuple(alpha), 0.0) + kappa * G[i, j]
    return coeffs


def _poly_operator(coeffs, ops):
    N = ops[0]["q"][0].shape[0]
    out = np.zeros((N * N, N * N))
    for (a, b), c in coeffs.items():
        if c != 0.0:
            out += c * np.kron(ops[0]["q"][a], ops[1]["q"][b])
    return out


def _cross_operator(A, ops):
    """sum_jk A_jk sym(p_j q_k) on the tensor basis."""
    N = ops[0]["q"][0].shape[0]
    eye = np.eye(N)
    out = np.zeros((N * N, N * N), dtype=complex)
    for j in range(2):
        for k in range(2):
            if A[j, k] == 0.0:
                continue
            if j == k:
                term = np.kron(ops[0]["pq"], eye) if j == 0 else np.kron(eye, ops[1]["pq"])
            elif j == 0:
                term = np.kron(ops[0]["p"], ops[1]["q"][1])
            else:
                term = np.kron(ops[0]["q"][1], ops[1]["p"])
            out += A[j, k] * term
    return out


def assemble(spec: HamiltonianSpec, kappa: float, hbar: float, basis_per_axis: int,
             frequencies=None):
    """Return (H, dH/dkappa) in the tensor oscillator basis, index n1*N + n2."""
    if spec.n != 2:
        raise SpecError("the quantum solver is two-dimensional")
    if basis_per_axis < 8:
        raise ValueError("basis_per_axis must be >= 8")
    N = basis_per_axis
    w = _basis_frequencies(spec, kappa) if frequencies is None else np.asarray(frequencies)
    ops = [_ladder_ops(N, float(w[i]), hbar) for i in range(2)]
    eye = np.eye(N)
    H = 0.5 * (np.kron(ops[0]["p2"], eye) + np.kron(eye, ops[1]["p2"]))
    H = H + _poly_operator(_q_polynomial(spec, kappa), ops)
    dH = _poly_operator(_dq_polynomial(spec, kappa), ops)
    A = spec.gauge.matrix
    if np.any(A != 0.0):
        cross = _cross_operator(A, ops)
        H = H - kappa * cross
        dH = dH - cross
    if not (np.array_equal(H, H.conj().T) and np.array_equal(dH, dH.conj().T)):
        raise AssertionError("assembled matrix is not exactly Hermitian")
    return H, dH


def _parity_blocks(spec: HamiltonianSpec, N: int):
    """Index sets of conserved total parity, or one block if V breaks it."""
    if all(sum(a) % 2 == 0 for a in spec.potential.coefficients):
        n1, n2 = np.divmod(np.arange(N * N), N)
        par = (n1 + n2) % 2
        return [np.nonzero(par == 0)[0], np.nonzero(par == 1)[0]]
    return [np.arange(N * N)]


def _diagonalize(H, blocks, n_keep, vectors: bool):
    vals, vecs, where = [], [], []
    for idx in blocks:
        Hb = H[np.ix_(idx, idx)]
        k = min(n_keep, idx.size)
        if vectors:
            e, v = linalg.eigh(Hb, subset_by_index=[0, k - 1], driver="evr")
            vecs.append(v)
        else:
            e = linalg.eigh(Hb, eigvals_only=True, subset_by_index=[0, k - 1], driver="evr")
        vals.append(e)
        where.append(idx)
    E = np.concatenate(vals)
    order = np.argsort(E, kind="stable")
    return E, order, vecs, where


def _levels_only(spec, kappa, hbar, N, n_keep, frequencies):
    H, _ = assemble(spec, kappa, hbar, N, frequencies)
    E, order, _, _ = _diagonalize(H, _parity_blocks(spec, N), n_keep, False)
    return E[order]


def assemble_and_diagonalize(spec: HamiltonianSpec, kappa: float, hbar: float, basis_per_axis: int,
                             n_levels: int | None = None, derivatives: bool = True,
                             require: int | None = None) -> SpectralResult:
    """Galerkin spectrum with convergence flags from a basis_per_axis - 4 comparison.

    `require` levels must all be converged, else TruncationError.
    """
    N = basis_per_axis
    if N < 12:
        raise ValueError("basis_per_axis must be >= 12 (convergence compares against N - 4)")
    n_keep = n_levels if n_levels is not None else (N - 4) ** 2 // 2
    n_keep = min(n_keep, (N - 4) ** 2)
    freqs = _basis_frequencies(spec, kappa)
    H, dH = assemble(spec, kappa, hbar, N, freqs)
    blocks = _parity_blocks(spec, N)
    E, order, vecs, where = _diagonalize(H, blocks, n_keep, derivatives)
    E_small = _levels_only(spec, kappa, hbar, N - 4, n_keep, freqs)
    E = E[order][:n_keep]
    m = min(E.size, E_small.size)
    change = np.full(E.size, np.inf)
    change[:m] = np.abs(E_small[:m] - E[:m]) / np.maximum(np.abs(E[:m]), 1e-300)
    converged = change <= CONVERGENCE_RTOL
    dE = None
    full_vecs = None
    if derivatives:
        dim = H.shape[0]
        cols = []
        for idx, v in zip(where, vecs):
            Vb = np.zeros((dim, v.shape[1]), dtype=v.dtype)
            Vb[idx] = v
            cols.append(Vb)
        full_vecs = np.concatenate(cols, axis=1)[:, order][:, :n_keep]
        dE = _hellmann_feynman(E, full_vecs, dH, hbar)
    if require is not None and (E.size < require or not np.all(converged[:require])):
        bad = int(np.argmin(converged[:require])) if E.size >= require else E.size
        raise TruncationError(
            f"level {bad} not converged with basis {N}/axis (change {change[min(bad, E.size - 1)]:.2e})"
        )
    return SpectralResult(E, dE, hbar, kappa, N, change, converged, method="galerkin",
                          vectors=full_vecs)


def _hellmann_feynman(E, V, dH, hbar):
    """<psi|dH|psi>, diagonalizing dH inside clusters of near-degenerate levels."""
    dE = np.empty(E.size)
    gap = DEGENERACY_GAP * hbar
    start = 0
    while start < E.size:
        stop = start + 1
        while stop < E.size and E[stop] - E[stop - 1] < gap:
            stop += 1
        Vc = V[:, start:stop]
        block = Vc.conj().T @ dH @ Vc
        block = 0.5 * (block + block.conj().T)
        dE[start:stop] = np.linalg.eigvalsh(block) if stop - start > 1 else block.real.ravel()
        start = stop
    return dE


def kappa_derivatives(spec: HamiltonianSpec, kappa: float, hbar: float,
                      spectrum: SpectralResult) -> np.ndarray:
    """Hellmann-Feynman slopes for a Galerkin spectrum that kept its vectors."""
    if spectrum.vectors is None or spectrum.basis_per_axis is None:
        raise ValueError("spectrum has no eigenvectors; diagonalize with derivatives=True")
    if spectrum.converged is not None and not np.all(spectrum.converged):
        raise TruncationError("kappa derivatives need a converged spectrum")
    _, dH = assemble(spec, kappa, hbar, spectrum.basis_per_axis, _basis_frequencies(spec, kappa))
    return _hellmann_feynman(spectrum.energies, spectrum.vectors, dH, hbar)


def spectrum_for(spec: HamiltonianSpec, kappa: float, hbar: float, e_max: float,
                 basis_per_axis: int | None = None) -> SpectralResult:
    """Levels up to e_max: closed form for quadratic specs, Galerkin otherwise."""
    if spec.is_quadratic:
        return quadratic_spectrum(spec, kappa, hbar, e_max=e_max)
    N = basis_per_axis or 48
    res = assemble_and_diagonalize(spec, kappa, hbar, N)
    keep = res.energies <= e_max
    if not np.all(res.converged[keep]) or keep.all():
        raise TruncationError(f"basis {N}/axis does not converge all levels up to E = {e_max:.6g}")
    n = int(keep.sum()) + 1  # one level beyond e_max shows the cutoff was reached
    return SpectralResult(res.energies[:n], res.dE_dkappa[:n], hbar, kappa, N, res.change[:n],
                          res.converged[:n], method="galerkin")
