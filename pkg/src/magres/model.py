"""Phase-space Hamiltonians H_k(q, p) = 1/2 |p - k a(q)|^2 + V(q).

V is a polynomial of total degree <= 4 and a(q) = A q is a linear gauge.
Phase points are flat arrays x = (q_1..q_n, p_1..p_n); every evaluator
broadcasts over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import linalg, optimize

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

MAX_DEGREE = 4
V_FLOOR = 1.0


class SpecError(ValueError):
    """Invalid Hamiltonian description."""


def symplectic_form(n: int) -> np.ndarray:
    """Standard J = [[0, I], [-I, 0]] acting on (q, p)."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def _parse_exponent(key) -> tuple[int, ...]:
    if isinstance(key, str):
        parts = [s for s in key.replace("(", "").replace(")", "").split(",") if s.strip()]
        return tuple(int(s) for s in parts)
    return tuple(int(k) for k in key)


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Polynomial potential V(q) = offset + sum_alpha c_alpha q^alpha."""

    dimension: int
    coefficients: Mapping[tuple[int, ...], float]
    offset: float = 0.0
    # amount added to the offset by `raised_to_floor`, kept for reporting
    offset_raise: float = 0.0

    def __post_init__(self):
        if self.dimension < 1:
            raise SpecError("dimension must be a positive integer")
        clean = {}
        for key, c in dict(self.coefficients).items():
            alpha = _parse_exponent(key)
            if len(alpha) != self.dimension:
                raise SpecError(f"exponent {key!r} does not match dimension {self.dimension}")
            if any(a < 0 for a in alpha):
                raise SpecError(f"negative exponent in {key!r}")
            if sum(alpha) > MAX_DEGREE:
                raise SpecError(f"monomial {key!r} exceeds total degree {MAX_DEGREE}")
            c = float(c)
            if not math.isfinite(c):
                raise SpecError(f"non-finite coefficient for {key!r}")
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        object.__setattr__(self, "coefficients", dict(sorted(clean.items())))
        self._check_confinement()

    # -- structure -----------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coefficients), default=0)

    @property
    def is_quadratic(self) -> bool:
        return self.degree <= 2

    def homogeneous_part(self, k: int) -> dict[tuple[int, ...], float]:
        return {a: c for a, c in self.coefficients.items() if sum(a) == k}

    def quadratic_matrix(self) -> np.ndarray:
        """Symmetric W with degree-2 part = 1/2 q^T W q."""
        n = self.dimension
        W = np.zeros((n, n))
        for a, c in self.homogeneous_part(2).items():
            idx = [i for i, e in enumerate(a) for _ in range(e)]
            i, j = idx
            if i == j:
                W[i, i] += 2.0 * c
            else:
                W[i, j] += c
                W[j, i] += c
        return W

    def linear_vector(self) -> np.ndarray:
        b = np.zeros(self.dimension)
        for a, c in self.homogeneous_part(1).items():
            b[a.index(1)] += c
        return b

    def _check_confinement(self):
        n = self.dimension
        deg = self.degree
        if deg == 4:
            quartic = self.homogeneous_part(4)
            rng = np.random.default_rng(12345)
            u = rng.standard_normal((4000, n))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            vals = _eval_monomials(quartic, u)
            worst = u[np.argmin(vals)]
            res = optimize.minimize(
                lambda v: _eval_monomials(quartic, (v / np.linalg.norm(v))[None])[0], worst
            )
            if min(vals.min(), res.fun) <= 0.0:
                raise SpecError("quartic part of V is not positive definite (no confinement)")
        elif deg == 2:
            if np.linalg.eigvalsh(self.quadratic_matrix()).min() <= 0.0:
                raise SpecError("quadratic part of V is not positive definite (no confinement)")
        else:
            raise SpecError(f"V of degree {deg} is not confining; need leading degree 2 or 4")

    # -- evaluation ----------------------------------------------------------
    def value(self, q, check: bool = True) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        v = self.offset + _eval_monomials(self.coefficients, q)
        if check and np.any(v < V_FLOOR - 1e-9 * np.maximum(1.0, np.abs(v))):
            raise SpecError(f"V(q) = {np.min(v):.6g} below floor {V_FLOOR}; raise the offset")
        return v

    @cached_property
    def _tables(self):
        """Exponent matrix and coefficient arrays for V, grad V and Hess V."""
        n = self.dimension
        E = np.array(list(self.coefficients), dtype=int).reshape(-1, n)
        c = np.array(list(self.coefficients.values()), dtype=float)
        grad = []
        for i in range(n):
            ci = c * E[:, i]
            Ei = E.copy()
            Ei[:, i] = np.maximum(Ei[:, i] - 1, 0)
            grad.append((Ei, ci))
        hess = {}
        for i in range(n):
            Ei, ci = grad[i]
            for j in range(i, n):
                cij = ci * Ei[:, j]
                Eij = Ei.copy()
                Eij[:, j] = np.maximum(Eij[:, j] - 1, 0)
                hess[i, j] = (Eij, cij)
        return grad, hess

    @staticmethod
    def _poly(E, c, q):
        if c.size == 0:
            return np.zeros(q.shape[:-1])
        return np.prod(q[..., None, :] ** E, axis=-1) @ c

    def gradient(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        grad, _ = self._tables
        return np.stack([self._poly(E, c, q) for E, c in grad], axis=-1)

    def hessian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        n = self.dimension
        _, hess = self._tables
        out = np.empty(q.shape + (n,))
        for (i, j), (E, c) in hess.items():
            out[..., i, j] = self._poly(E, c, q)
            out[..., j, i] = out[..., i, j]
        return out

    def laplacian(self, q) -> np.ndarray:
        return np.trace(self.hessian(q), axis1=-2, axis2=-1)

    # -- minimum -------------------------------------------------------------
    @cached_property
    def minimizer(self) -> np.ndarray:
        """Global minimizer of V (closed form when quadratic, multistart otherwise)."""
        if self.is_quadratic:
            return np.linalg.solve(self.quadratic_matrix(), -self.linear_vector())
        best = None
        rng = np.random.default_rng(2024)
        starts = [np.zeros(self.dimension)] + list(rng.uniform(-3, 3, (24, self.dimension)))
        for s in starts:
            r = optimize.minimize(
                lambda q: self.value(q, check=False), s, jac=self.gradient, method="BFGS",
                options={"gtol": 1e-12},
            )
            if best is None or r.fun < best.fun:
                best = r
        return np.asarray(best.x)

    @property
    def min_value(self) -> float:
        return float(self.value(self.minimizer, check=False))

    def critical_values(self, n_starts: int = 48, seed: int = 7) -> np.ndarray:
        """Distinct critical values of V (critical points of H are (q*, k a(q*)))."""
        if self.is_quadratic:
            return np.array([self.min_value])
        rng = np.random.default_rng(seed)
        vals = []
        scale = 2.0
        for s in rng.uniform(-scale, scale, (n_starts, self.dimension)):
            r = optimize.root(self.gradient, s, jac=self.hessian, tol=1e-13)
            if r.success and np.linalg.norm(self.gradient(r.x)) < 1e-9:
                vals.append(float(self.value(r.x, check=False)))
        vals.append(self.min_value)
        vals = np.sort(np.asarray(vals))
        keep = np.concatenate([[True], np.diff(vals) > 1e-9 * np.maximum(1.0, np.abs(vals[1:]))])
        return vals[keep]

    def raised_to_floor(self, floor: float = V_FLOOR) -> "PotentialModel":
        """Copy with the offset raised so that min V >= floor (no-op if already)."""
        vmin = self.min_value
        if vmin >= floor:
            return self
        shift = floor - vmin
        return PotentialModel(
            self.dimension, self.coefficients, self.offset + shift, self.offset_raise + shift
        )


def _monomial(alpha: tuple[int, ...], q: np.ndarray) -> np.ndarray:
    out = np.ones(q.shape[:-1])
    for i, e in enumerate(alpha):
        if e:
            out = out * q[..., i] ** e
    return out


def _eval_monomials(coeffs: Mapping[tuple[int, ...], float], q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-1])
    for a, c in coeffs.items():
        out = out + c * _monomial(a, q)
    return out


@dataclass(frozen=True, eq=False)
class GaugeField:
    """Linear vector potential a(q) = A q."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SpecError("gauge matrix must be square")
        if not np.all(np.isfinite(A)):
            raise SpecError("gauge matrix has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def symmetric(cls, field: float = 1.0) -> "GaugeField":
        """a = field/2 (-q2, q1), so B_12 = -field."""
        return cls(0.5 * field * np.array([[0.0, -1.0], [1.0, 0.0]]))

    @classmethod
    def landau(cls, field: float = 1.0) -> "GaugeField":
        """a = field (-q2, 0), same B as `symmetric(field)`."""
        return cls(field * np.array([[0.0, -1.0], [0.0, 0.0]]))

    @classmethod
    def zero(cls, n: int = 2) -> "GaugeField":
        return cls(np.zeros((n, n)))

    def __call__(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float) @ self.matrix.T

    @property
    def field_tensor(self) -> np.ndarray:
        """B_jk = d a_j/d q_k - d a_k/d q_j."""
        return self.matrix - self.matrix.T

    @property
    def norm_squared(self) -> float:
        B = self.field_tensor
        return float(np.sum(np.triu(B, 1) ** 2))


@dataclass(frozen=True, eq=False)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise SpecError("q and p must have the same dimension")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    potential: PotentialModel
    gauge: GaugeField
    name: str = ""

    def __post_init__(self):
        if self.gauge.dimension != self.potential.dimension:
            raise SpecError(
                f"gauge dimension {self.gauge.dimension} != potential dimension "
                f"{self.potential.dimension}"
            )
        # min V >= 1 is part of the model; the raise is kept in potential.offset_raise
        object.__setattr__(self, "potential", self.potential.raised_to_floor())

    @property
    def n(self) -> int:
        return self.potential.dimension

    @property
    def is_quadratic(self) -> bool:
        return self.potential.is_quadratic

    @cached_property
    def J(self) -> np.ndarray:
        return symplectic_form(self.n)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2 * self.n:
            raise SpecError(f"phase point has length {x.shape[-1]}, expected {2 * self.n}")
        return x[..., : self.n], x[..., self.n :]

    def kinetic_momentum(self, kappa, x):
        q, p = self._split(x)
        return p - kappa * self.gauge(q)

    def hamiltonian(self, kappa: float, x) -> np.ndarray:
        q, p = self._split(x)
        v = p - kappa * self.gauge(q)
        return 0.5 * np.sum(v * v, axis=-1) + self.potential.value(q)

    def gradient(self, kappa: float, x) -> np.ndarray:
        q, p = self._split(x)
        A = self.gauge.matrix
        v = p - kappa * self.gauge(q)
        gq = -kappa * v @ A + self.potential.gradient(q)
        return np.concatenate([gq, v], axis=-1)

    def hessian(self, kappa: float, x) -> np.ndarray:
        q, _ = self._split(x)
        n = self.n
        A = self.gauge.matrix
        Hv = self.potential.hessian(q)
        out = np.zeros(q.shape[:-1] + (2 * n, 2 * n))
        out[..., :n, :n] = Hv + kappa**2 * (A.T @ A)
        out[..., :n, n:] = -kappa * A.T
        out[..., n:, :n] = -kappa * A
        out[..., n:, n:] = np.eye(n)
        return out

    def kappa_derivative(self, kappa: float, x) -> np.ndarray:
        q, p = self._split(x)
        a = self.gauge(q)
        return -np.sum((p - kappa * a) * a, axis=-1)

    def vector_field(self, kappa: float, x) -> np.ndarray:
        return self.gradient(kappa, x) @ self.J.T

    def magnetic_norm_squared(self, q=None) -> float:
        return self.gauge.norm_squared

    def self_test(self, n_points: int = 100, seed: int = 0, step: float = 1e-5,
                  rtol: float = 1e-6, kappa: float = 0.7) -> dict:
        """Central-difference check of gradient, Hessian and d/dkappa."""
        rng = np.random.default_rng(seed)
        n2 = 2 * self.n
        xs = rng.uniform(-1.5, 1.5, (n_points, n2))
        worst = {"gradient": 0.0, "hessian": 0.0, "kappa": 0.0}
        for x in xs:
            g = self.gradient(kappa, x)
            Hs = self.hessian(kappa, x)
            fd_g = np.empty(n2)
            fd_H = np.empty((n2, n2))
            for i in range(n2):
                e = np.zeros(n2)
                e[i] = step
                fd_g[i] = (self.hamiltonian(kappa, x + e) - self.hamiltonian(kappa, x - e)) / (2 * step)
                fd_H[:, i] = (self.gradient(kappa, x + e) - self.gradient(kappa, x - e)) / (2 * step)
            fd_k = (self.hamiltonian(kappa + step, x) - self.hamiltonian(kappa - step, x)) / (2 * step)
            scale_g = max(1.0, np.abs(g).max())
            scale_H = max(1.0, np.abs(Hs).max())
            worst["gradient"] = max(worst["gradient"], np.abs(g - fd_g).max() / scale_g)
            worst["hessian"] = max(worst["hessian"], np.abs(Hs - fd_H).max() / scale_H)
            dk = self.kappa_derivative(kappa, x)
            worst["kappa"] = max(worst["kappa"], abs(dk - fd_k) / max(1.0, abs(dk)))
        bad = {k: v for k, v in worst.items() if v > rtol}
        if bad:
            raise SpecError(f"finite-difference self-test failed: {bad}")
        return worst

    # -- quadratic structure ---------------------------------------------------
    def minimum(self, kappa: float) -> np.ndarray:
        """Phase point of minimal energy, (q*, k a(q*))."""
        q = self.potential.minimizer
        return np.concatenate([q, kappa * self.gauge(q)])

    @property
    def energy_minimum(self) -> float:
        return self.potential.min_value

    def critical_values(self) -> np.ndarray:
        return self.potential.critical_values()

    def kappa_hessian_derivative(self, kappa: float) -> np.ndarray:
        n = self.n
        A = self.gauge.matrix
        return np.block([[2 * kappa * A.T @ A, -A.T], [-A, np.zeros((n, n))]])


@dataclass(frozen=True)
class NormalModes:
    frequencies: np.ndarray
    dfreq_dkappa: np.ndarray
    vectors: np.ndarray  # columns v_k with J K v_k = i w_k v_k
    x_min: np.ndarray
    energy_min: float
    hessian: np.ndarray = field(repr=False)


def normal_modes(spec: HamiltonianSpec, kappa: float) -> NormalModes:
    """Normal-mode frequencies of a quadratic spec, ascending, with d/dkappa."""
    if not spec.is_quadratic:
        raise SpecError("normal modes require a quadratic potential")
    x0 = spec.minimum(kappa)
    K = spec.hessian(kappa, x0)
    JK = spec.J @ K
    lam, vl, vr = linalg.eig(JK, left=True, right=True)
    pos = lam.imag > 0
    lam, vl, vr = lam[pos], vl[:, pos], vr[:, pos]
    order = np.argsort(lam.imag)
    lam, vl, vr = lam[order], vl[:, order], vr[:, order]
    w = lam.imag
    dK = spec.J @ spec.kappa_hessian_derivative(kappa)
    dw = np.empty_like(w)
    for k in range(w.size):
        gap = np.min(np.abs(np.delete(w, k) - w[k])) if w.size > 1 else np.inf
        if gap > 1e-7 * max(1.0, w[k]):
            u, v = vl[:, k], vr[:, k]
            dw[k] = (np.conj(u) @ dK @ v / (np.conj(u) @ v)).imag
        else:
            h = 1e-6
            wp = _sorted_freqs(spec, kappa + h)
            wm = _sorted_freqs(spec, kappa - h)
            dw[k] = (wp[k] - wm[k]) / (2 * h)
    return NormalModes(w, dw, vr, x0, float(spec.hamiltonian(kappa, x0)), K)


def _sorted_freqs(spec, kappa):
    x0 = spec.minimum(kappa)
    lam = np.linalg.eigvals(spec.J @ spec.hessian(kappa, x0))
    return np.sort(lam.imag[lam.imag > 0])


# -- module-level operations ------------------------------------------------------
def _as_array(spec: HamiltonianSpec, x) -> np.ndarray:
    if isinstance(x, PhasePoint):
        x = x.x
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2 * spec.n:
        raise SpecError(f"phase point of length {x.shape[-1]} for dimension {spec.n}")
    return x


def eval_hamiltonian(spec: HamiltonianSpec, kappa: float, x) -> np.ndarray | float:
    out = spec.hamiltonian(kappa, _as_array(spec, x))
    return float(out) if np.ndim(out) == 0 else out


def eval_kappa_derivative(spec: HamiltonianSpec, kappa: float, x) -> np.ndarray | float:
    out = spec.kappa_derivative(kappa, _as_array(spec, x))
    return float(out) if np.ndim(out) == 0 else out


def magnetic_norm_squared(spec: HamiltonianSpec, q=None) -> float:
    return spec.gauge.norm_squared


# -- constructors --------------------------------------------------------------
def quadratic_spec(omegas, gauge: GaugeField | None = None, floor: float = V_FLOOR,
                   name: str = "") -> HamiltonianSpec:
    """V = floor + 1/2 sum w_i^2 q_i^2."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = omegas.size
    coeffs = {}
    for i, w in enumerate(omegas):
        alpha = [0] * n
        alpha[i] = 2
        coeffs[tuple(alpha)] = 0.5 * w * w
    gauge = gauge if gauge is not None else GaugeField.zero(n)
    return HamiltonianSpec(PotentialModel(n, coeffs, floor), gauge, name)


def isotropic_benchmark(omega: float = 1.0, field: float = 1.0) -> HamiltonianSpec:
    """V = 1 + omega^2 |q|^2 / 2 with the symmetric gauge of unit field."""
    return quadratic_spec([omega, omega], GaugeField.symmetric(field), name="isotropic")


# -- serialization -------------------------------------------------------------
def spec_from_dict(data: Mapping) -> HamiltonianSpec:
    if "potential" not in data:
        raise SpecError("missing [potential] section")
    pot = data["potential"]
    if "coefficients" not in pot:
        raise SpecError("missing [potential.coefficients] table")
    coeffs = {_parse_exponent(k): v for k, v in pot["coefficients"].items()}
    n = int(pot.get("dimension", len(next(iter(coeffs))) if coeffs else 0))
    model = PotentialModel(n, coeffs, float(pot.get("offset", 0.0)))
    if pot.get("auto_offset", True):
        model = model.raised_to_floor()
    g = data.get("gauge", {})
    if "matrix" in g:
        gauge = GaugeField(np.asarray(g["matrix"], dtype=float))
    else:
        kind = g.get("kind", "zero")
        strength = float(g.get("field", 1.0))
        if kind == "symmetric":
            gauge = GaugeField.symmetric(strength)
        elif kind == "landau":
            gauge = GaugeField.landau(strength)
        elif kind == "zero":
            gauge = GaugeField.zero(n)
        else:
            raise SpecError(f"unknown gauge kind {kind!r}")
    return HamiltonianSpec(model, gauge, str(data.get("name", "")))


def load_spec(source) -> HamiltonianSpec:
    """Parse a spec from a TOML path, TOML text, or an already parsed mapping."""
    if isinstance(source, Mapping):
        return spec_from_dict(source)
    path = Path(source) if not isinstance(source, str) or "\n" not in source else None
    text = path.read_text() if path is not None else source
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"TOML parse error: {exc}") from exc
    return spec_from_dict(data)


def dump_spec(spec: HamiltonianSpec) -> str:
    pot = spec.potential
    lines = ["[potential]", f"dimension = {pot.dimension}", f"offset = {pot.offset!r}",
             "auto_offset = false", "", "[potential.coefficients]"]
    for a, c in pot.coefficients.items():
        lines.append(f'"{",".join(map(str, a))}" = {c!r}')
    lines += ["", "[gauge]"]
    rows = ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in spec.gauge.matrix)
    lines.append(f"matrix = [{rows}]")
    return "\n".join(lines) + "\n"
