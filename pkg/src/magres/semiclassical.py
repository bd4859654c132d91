"""Semiclassical predictions: mean hbar-expansion of Omega, Landau term, orbit sums.

Conventions match `thermo`: Omega = sum F_beta(E_j - mu), M = dOmega/dkappa,
chi = d^2 Omega/dkappa^2, h = 2 pi hbar, one state per level (no spin).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .classical import VolumeEstimate, liouville_surface_integral, q_bounding_box, _run_shards
from .model import HamiltonianSpec, normal_modes
from .thermo import (ThermoState, annular_cutoff, damping_factor, guard_regime, regime_classify,
                     RegimeError, RegimeTag)

__all__ = [
    "ExpansionTerm", "weyl_omega", "correction_omega", "landau_susceptibility", "mean_magnetization",
    "oscillating_magnetization", "oscillating_susceptibility", "regime_classify", "OrbitSum",
    "LANDAU_COEFFICIENT", "SPINLESS_LANDAU_COEFFICIENT", "CORRECTION_CONSTANT",
    "calibrate_correction_constant", "RegimeError", "RegimeTag",
]

# chi_L = c int_{H = mu} |B|^2 d(sigma) for n = 2, in two normalizations:
LANDAU_COEFFICIENT = -1.0 / (24.0 * math.pi**2)  # spin-degenerate, chi = -d^2 Omega/dkappa^2
SPINLESS_LANDAU_COEFFICIENT = 1.0 / (48.0 * math.pi**2)  # one state per level, chi = +d^2 Omega/dkappa^2


def calibrate_correction_constant(landau_coefficient: float = SPINLESS_LANDAU_COEFFICIENT) -> float:
    """Constant C in C hbar^2 h^-n int F''(H - mu)(kappa^2 |B|^2 + Lap V), fixed by the Landau limit.

    As beta -> oo, F'' -> -delta, so d^2/dkappa^2 of the kappa^2 part at n = 2
    is -2 C / (4 pi^2) int_{H = mu} |B|^2 d(sigma); matching c_L gives C.
    """
    return -2.0 * math.pi**2 * landau_coefficient


CORRECTION_CONSTANT = calibrate_correction_constant()  # = -1/24


@dataclass(frozen=True)
class ExpansionTerm:
    """coefficient * hbar^power, with a one-sigma error on the coefficient."""

    power: int
    coefficient: float
    error: float
    tag: str  # "Omega00" | "Omega22-group" | "Landau" | "higher"
    method: str = "closed-form"

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError(f"non-finite coefficient in {self.tag} term")

    def evaluate(self, hbar: float) -> float:
        return self.coefficient * hbar**self.power

    def evaluate_error(self, hbar: float) -> float:
        return self.error * hbar**self.power


def series_value(terms, hbar: float) -> tuple[float, float]:
    powers = [t.power for t in terms]
    if any(b <= a for a, b in zip(powers, powers[1:])):
        raise ValueError("series powers must be strictly increasing")
    return (math.fsum(t.evaluate(hbar) for t in terms),
            math.sqrt(math.fsum(t.evaluate_error(hbar) ** 2 for t in terms)))


# -- polylogarithms on the negative axis ---------------------------------------------
def neg_polylog(s: float, eta):
    """Li_s(-e^eta), real, vectorized. Closed forms for s in {0, 1, 2}; mpmath otherwise."""
    eta = np.asarray(eta, dtype=float)
    if s == 0:
        return -special.expit(eta)
    if s == 1:
        return -np.logaddexp(0.0, eta)
    if s == 2:
        out = np.empty_like(eta)
        small = eta <= math.log(0.5)
        z = np.exp(eta[small])
        k = np.arange(1, 64)
        # power series; spence(1 + z) loses z to rounding when z is tiny
        out[small] = ((-z[:, None]) ** k / (k * k)).sum(axis=1)
        lo = (eta <= 0) & ~small
        out[lo] = special.spence(1.0 + np.exp(eta[lo]))
        e = eta[eta > 0]
        # inversion: Li2(-e^x) = -pi^2/6 - x^2/2 - Li2(-e^-x)
        out[eta > 0] = -math.pi**2 / 6 - 0.5 * e * e - special.spence(1.0 + np.exp(-e))
        return out
    import mpmath

    f = np.vectorize(lambda v: float(mpmath.polylog(s, -mpmath.exp(v))))
    return f(eta) if eta.ndim else float(f(eta))


def _momentum_F(n, beta, c):
    """int d^n p F_beta(p^2/2 + c)."""
    return (2 * math.pi / beta) ** (n / 2) / beta * neg_polylog(n / 2 + 1, -beta * np.asarray(c))


def _momentum_F2(n, beta, c):
    """int d^n p F_beta''(p^2/2 + c)."""
    return beta * (2 * math.pi / beta) ** (n / 2) * neg_polylog(n / 2 - 1, -beta * np.asarray(c))


# -- q-space Monte Carlo over the thermally relevant box -----------------------------------
def _qfun_shard(args):
    spec, kappa, fn, _, seed, shard, count, lo, hi = args
    from .classical import _shard_rng

    rng = _shard_rng(seed, shard)
    q = lo + (hi - lo) * rng.random((count, spec.n))
    v = np.asarray(fn(q), dtype=float)
    return np.array([v.sum()]), np.array([(v * v).sum()])


def _q_integral(spec, fn, level, samples, seed, workers):
    lo, hi = q_bounding_box(spec, level)
    box = float(np.prod(hi - lo))
    mean, err = _run_shards(_qfun_shard, (spec, 0.0, fn, None, lo, hi), samples, seed, workers)
    return float(mean[0]) * box, float(err[0]) * box


def _thermal_level(spec, state):
    return state.mu + 40.0 / state.beta + 1e-9 * abs(state.mu)


def weyl_omega(spec: HamiltonianSpec, state: ThermoState, samples: int = 2_000_000, seed: int = 0,
               workers: int = 1, method: str = "auto", force: bool = False) -> ExpansionTerm:
    """h^-n int F_beta(H_kappa - mu) dq dp, as the hbar^-n term.

    The momentum integral is done in closed form (a polylogarithm in
    beta (mu - V)); the q integral is closed-form for quadratic V and Monte
    Carlo otherwise. kappa drops out by p -> p - kappa a(q).
    """
    guard_regime(state, ("expansion",), "weyl_omega", force)
    n = spec.n
    beta, mu = state.beta, state.mu
    if spec.is_quadratic and method in ("auto", "closed-form"):
        modes = normal_modes(spec, 0.0)
        c = (2 * math.pi) ** n / (math.factorial(n) * float(np.prod(modes.frequencies)))
        val = c * math.factorial(n) * beta ** (-n - 1) * float(neg_polylog(n + 1, beta * (mu - modes.energy_min)))
        err, how = 0.0, "closed-form"
    else:
        val, err = _q_integral(spec, lambda q: _momentum_F(n, beta, spec.potential.value(q, check=False) - mu),
                               _thermal_level(spec, state), samples, seed, workers)
        how = "monte-carlo"
    h_n = (2 * math.pi) ** n
    return ExpansionTerm(-n, val / h_n, err / h_n, "Omega00", how)


def correction_omega(spec: HamiltonianSpec, state: ThermoState, samples: int = 2_000_000, seed: int = 0,
                     workers: int = 1, method: str = "auto", constant: float = CORRECTION_CONSTANT,
                     force: bool = False) -> ExpansionTerm:
    """C hbar^2 h^-n int F''_beta(H - mu)(kappa^2 |B|^2 + Lap V) dq dp, as the hbar^(2-n) term."""
    guard_regime(state, ("expansion",), "correction_omega", force)
    n = spec.n
    beta, mu, kappa = state.beta, state.mu, state.kappa
    B2 = spec.magnetic_norm_squared()
    pot = spec.potential
    if pot.is_quadratic and method in ("auto", "closed-form"):
        # Lap V is constant; int d^n q g(V(q)) reduces to a radial integral in V - Vmin
        lap = float(np.trace(pot.quadratic_matrix()))
        det = float(np.linalg.det(pot.quadratic_matrix()))
        # int d^n q d^n p F''(p^2/2 + V - mu) = (2 pi)^n / sqrt(det W) int_0^oo u^(n-1)/(n-1)! F''(u + Vmin - mu) du
        val = _radial_F2(n, beta, mu - pot.min_value) * (2 * math.pi) ** n / math.sqrt(det) * (kappa**2 * B2 + lap)
        err, how = 0.0, "closed-form"
    else:
        def fn(q):
            v = pot.value(q, check=False)
            return _momentum_F2(n, beta, v - mu) * (kappa**2 * B2 + pot.laplacian(q))

        val, err = _q_integral(spec, fn, _thermal_level(spec, state), samples, seed, workers)
        how = "monte-carlo"
    scale = constant / (2 * math.pi) ** n
    return ExpansionTerm(2 - n, scale * val, abs(scale) * err, "Omega22-group", how)


def _radial_F2(n, beta, mu_eff):
    """int_0^oo u^(n-1)/(n-1)! F''_beta(u - mu_eff) du, integrating by parts."""
    if n == 1:
        return -float(special.expit(beta * mu_eff))
    k = n - 2
    return float(beta ** (-k - 1) * neg_polylog(k + 1, beta * mu_eff))


# -- Landau term and mean magnetization (n = 2) ---------------------------------------
def landau_susceptibility(spec: HamiltonianSpec, mu: float, coefficient: float = LANDAU_COEFFICIENT,
                          samples: int = 4_000_000, seed: int = 0, workers: int = 1) -> VolumeEstimate:
    """c int_{H_0 = mu} |B|^2 d(sigma) at kappa = 0 (default c = -1/(24 pi^2))."""
    if spec.n != 2:
        raise ValueError("Landau term is defined here for n = 2")
    B2 = spec.magnetic_norm_squared()
    if B2 == 0.0:
        return VolumeEstimate(0.0, 0.0, "closed-form")
    I = liouville_surface_integral(spec, 0.0, mu, B2, samples=samples, seed=seed, workers=workers)
    return VolumeEstimate(coefficient * I.value, abs(coefficient) * I.stderr, I.method)


def mean_magnetization(spec: HamiltonianSpec, state: ThermoState, coefficient: float = LANDAU_COEFFICIENT,
                       **kw) -> VolumeEstimate:
    """Leading mean magnetization kappa * chi_L (hbar^(2-n) = 1 for n = 2)."""
    if state.kappa == 0.0:
        return VolumeEstimate(0.0, 0.0, "closed-form")
    chi = landau_susceptibility(spec, state.mu, coefficient, **kw)
    return VolumeEstimate(state.kappa * chi.value, abs(state.kappa) * chi.stderr, chi.method)


# -- periodic-orbit sums ------------------------------------------------------------------
@dataclass
class OrbitSum:
    """Real output and the per-orbit complex terms it was summed from."""

    value: float
    terms: np.ndarray  # complex, one per listed orbit (partners not duplicated)
    table: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_csv(self, path):
        cols = ["T", "S", "maslov", "det_one_minus_P", "m", "damping_factor", "amplitude_Re", "amplitude_Im"]
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.table:
                w.writerow([repr(float(row[c])) if c != "maslov" else row[c] for c in cols])


def _orbit_terms(orbits, state, factor, force):
    state.require("tau", "tau0")
    warn = guard_regime(state, ("mesoscopic", "intermediate"), "orbit sum", force)
    orbits = sorted(orbits, key=lambda o: (o.primitive_period, o.action, o.repetitions, o.area))
    sigma, hbar = state.sigma, state.hbar
    terms, table = [], []
    for o in orbits:
        if o.degenerate:
            raise ValueError(f"degenerate orbit (T* = {o.primitive_period:.6g}) cannot enter the sum")
        T = o.period
        y = math.pi * T / sigma
        inv_sinh = float(damping_factor(T, sigma)) / y  # 1/sinh(pi T/sigma) without overflow
        amp = float(annular_cutoff(T, state.tau0, state.tau)) / math.sqrt(abs(o.det_one_minus_P))
        phase = np.exp(1j * (o.action / hbar + o.maslov * math.pi / 2))
        z = phase * amp * factor(o, sigma) * inv_sinh
        terms.append(z)
        table.append({"T": T, "S": o.action, "maslov": o.maslov, "det_one_minus_P": o.det_one_minus_P,
                      "m": o.moment, "damping_factor": inv_sinh, "amplitude_Re": z.real, "amplitude_Im": z.imag})
    return np.array(terms, dtype=complex), table, ([warn] if warn else [])


def oscillating_magnetization(orbits, state: ThermoState, force: bool = False) -> OrbitSum:
    """M_osc = Re sum over orbits and their time-reversed (t -> -t) partners.

    Each listed orbit carries e^{i(S/hbar + nu pi/2)} rho_{1,tau}(T) |det(1-P)|^(-1/2)
    (i m / 2 sigma)/sinh(pi T/sigma); its partner contributes the complex
    conjugate, so the real output is 2 Re of the listed sum.
    """
    terms, table, warn = _orbit_terms(orbits, state, lambda o, s: 1j * o.moment / (2 * s), force)
    return OrbitSum(float(2.0 * math.fsum(terms.real)), terms, table, warn)


def oscillating_susceptibility(orbits, state: ThermoState, hbar_rescaled: bool = False,
                               force: bool = False) -> OrbitSum:
    """chi_osc with the per-orbit factor r m^2 / 2 sigma (times 1/hbar when hbar_rescaled)."""
    scale = 1.0 / state.hbar if hbar_rescaled else 1.0
    terms, table, warn = _orbit_terms(
        orbits, state, lambda o, s: scale * o.repetitions * o.moment**2 / (2 * s), force)
    return OrbitSum(float(2.0 * math.fsum(terms.real)), terms, table, warn)
