"""Grand-canonical response of a discrete spectrum, and its time-smeared variants.

Scaled energies x = (E - mu)/hbar pair with the time variable t through
e^{itx}; sigma = beta*hbar is the thermal time. All smeared sums are built
from one primitive,

    S_W(x) = (1/pi) int_0^inf W(t) sin(tx)/t dt,

evaluated for a whole spectrum at once as (1/pi) int W(t) Im Z(t)/t dt with
Z(t) = sum_j w_j exp(i t x_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

TRUNCATION_MARGIN = 40.0  # levels needed up to mu + 40/beta
DEFAULT_EPSILON = 0.05
DEFAULT_SIGMA_MAX = 50.0


class RegimeError(RuntimeError):
    """Parameters outside the regime an operation is valid in."""


class SpectrumTooShortError(ValueError):
    def __init__(self, have: float, need: float):
        super().__init__(f"spectrum ends at E = {have:.6g}; need levels up to {need:.6g}")
        self.have = have
        self.need = need


# -- Fermi functions -------------------------------------------------------------
def fermi_F(beta: float, x):
    """F_beta(x) = -(1/beta) log(1 + e^{-beta x}), overflow safe."""
    x = np.asarray(x, dtype=float)
    bx = beta * x
    pos = bx >= 0
    out = np.where(
        pos,
        -np.log1p(np.exp(-np.where(pos, bx, 0.0))) / beta,
        x - np.log1p(np.exp(np.where(pos, 0.0, bx))) / beta,
    )
    return float(out) if out.ndim == 0 else out


def fermi_f(beta: float, x):
    """f_beta(x) = 1/(1 + e^{beta x}) = dF_beta/dx."""
    out = special.expit(-beta * np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def fermi_f_prime(beta: float, x):
    f = special.expit(-beta * np.asarray(x, dtype=float))
    out = -beta * f * (1.0 - f)
    return float(out) if np.ndim(out) == 0 else out


# -- regimes ---------------------------------------------------------------------
REGIMES = ("expansion", "mesoscopic", "intermediate", "zero-temperature")


@dataclass(frozen=True)
class RegimeTag:
    name: str
    margins: dict = field(default_factory=dict)

    def __str__(self) -> str:
        return self.name


def regime_classify(hbar: float, beta: float, epsilon: float = DEFAULT_EPSILON,
                    sigma_max: float = DEFAULT_SIGMA_MAX) -> RegimeTag:
    """Classify (hbar, beta) into the expansion / mesoscopic / intermediate regimes.

    Margins are log-distances to each bounding inequality (positive = satisfied).
    """
    if hbar <= 0 or beta <= 0:
        raise ValueError("hbar and beta must be positive")
    lh = math.log(hbar)
    lT = -math.log(beta)
    sigma = beta * hbar
    m = {
        # beta <= hbar^(eps - 2/3)
        "expansion": (epsilon - 2.0 / 3.0) * lh + lT,
        # hbar^(1-eps) <= T
        "intermediate_low": lT - (1.0 - epsilon) * lh,
        # T <= hbar^(2/3-eps)
        "intermediate_high": (2.0 / 3.0 - epsilon) * lh - lT,
        # sigma in (0, sigma_max]
        "mesoscopic": math.log(sigma_max) - math.log(sigma),
    }
    if m["expansion"] >= 0:
        name = "expansion"
    elif m["intermediate_low"] >= 0 and m["intermediate_high"] >= 0:
        name = "intermediate"
    elif m["mesoscopic"] >= 0:
        name = "mesoscopic"
    else:
        name = "zero-temperature"
    return RegimeTag(name, m)


@dataclass(frozen=True)
class ThermoState:
    """Parameter bundle. sigma is derived from (beta, hbar), never stored."""

    hbar: float
    beta: float
    mu: float
    kappa: float = 0.0
    tau: float | None = None
    tau0: float | None = None
    delta: float | None = None
    epsilon: float = DEFAULT_EPSILON
    sigma_max: float = DEFAULT_SIGMA_MAX

    def __post_init__(self):
        if self.hbar <= 0 or self.beta <= 0:
            raise ValueError("hbar and beta must be positive")
        if self.tau is not None and self.tau0 is not None and not self.tau > 2 * self.tau0 > 0:
            raise ValueError(f"need tau > 2 tau0 > 0, got tau={self.tau}, tau0={self.tau0}")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def sigma(self) -> float:
        return self.beta * self.hbar

    @property
    def regime(self) -> RegimeTag:
        return regime_classify(self.hbar, self.beta, self.epsilon, self.sigma_max)

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"ThermoState needs {', '.join(missing)}")

    def replace(self, **kw) -> "ThermoState":
        from dataclasses import replace

        return replace(self, **kw)


def guard_regime(state: ThermoState, allowed: tuple[str, ...], what: str, force: bool = False):
    """Raise RegimeError unless the state's regime is allowed or `force` is set."""
    tag = state.regime
    if tag.name in allowed:
        return None
    msg = f"{what}: regime '{tag.name}' (hbar={state.hbar:.4g}, beta={state.beta:.4g}) outside {allowed}"
    if not force:
        raise RegimeError(msg)
    return msg


# -- spectrum access -------------------------------------------------------------
def _levels(spectrum):
    if hasattr(spectrum, "energies"):
        return np.asarray(spectrum.energies, dtype=float)
    return np.asarray(spectrum, dtype=float)


def _slopes(spectrum):
    d = getattr(spectrum, "dE_dkappa", None)
    if d is None:
        raise ValueError("spectrum carries no dE/dkappa")
    return np.asarray(d, dtype=float)


def required_cutoff(state: ThermoState) -> float:
    return state.mu + TRUNCATION_MARGIN / state.beta


def check_truncation(spectrum, state: ThermoState):
    E = _levels(spectrum)
    need = required_cutoff(state)
    if E.size == 0 or E[-1] < need:
        raise SpectrumTooShortError(float(E[-1]) if E.size else -math.inf, need)
    conv = getattr(spectrum, "converged", None)
    if conv is not None:
        conv = np.asarray(conv, dtype=bool)
        bad = (~conv) & (E <= need)
        if np.any(bad):
            raise SpectrumTooShortError(float(E[np.argmax(bad)]), need)


def truncation_bound(spectrum, state: ThermoState) -> float:
    """Heuristic size of the omitted tail: as many levels again, each below |F(E_max - mu)|."""
    E = _levels(spectrum)
    return float(E.size * abs(fermi_F(state.beta, E[-1] - state.mu)))


# -- exact thermodynamics --------------------------------------------------------
def grand_potential(spectrum, state: ThermoState, check: bool = True) -> float:
    if check:
        check_truncation(spectrum, state)
    return math.fsum(fermi_F(state.beta, _levels(spectrum) - state.mu))


def particle_number(spectrum, state: ThermoState, check: bool = True) -> float:
    if check:
        check_truncation(spectrum, state)
    return math.fsum(fermi_f(state.beta, _levels(spectrum) - state.mu))


def magnetization_exact(spectrum, state: ThermoState, check: bool = True) -> float:
    """M = sum_j f_beta(E_j - mu) dE_j/dkappa."""
    if check:
        check_truncation(spectrum, state)
    return math.fsum(fermi_f(state.beta, _levels(spectrum) - state.mu) * _slopes(spectrum))


def susceptibility_from_derivatives(spectrum, state: ThermoState) -> float:
    """chi = sum f E'' + f' (E')^2, when the spectrum carries second derivatives."""
    check_truncation(spectrum, state)
    d2 = getattr(spectrum, "d2E_dkappa2", None)
    if d2 is None:
        raise ValueError("spectrum carries no second kappa-derivatives")
    x = _levels(spectrum) - state.mu
    d1 = _slopes(spectrum)
    return math.fsum(fermi_f(state.beta, x) * d2 + fermi_f_prime(state.beta, x) * d1 * d1)


def susceptibility_exact(spectrum_at: Callable[[float], object], state: ThermoState,
                         dkappa: float = 1e-3, richardson: bool = False) -> float:
    """chi = d^2 Omega/d kappa^2 by a central second difference.

    `spectrum_at(kappa)` returns a converged spectrum at that coupling.
    With `richardson`, steps dkappa and 2 dkappa are combined to O(dkappa^4).
    """

    def omega(k):
        return grand_potential(spectrum_at(k), state.replace(kappa=k))

    k = state.kappa
    o0 = omega(k)

    def second(h):
        return (omega(k + h) - 2.0 * o0 + omega(k - h)) / (h * h)

    c1 = second(dkappa)
    if not richardson:
        return c1
    c2 = second(2.0 * dkappa)
    return (4.0 * c1 - c2) / 3.0


# -- cutoffs and damping ------------------------------------------------------------
def plateau_bump(t):
    """rho: 1 on |t| <= 1, exp(1 - 1/(1 - (|t|-1)^2)) on 1 < |t| < 2, 0 beyond."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(a)
    out[a <= 1.0] = 1.0
    mid = (a > 1.0) & (a < 2.0)
    s = a[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - s * s))
    return out


def time_cutoff(t, tau: float):
    """rho_tau(t) = rho(t/tau)."""
    return plateau_bump(np.asarray(t, dtype=float) / tau)


def annular_cutoff(t, tau0: float, tau: float):
    """rho_{1,tau}(t) = rho_tau(t) (1 - rho_{tau0}(t)); vanishes near t = 0."""
    return time_cutoff(t, tau) * (1.0 - time_cutoff(t, tau0))


def energy_window(E, mu: float, delta: float):
    """theta(E - mu): 1 on |E - mu| <= delta/2, 0 beyond delta."""
    return plateau_bump(2.0 * (np.asarray(E, dtype=float) - mu) / delta)


def damping_factor(t, sigma: float):
    """(pi t/sigma)/sinh(pi t/sigma) with series branch at 0 and no overflow."""
    y = np.abs(np.pi * np.asarray(t, dtype=float) / sigma)
    out = np.empty_like(y)
    small = y < 1e-4
    out[small] = 1.0 - y[small] ** 2 / 6.0
    big = ~small
    yb = y[big]
    e = np.exp(-yb)
    out[big] = 2.0 * yb * e / (1.0 - e * e)
    return out


# -- spectral sums of S_W ---------------------------------------------------------
def default_time_step(x_max: float) -> float:
    return min(0.01, math.pi / (1.5 * x_max + 50.0))


def kernel_sum(x, w, weight: Callable[[np.ndarray], np.ndarray], t_lo: float, t_hi: float,
               dt: float | None = None) -> float:
    """sum_j w_j S_W(x_j) for W = weight supported (smoothly) in [t_lo, t_hi].

    Uniform trapezoid in t; Z(t) is advanced by a per-level rotation, so the
    cost is O(levels x steps) with no transcendental calls inside the loop.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w != 0.0
    x, w = x[keep], w[keep]
    if x.size == 0 or t_hi <= t_lo:
        return 0.0
    if dt is None:
        dt = default_time_step(float(np.max(np.abs(x))))
    n = int(math.ceil((t_hi - t_lo) / dt))
    t = t_lo + dt * np.arange(n + 1)
    t = t[t > 0]
    if t.size == 0:
        return 0.0
    wt = weight(t) / t
    active = np.nonzero(wt != 0.0)[0]
    if active.size == 0:
        return 0.0
    t = t[active[0]: active[-1] + 1]
    wt = wt[active[0]: active[-1] + 1]
    step = np.exp(1j * dt * x)
    cur = w * np.exp(1j * t[0] * x)
    imz = np.empty(t.size)
    for k in range(t.size):
        imz[k] = cur.imag.sum()
        cur *= step
        if k % 256 == 255:  # re-anchor to stop phase drift
            cur = w * np.exp(1j * t[k + 1 if k + 1 < t.size else k] * x)
    return float(dt * np.dot(wt, imz) / math.pi)


def damping_horizon(sigma: float, floor: float = 1e-17) -> float:
    """Time beyond which the damping factor is below `floor`."""
    y = 1.0
    for _ in range(60):
        y = -math.log(floor / (2.0 * y))
    return y * sigma / math.pi


# -- smearing kernel ----------------------------------------------------------------
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True, eq=False)
class SmearingKernel:
    """g = f_sigma smeared by the time cutoff rho_tau, tabulated on an x-grid."""

    sigma: float
    tau: float
    x: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    dg: np.ndarray = field(repr=False)
    monotone: bool = True
    normalization_error: float = 0.0

    def weight(self, t):
        return time_cutoff(t, self.tau) * damping_factor(t, self.sigma)

    def _nodes(self, x_abs_max: float):
        width = 2.0 * self.tau
        n_panels = int(max(16, math.ceil(width * (x_abs_max + 1.0) / math.pi)))
        edges = np.linspace(0.0, width, n_panels + 1)
        a, b = edges[:-1, None], edges[1:, None]
        t = (0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)).ravel()
        wq = (0.5 * (b - a) * _GL_W[None, :]).ravel()
        return t, wq * self.weight(t)

    def evaluate(self, x) -> np.ndarray:
        """g(x) = 1/2 - (1/pi) int_0^{2 tau} rho_tau R sin(tx)/t dt."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, wq = self._nodes(float(np.abs(x).max()))
        out = np.empty_like(x)
        for s in range(0, x.size, 256):
            xs = x[s: s + 256]
            out[s: s + 256] = 0.5 - (np.sin(np.outer(xs, t)) @ (wq / t)) / math.pi
        return out

    def derivative(self, x) -> np.ndarray:
        """g'(x) = -(1/pi) int_0^{2 tau} rho_tau R cos(tx) dt."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, wq = self._nodes(float(np.abs(x).max()))
        out = np.empty_like(x)
        for s in range(0, x.size, 256):
            xs = x[s: s + 256]
            out[s: s + 256] = -(np.cos(np.outer(xs, t)) @ wq) / math.pi
        return out


def build_smearing_kernel(state: ThermoState, tau: float | None = None, x_max: float | None = None,
                          n_grid: int = 6001, strict: bool = True) -> SmearingKernel:
    """Tabulate g and g' and check the kernel invariants.

    With `strict`, a non-monotone g or a normalization error above 1e-8 raises.
    Short cutoffs (tau comparable to sigma) legitimately give slightly
    non-monotone kernels, so those are built with strict=False.
    """
    tau = state.tau if tau is None else tau
    if tau is None:
        raise ValueError("kernel needs tau")
    if state.tau0 is not None and tau == state.tau and not tau > 2 * state.tau0:
        raise ValueError("need tau > 2 tau0")
    sigma = state.sigma
    if x_max is None:
        x_max = 40.0 + 60.0 / sigma
    xs = np.linspace(-x_max, x_max, n_grid)
    k0 = SmearingKernel(sigma, tau, xs, np.empty(0), np.empty(0))
    g = k0.evaluate(xs)
    dg = k0.derivative(xs)
    norm_err = abs(integrate.trapezoid(dg, xs) + 1.0)
    scale = np.abs(dg).max()
    monotone = bool(dg.max() <= 1e-10 * scale)
    if strict and not monotone:
        raise ValueError(f"kernel not monotone: max g' = {dg.max():.3g}")
    if strict and norm_err > 1e-8:
        raise ValueError(f"kernel normalization error {norm_err:.3g}")
    return SmearingKernel(sigma, tau, xs, g, dg, monotone, float(norm_err))


# -- smeared magnetization and its split ---------------------------------------------
def smeared_magnetization(spectrum, state: ThermoState, kernel: SmearingKernel | str | None = None,
                          dt: float | None = None) -> float:
    """M_tau = sum_j g((E_j - mu)/hbar) dE_j/dkappa.

    Written as sum f_sigma(x_j) w_j + sum S_{(1-rho_tau) R}(x_j) w_j, so only
    times t >= tau need quadrature. kernel="exact" uses f_sigma itself.
    """
    check_truncation(spectrum, state)
    E = _levels(spectrum)
    w = _slopes(spectrum)
    base = math.fsum(fermi_f(state.beta, E - state.mu) * w)
    if isinstance(kernel, str):
        if kernel != "exact":
            raise ValueError(f"unknown kernel {kernel!r}")
        return base
    tau = kernel.tau if kernel is not None else state.tau
    if tau is None:
        raise ValueError("smearing needs tau")
    sigma = state.sigma
    x = (E - state.mu) / state.hbar
    t_hi = max(2.0 * tau, tau + damping_horizon(sigma))

    def weight(t):
        return (1.0 - time_cutoff(t, tau)) * damping_factor(t, sigma)

    return base + kernel_sum(x, w, weight, tau, t_hi, dt)


def oscillating_part(spectrum, state: ThermoState, dt: float | None = None) -> float:
    """M_osc^num = sum_j theta(E_j - mu) (g_tau - g_tau0)(x_j) dE_j/dkappa."""
    state.require("tau", "tau0", "delta")
    E = _levels(spectrum)
    th = energy_window(E, state.mu, state.delta)
    sel = th > 0
    x = (E[sel] - state.mu) / state.hbar
    w = th[sel] * _slopes(spectrum)[sel]
    sigma = state.sigma

    def weight(t):
        return annular_cutoff(t, state.tau0, state.tau) * damping_factor(t, sigma)

    return -kernel_sum(x, w, weight, state.tau0, 2.0 * state.tau, dt)


def split_mean_oscillating(spectrum, state: ThermoState, dt: float | None = None):
    """(M_bar_num, M_osc_num) with M_bar_num = M_tau - M_osc_num."""
    m_osc = oscillating_part(spectrum, state, dt)
    m_tau = smeared_magnetization(spectrum, state, None, dt)
    return m_tau - m_osc, m_osc


def tail_diagnostic(spectrum, state: ThermoState, dt: float | None = None, force: bool = False) -> float:
    """|M_{theta,1-rho}|: the windowed levels' response from times beyond tau0.

    Equals |sum_j theta_j E'_j (f_sigma - g_tau0)(x_j)|. The t-quadrature runs
    from tau0 to the damping horizon (where the sinh factor drops below 1e-17).
    """
    state.require("tau0", "delta")
    tag = state.regime
    if tag.name == "zero-temperature":
        raise RegimeError("zero temperature: no thermal damping, the long-time tail does not decay")
    guard_regime(state, ("intermediate",), "tail_diagnostic", force)
    E = _levels(spectrum)
    th = energy_window(E, state.mu, state.delta)
    sel = th > 0
    x = (E[sel] - state.mu) / state.hbar
    w = th[sel] * _slopes(spectrum)[sel]
    sigma = state.sigma
    tau0 = state.tau0

    def weight(t):
        return (1.0 - time_cutoff(t, tau0)) * damping_factor(t, sigma)

    t_hi = 2.0 * tau0 + damping_horizon(sigma)
    return abs(kernel_sum(x, w, weight, tau0, t_hi, dt))


def default_energy_window(critical_values, mu: float) -> float:
    """Half the distance from mu to the nearest critical value of H."""
    d = np.min(np.abs(np.asarray(critical_values, dtype=float) - mu))
    if d <= 0:
        raise ValueError("mu is a critical value")
    return 0.5 * float(d)
