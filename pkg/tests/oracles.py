"""Independent reference values. Nothing here imports magres.

Each oracle is a closed form, a brute-force sum, or a symbolic derivation;
the frozen constants below were produced by these functions and are asserted
against them in test_oracles.py.
"""
from __future__ import annotations

import math

import numpy as np

# -- frozen values ---------------------------------------------------------------------
FD_GROUND_K1 = 1.0 + math.sqrt(1.25)  # 2.118033988749895
ELLIPSOID_VOLUME_MU2 = 2.0 * math.pi**2  # 19.739208802178716
LIOUVILLE_AREA_MU2 = 4.0 * math.pi**2  # 39.47841760435743
LANDAU_ISOTROPIC_DISPLAYED = -1.0 / 6.0
LANDAU_ISOTROPIC_SPINLESS = 1.0 / 12.0
DET_ROTATION_SQRT2 = 4.0 * math.sin(math.pi * math.sqrt(2.0)) ** 2  # 3.716432371337...
CORRECTION_CONSTANT = -1.0 / 24.0


def fock_darwin_levels(omega, kappa, hbar, count, offset=1.0):
    """Brute-force enumeration of offset + hbar W+ (a + 1/2) + hbar W- (b + 1/2)."""
    s = math.sqrt(omega**2 + kappa**2 / 4)
    wp, wm = s + kappa / 2, s - kappa / 2
    m = count + 1  # any of the lowest `count` levels has a, b < count
    E = sorted(offset + hbar * (wp * (a + 0.5) + wm * (b + 0.5)) for a in range(m) for b in range(m))
    return np.array(E[:count])


def fock_darwin_omega(omega, kappa, hbar, beta, mu, n_max=400, offset=1.0):
    """Omega = sum F_beta(E - mu) by direct double sum (mpmath-free, log1p form)."""
    s = math.sqrt(omega**2 + kappa**2 / 4)
    wp, wm = s + kappa / 2, s - kappa / 2
    a = np.arange(n_max)[:, None]
    b = np.arange(n_max)[None, :]
    x = offset + hbar * (wp * (a + 0.5) + wm * (b + 0.5)) - mu
    F = np.where(x >= 0, -np.log1p(np.exp(-beta * np.abs(x))) / beta,
                 x - np.log1p(np.exp(-beta * np.abs(x))) / beta)
    return math.fsum(F.ravel())


def anisotropic_frequencies(w1, w2, kappa):
    """Normal modes of 1/2 (p - kappa a)^2 + (w1^2 q1^2 + w2^2 q2^2)/2, symmetric gauge."""
    a = w1**2 + w2**2 + kappa**2
    d = math.sqrt(a * a - 4 * w1**2 * w2**2)
    return math.sqrt((a + d) / 2), math.sqrt((a - d) / 2)


def mode_action(energy_above_min, freq):
    """Action of a linear normal-mode orbit: 2 pi E / w."""
    return 2 * math.pi * energy_above_min / freq


def det_rotation(theta):
    return 4.0 * math.sin(theta / 2) ** 2


def maslov_mode_orbit(r, ratio):
    """Conley-Zehnder-type index of the r-th repetition of an elliptic mode orbit.

    Two from the longitudinal winding per turn, plus 2 floor(r ratio) + 1 from
    the transverse rotation by 2 pi ratio per turn (ratio = w_other / w_self).
    """
    return 2 * r + 1 + 2 * math.floor(r * ratio)


def trapz_uniform(y, dx):
    y = np.asarray(y, dtype=float)
    return dx * (y.sum() - 0.5 * (y[0] + y[-1]))


def symbolic_correction_constant():
    """Derive C in Omega = h^-2 int F + C hbar^2 h^-2 int F''(kappa^2 |B|^2 + Lap V) + ...

    Isotropic oscillator (V = 1 + w^2 |q|^2 / 2, unit field): levels
    hbar W+ (a + 1/2) + hbar W- (b + 1/2). Midpoint Euler-Maclaurin per axis,
    sum_a phi(a + 1/2) = int phi - e phi'(0) with e = B_2(1/2)/2!, leaves
    e (W+/W- + W-/W+) F(-mu') beyond the Weyl term. The phase-space term is
    C (kappa^2 + 2 w^2) F(-mu') / (W+ W-), using int F''(H - mu) dq dp =
    (2 pi)^2 F(-mu') / (W+ W-). Equating fixes C.
    """
    import sympy as sp

    w, k = sp.symbols("omega kappa", positive=True)
    C = sp.Symbol("C", real=True)
    s = sp.sqrt(w**2 + k**2 / 4)
    wp, wm = s + k / 2, s - k / 2
    e = sp.bernoulli(2, sp.Rational(1, 2)) / sp.factorial(2)
    quantum = e * (wp / wm + wm / wp)
    classical = C * (k**2 + 2 * w**2) / (wp * wm)
    (sol,) = sp.solve(sp.Eq(quantum, classical), C)
    return sp.simplify(sol)
