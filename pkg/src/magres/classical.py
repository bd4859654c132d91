"""Classical flow, variational flow, and Liouville-measure integrals."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .model import HamiltonianSpec, PhasePoint, normal_modes

ENERGY_DRIFT_TOL = 1e-10
SYMPLECTIC_TOL = 1e-8
SHARD_SIZE = 1 << 16


class IntegrationError(RuntimeError):
    pass


class EmptyRegionError(ValueError):
    pass


class CriticalEnergyError(ValueError):
    pass


def _x(x0) -> np.ndarray:
    return x0.x if isinstance(x0, PhasePoint) else np.asarray(x0, dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    energy: np.ndarray

    @property
    def max_relative_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / abs(e0))

    def to_csv(self, path):
        n = self.x.shape[1] // 2
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["H"])
            for t, x, e in zip(self.t, self.x, self.energy):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(e))])


@dataclass(frozen=True, eq=False)
class TangentFrame:
    t: np.ndarray
    matrices: np.ndarray  # (len(t), 2n, 2n)

    def symplectic_defect(self) -> float:
        m = self.matrices.shape[-1] // 2
        from .model import symplectic_form

        J = symplectic_form(m)
        return float(np.max(np.abs(np.einsum("kji,jl,klm->kim", self.matrices, J, self.matrices) - J)))

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]


def _solve(rhs, y0, t_final, tol, t_eval=None, dense=False):
    sol = integrate.solve_ivp(
        rhs, (0.0, t_final), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
        t_eval=t_eval, dense_output=dense,
    )
    if sol.status != 0:
        where = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationError(f"integration stopped at t = {where:.6g}: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError("non-finite state encountered")
    return sol


def integrate_flow(spec: HamiltonianSpec, kappa: float, x0, t_final: float, tol: float = 1e-12,
                   t_eval=None, n_samples: int = 201, check_energy: bool = True) -> Trajectory:
    """Solve q' = dH/dp, p' = -dH/dq with an adaptive order-8 Runge-Kutta scheme."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    y0 = _x(x0)
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, n_samples)
    sol = _solve(lambda t, y: spec.vector_field(kappa, y), y0, t_final, tol, t_eval)
    xs = sol.y.T
    traj = Trajectory(sol.t, xs, spec.hamiltonian(kappa, xs))
    if check_energy and traj.max_relative_drift > ENERGY_DRIFT_TOL:
        raise IntegrationError(f"energy drift {traj.max_relative_drift:.2e} exceeds {ENERGY_DRIFT_TOL}")
    return traj


def _tangent_rhs(spec, kappa):
    n2 = 2 * spec.n
    J = spec.J

    def rhs(t, y):
        x = y[:n2]
        M = y[n2:].reshape(n2, n2)
        return np.concatenate([spec.vector_field(kappa, x), (J @ spec.hessian(kappa, x) @ M).ravel()])

    return rhs


def integrate_tangent(spec: HamiltonianSpec, kappa: float, trajectory: Trajectory,
                      tol: float = 1e-12) -> TangentFrame:
    """M(0) = I, M' = J Hess H(x(t)) M along the trajectory's time grid."""
    n2 = 2 * spec.n
    y0 = np.concatenate([trajectory.x[0], np.eye(n2).ravel()])
    t = trajectory.t
    sol = _solve(_tangent_rhs(spec, kappa), y0, t[-1], tol, t)
    mats = sol.y[n2:].T.reshape(-1, n2, n2)
    frame = TangentFrame(sol.t, mats)
    if frame.symplectic_defect() > SYMPLECTIC_TOL:
        raise IntegrationError(f"tangent flow lost symplecticity ({frame.symplectic_defect():.2e})")
    return frame


# -- flow with tangent and line integrals, used for periodic orbits ---------------------
@dataclass(frozen=True, eq=False)
class FlowSegment:
    """Endpoint data of an augmented flow over [0, T]."""

    x: np.ndarray
    monodromy: np.ndarray
    action: float  # int p . dq
    moment: float  # int dH/dkappa dt
    flux: float  # int a(q) . dq
    area: float  # 1/2 int (q1 dq2 - q2 dq1), orientation tag
    dense: object = field(default=None, repr=False)


def flow_segment(spec: HamiltonianSpec, kappa: float, x0, T: float, tol: float = 1e-12,
                 dense: bool = False) -> FlowSegment:
    n = spec.n
    n2 = 2 * n
    J = spec.J
    A = spec.gauge.matrix

    def rhs(t, y):
        x = y[:n2]
        M = y[n2: n2 + n2 * n2].reshape(n2, n2)
        q, p = x[:n], x[n:]
        qdot = p - kappa * (A @ q)
        a = A @ q
        out = np.empty_like(y)
        out[:n2] = spec.vector_field(kappa, x)
        out[n2: n2 + n2 * n2] = (J @ spec.hessian(kappa, x) @ M).ravel()
        k = n2 + n2 * n2
        out[k] = p @ qdot
        out[k + 1] = -qdot @ a
        out[k + 2] = a @ qdot
        out[k + 3] = 0.5 * (q[0] * qdot[1] - q[1] * qdot[0]) if n >= 2 else 0.0
        return out

    y0 = np.concatenate([_x(x0), np.eye(n2).ravel(), np.zeros(4)])
    sol = _solve(rhs, y0, T, tol, dense=dense)
    y = sol.y[:, -1]
    k = n2 + n2 * n2
    return FlowSegment(y[:n2], y[n2:k].reshape(n2, n2), float(y[k]), float(y[k + 1]),
                       float(y[k + 2]), float(y[k + 3]), sol.sol if dense else None)


# -- phase-space integrals ---------------------------------------------------------
@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    method: str  # "closed-form" | "monte-carlo" | "richardson"

    def __float__(self) -> float:
        return self.value


def _ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def quadratic_volume(spec: HamiltonianSpec, kappa: float, mu: float) -> float:
    """(2 pi)^n (mu - E0)^n / (n! prod w_i) for quadratic H."""
    modes = normal_modes(spec, kappa)
    e = mu - modes.energy_min
    if e <= 0:
        return 0.0
    n = spec.n
    return (2 * math.pi) ** n * e**n / (math.factorial(n) * float(np.prod(modes.frequencies)))


def quadratic_volume_derivative(spec: HamiltonianSpec, kappa: float, mu: float) -> float:
    modes = normal_modes(spec, kappa)
    e = mu - modes.energy_min
    if e <= 0:
        return 0.0
    n = spec.n
    return (2 * math.pi) ** n * e ** (n - 1) / (math.factorial(n - 1) * float(np.prod(modes.frequencies)))


def q_bounding_box(spec: HamiltonianSpec, level: float, n_dirs: int = 256):
    """Axis-aligned box containing {V <= level}."""
    pot = spec.potential
    q0 = pot.minimizer
    vmin = pot.min_value
    if level <= vmin:
        raise EmptyRegionError(f"level {level} <= min V = {vmin}")
    n = spec.n
    if pot.is_quadratic:
        W = pot.quadratic_matrix()
        half = np.sqrt(2.0 * (level - vmin) * np.diag(np.linalg.inv(W)))
        return q0 - half, q0 + half
    rng = np.random.default_rng(99)
    u = rng.standard_normal((n_dirs, n))
    u = np.vstack([u, np.eye(n), -np.eye(n)])
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lo, hi = q0.copy(), q0.copy()
    for d in u:
        r_hi = 1.0
        while pot.value(q0 + r_hi * d, check=False) < level:
            r_hi *= 2.0
        r = optimize.brentq(lambda r: pot.value(q0 + r * d, check=False) - level, 0.0, r_hi)
        pt = q0 + r * d
        lo = np.minimum(lo, pt)
        hi = np.maximum(hi, pt)
    pad = 0.1 * (hi - lo)  # star-shaped search can miss corners; pad generously
    return lo - pad, hi + pad


def _shard_rng(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, shard])))


def _q_shard(args):
    spec, kappa, levels, g, seed, shard, count, lo, hi, combo = args
    rng = _shard_rng(seed, shard)
    n = spec.n
    q = lo + (hi - lo) * rng.random((count, n))
    v = spec.potential.value(q, check=False)
    weight = 1.0 if g is None else np.asarray(g(q), dtype=float)
    out = []
    for level in levels:
        r2 = np.clip(2.0 * (level - v), 0.0, None)
        out.append(weight * _ball_volume(n) * r2 ** (n / 2))
    vals = combo @ np.vstack(out)
    return vals.sum(axis=1), (vals**2).sum(axis=1)


def _phase_shard(args):
    spec, kappa, levels, g, seed, shard, count, lo, hi, pmax, combo = args
    rng = _shard_rng(seed, shard)
    n = spec.n
    q = lo + (hi - lo) * rng.random((count, n))
    pk = pmax * (2.0 * rng.random((count, n)) - 1.0)
    x = np.concatenate([q, pk + kappa * spec.gauge(q)], axis=1)
    H = 0.5 * np.sum(pk * pk, axis=1) + spec.potential.value(q, check=False)
    gv = np.asarray(g(x[:, :n], x[:, n:]), dtype=float)
    vals = combo @ np.vstack([gv * (H <= level) for level in levels])
    return vals.sum(axis=1), (vals**2).sum(axis=1)


def _run_shards(fn, base_args, samples, seed, workers):
    n_shards = max(1, int(math.ceil(samples / SHARD_SIZE)))
    jobs = []
    for k in range(n_shards):
        count = min(SHARD_SIZE, samples - k * SHARD_SIZE)
        a = list(base_args)
        a[4:4] = [seed, k, count]
        jobs.append(tuple(a))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, jobs))
    else:
        parts = [fn(j) for j in jobs]
    s1 = np.sum([p[0] for p in parts], axis=0)  # fixed shard order: worker count cannot matter
    s2 = np.sum([p[1] for p in parts], axis=0)
    total = sum(j[6] for j in jobs)
    mean = s1 / total
    var = np.maximum(s2 / total - mean**2, 0.0)
    return mean, np.sqrt(var / total)


def volume_monte_carlo(spec: HamiltonianSpec, kappa: float, levels, g=None, p_dependent: bool = False,
                       samples: int = 4_000_000, seed: int = 0, workers: int = 1, combo=None):
    """Monte Carlo estimates of int_{H <= level} g for each level, common random numbers.

    q-only integrands integrate the momentum ball analytically; p-dependent
    ones sample a sheared box in (q, p - kappa a(q)) of unit Jacobian. With
    `combo`, estimates (and standard errors) are for the rows of combo @ values.
    """
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    combo = np.eye(levels.size) if combo is None else np.atleast_2d(np.asarray(combo, dtype=float))
    lo, hi = q_bounding_box(spec, float(levels.max()))
    qvol = float(np.prod(hi - lo))
    if p_dependent:
        pmax = math.sqrt(2.0 * (levels.max() - spec.potential.min_value))
        mean, err = _run_shards(_phase_shard, (spec, kappa, levels, g, lo, hi, pmax, combo), samples, seed, workers)
        box = qvol * (2.0 * pmax) ** spec.n
    else:
        mean, err = _run_shards(_q_shard, (spec, kappa, levels, g, lo, hi, combo), samples, seed, workers)
        box = qvol
    return mean * box, err * box


def phase_space_volume(spec: HamiltonianSpec, kappa: float, mu: float, g=None,
                       p_dependent: bool = False, samples: int = 4_000_000, seed: int = 0,
                       workers: int = 1, method: str = "auto") -> VolumeEstimate:
    """int_{H_kappa <= mu} g dq dp.

    g is None (volume), a constant, a callable g(q) or, with p_dependent, g(q, p).
    Quadratic specs with constant g use the closed form.
    """
    vmin = spec.potential.min_value
    if mu < vmin:
        raise EmptyRegionError(f"mu = {mu} below min V = {vmin}")
    if mu == vmin:
        return VolumeEstimate(0.0, 0.0, "closed-form")
    const = None if callable(g) else (1.0 if g is None else float(g))
    if spec.is_quadratic and const is not None and method in ("auto", "closed-form"):
        return VolumeEstimate(const * quadratic_volume(spec, kappa, mu), 0.0, "closed-form")
    gg = None if const is not None else g
    val, err = volume_monte_carlo(spec, kappa, [mu], gg, p_dependent, samples, seed, workers)
    scale = 1.0 if const is None else const
    return VolumeEstimate(float(val[0]) * scale, float(err[0]) * abs(scale), "monte-carlo")


def energy_shell_samples(spec: HamiltonianSpec, kappa: float, mu: float, count: int,
                         seed: int = 0) -> np.ndarray:
    """Points exactly on H = mu: q uniform in {V < mu}, p = kappa a(q) + |p'| u."""
    rng = np.random.default_rng(seed)
    lo, hi = q_bounding_box(spec, mu)
    n = spec.n
    out = []
    while sum(len(o) for o in out) < count:
        q = lo + (hi - lo) * rng.random((4 * count, n))
        v = spec.potential.value(q, check=False)
        q = q[v < mu]
        u = rng.standard_normal(q.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = np.sqrt(2.0 * (mu - spec.potential.value(q, check=False)))[:, None]
        out.append(np.concatenate([q, kappa * spec.gauge(q) + r * u], axis=1))
    return np.concatenate(out)[:count]


def check_noncritical(spec: HamiltonianSpec, kappa: float, mu: float, samples: int = 4000,
                      seed: int = 0, rel: float = 1e-6) -> float:
    """Return min |grad H| over shell samples; raise if mu is (near) critical."""
    crit = spec.critical_values()
    scale = max(1.0, abs(mu))
    if np.any(np.abs(crit - mu) <= rel * scale):
        raise CriticalEnergyError(f"mu = {mu} is a critical value of H")
    pts = energy_shell_samples(spec, kappa, mu, samples, seed)
    gnorm = np.linalg.norm(spec.gradient(kappa, pts), axis=1)
    if gnorm.min() <= rel * gnorm.max():
        raise CriticalEnergyError(f"|grad H| ~ 0 on the shell H = {mu}")
    return float(gnorm.min())


def liouville_surface_integral(spec: HamiltonianSpec, kappa: float, mu: float, g=None,
                               p_dependent: bool = False, samples: int = 4_000_000, seed: int = 0,
                               workers: int = 1, rel_step: float = 1e-3,
                               method: str = "auto") -> VolumeEstimate:
    """int_{H = mu} g d(sigma) as d/dmu of the volume integral (co-area).

    Central differences at steps h and h/2 (common random numbers), combined
    by Richardson extrapolation; the error is the Richardson correction plus
    Monte Carlo error of the difference.
    """
    check_noncritical(spec, kappa, mu)
    const = None if callable(g) else (1.0 if g is None else float(g))
    if spec.is_quadratic and const is not None and method in ("auto", "closed-form"):
        return VolumeEstimate(const * quadratic_volume_derivative(spec, kappa, mu), 0.0, "closed-form")
    h = rel_step * abs(mu)
    levels = [mu - h, mu + h, mu - h / 2, mu + h / 2]
    # rows: Richardson-combined derivative, and the h/2 central difference
    combo = np.array([
        [1.0 / (6 * h), -1.0 / (6 * h), -4.0 / (3 * h), 4.0 / (3 * h)],
        [0.0, 0.0, -1.0 / h, 1.0 / h],
    ])
    gg = None if const is not None else g
    if spec.is_quadratic and gg is None:
        vals = combo @ np.array([quadratic_volume(spec, kappa, L) for L in levels])
        errs = np.zeros(2)
    else:
        vals, errs = volume_monte_carlo(spec, kappa, levels, gg, p_dependent, samples, seed, workers,
                                        combo)
    rich, half = vals
    scale = 1.0 if const is None else const
    return VolumeEstimate(rich * scale, (abs(rich - half) + errs[0]) * abs(scale), "richardson")
