"""Periodic orbits on an energy shell and the data the trace formula needs."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import IntegrationError, energy_shell_samples, flow_segment
from .model import HamiltonianSpec, normal_modes, symplectic_form

log = logging.getLogger(__name__)

CLOSURE_TOL = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50
DEFAULT_DEGENERACY = 1e-3

# complex structure on R^4 anticommuting with J; K g, JK g span the symplectic
# complement of (J g, g) for any g != 0
_K4 = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)


class FrameError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    x0: np.ndarray
    period: float
    primitive_period: float
    repetitions: int
    action: float
    maslov: int
    maslov_longitudinal: int
    monodromy: np.ndarray = field(repr=False)
    poincare: np.ndarray = field(repr=False)
    det_one_minus_P: float
    moment: float
    flux: float
    area: float
    energy: float
    kappa: float
    stability: str
    degenerate: bool = False

    @property
    def key(self):
        return (round(self.primitive_period, 6), round(self.action, 6), self.repetitions)


@dataclass
class OrbitSearch:
    orbits: list
    degenerate: list
    dropped: int = 0
    notes: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.orbits)

    def __len__(self):
        return len(self.orbits)

    def primitives(self):
        return [o for o in self.orbits if o.repetitions == 1]


# -- symplectic frames -------------------------------------------------------------
def _omega(u, v, J):
    return float(u @ J @ v)


def complement_basis(grad: np.ndarray, flow: np.ndarray, J: np.ndarray, candidates=None) -> np.ndarray:
    """Columns spanning the symplectic complement of span(flow, grad), in (Q..., P...) order."""
    n2 = grad.size
    e1 = flow
    e2 = grad / (grad @ grad)

    def proj(u):
        return u - _omega(u, e2, J) * e1 + _omega(u, e1, J) * e2

    if candidates is None:
        if n2 == 4:
            g = grad / np.linalg.norm(grad)
            candidates = [_K4 @ g, -(J @ _K4 @ g)]
        else:
            candidates = list(np.eye(n2))
    pool = [proj(np.asarray(u, dtype=float)) for u in candidates]
    Qs, Ps = [], []
    for _ in range(n2 // 2 - 1):
        i = int(np.argmax([np.linalg.norm(u) for u in pool]))
        a = pool.pop(i)
        a = a / np.linalg.norm(a)
        j = int(np.argmax([abs(_omega(a, u, J)) for u in pool]))
        b = pool.pop(j)
        w = _omega(a, b, J)
        if abs(w) < 1e-12:
            raise FrameError("could not complete a symplectic transverse frame")
        b = b / w
        Qs.append(a)
        Ps.append(b)
        pool = [u - _omega(u, b, J) * a + _omega(u, a, J) * b for u in pool]
    return np.column_stack(Qs + Ps)


def poincare_reduce(monodromy: np.ndarray, flow_direction: np.ndarray, energy_gradient: np.ndarray,
                    candidates=None, tol: float = 1e-6):
    """Transverse block P of the monodromy and det(1 - P).

    The basis (flow, grad/|grad|^2, complement) is symplectic; M keeps the flow
    direction fixed and preserves the energy, so in this basis the complement
    block is the linearized return map on a section inside the energy shell.
    """
    M = np.asarray(monodromy, dtype=float)
    f = np.asarray(flow_direction, dtype=float)
    g = np.asarray(energy_gradient, dtype=float)
    if np.linalg.norm(f) == 0:
        raise ValueError("flow direction must be non-zero")
    if np.linalg.norm(M @ f - f) > tol * max(1.0, np.linalg.norm(f)):
        raise FrameError("flow direction is not a unit eigenvector of the monodromy (closure broken)")
    n2 = M.shape[0]
    J = symplectic_form(n2 // 2)
    C = complement_basis(g, f, J, candidates)
    B = np.column_stack([f, g / (g @ g), C])
    Y = np.linalg.solve(B, M @ B)
    P = Y[2:, 2:]
    det = float(np.linalg.det(np.eye(P.shape[0]) - P))
    return P, det


# -- Maslov index (n = 2) ----------------------------------------------------------------
def _frame(spec, kappa, x, u3, u4):
    """Symplectic frame [e1, e3, e2, e4] (Q1, Q2, P1, P2 order) at x."""
    J = spec.J
    g = spec.gradient(kappa, x)
    f = J @ g
    e2 = g / (g @ g)

    def proj(u):
        return u - _omega(u, e2, J) * f + _omega(u, f, J) * e2

    a = proj(u3)
    b = proj(u4)
    na = np.linalg.norm(a)
    a = a / na
    w = _omega(a, b, J)
    return np.column_stack([f, a, e2, b / w]), abs(w) * na


def _rho_phase(S):
    """Phase of det(X + iY) for the unitary part of a symplectic matrix."""
    U, _, Vt = np.linalg.svd(S)
    O = U @ Vt
    m = S.shape[0] // 2
    return np.angle(np.linalg.det(O[:m, :m] + 1j * O[m:, :m]))


@dataclass(frozen=True)
class MaslovData:
    total: int
    longitudinal: int
    transverse: int
    winding: int
    rotation: float  # transverse rotation angle (elliptic) or half-turn angle (hyperbolic)
    stability: str

    def repeated(self, r: int) -> tuple[int, int]:
        """(total, longitudinal) for the r-th repetition."""
        lon = 2 * self.winding * r
        if self.stability == "elliptic":
            tr = 2 * math.floor(r * self.rotation / (2 * math.pi)) + 1
        else:
            tr = int(round(r * self.rotation / math.pi))
        return lon + tr, lon


def maslov_index(spec: HamiltonianSpec, kappa: float, x0, period: float, samples: int | None = None,
                 tol: float = 1e-12) -> MaslovData:
    """Index of a primitive periodic orbit, as 2 W + transverse Conley-Zehnder part.

    W is the winding of a symplectic frame carried along the orbit (flow
    direction, energy direction, and two fixed transverse vectors projected
    onto the complement); the transverse part counts half-turns of the
    reduced linearized flow measured in that frame. Only the sum is
    independent of the frame.
    """
    if spec.n != 2:
        raise NotImplementedError("Maslov index implemented for n = 2")
    seg = flow_segment(spec, kappa, x0, period, tol, dense=True)
    n_s = samples or int(max(2000, 400 * period))
    ts = np.linspace(0.0, period, n_s + 1)
    Y = seg.dense(ts)
    xs = Y[:4].T
    Ms = Y[4:20].T.reshape(-1, 4, 4)
    J = spec.J
    g0 = spec.gradient(kappa, xs[0])
    g0n = g0 / np.linalg.norm(g0)
    u3, u4 = _K4 @ g0n, -(J @ _K4 @ g0n)
    frames, cond = zip(*[_frame(spec, kappa, x, u3, u4) for x in xs])
    if min(cond) < 1e-3:
        # fixed vectors degenerate somewhere; fall back to the everywhere-regular K frame
        frames = []
        for x in xs:
            g = spec.gradient(kappa, x)
            gn = g / np.linalg.norm(g)
            frames.append(np.column_stack([J @ g, _K4 @ gn, g / (g @ g), -(J @ _K4 @ gn)]))
    F0 = frames[0]
    phases = np.empty(ts.size)
    trans = np.empty((ts.size, 2, 2))
    for k, (F, M) in enumerate(zip(frames, Ms)):
        phases[k] = _rho_phase(F)
        Yk = np.linalg.solve(F, M @ F0)
        trans[k] = Yk[np.ix_([1, 3], [1, 3])]
    W = -(np.unwrap(phases)[-1] - phases[0]) / (2 * math.pi)
    W_int = int(round(W))
    if abs(W - W_int) > 1e-3:
        raise FrameError(f"frame winding {W:.4f} not an integer; increase samples")
    P = trans[-1]
    tr = np.trace(P)
    if abs(tr) < 2.0:
        th_rho = -(np.unwrap([_rho_phase(S) for S in trans])[-1] - _rho_phase(trans[0]))
        th0 = math.copysign(math.acos(tr / 2.0), P[0, 1])
        k = round((th_rho - th0) / (2 * math.pi))
        rot = th0 + 2 * math.pi * k
        stab = "elliptic"
        transverse = 2 * math.floor(rot / (2 * math.pi)) + 1
    else:
        w, v = np.linalg.eig(P)
        v = np.real(v[:, int(np.argmax(np.abs(w)))])
        pts = trans @ v
        ang = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
        rot = -(ang[-1] - ang[0])
        stab = "hyperbolic" if tr > 0 else "inverse-hyperbolic"
        transverse = int(round(rot / math.pi))
    return MaslovData(2 * W_int + transverse, 2 * W_int, transverse, W_int, rot, stab)


# -- moments ---------------------------------------------------------------------------
def orbit_moment(orbit: PeriodicOrbit, spec: HamiltonianSpec, kappa: float, samples: int = 4096,
                 tol: float = 1e-12):
    """(m, Phi): time quadrature of dH/dkappa, and the line integral of a(q) . dq.

    Both integrands are periodic in t, so the trapezoid rule is spectrally
    accurate; dq/dt for the line integral comes from an FFT derivative of the
    sampled curve, independent of the equations of motion.
    """
    T = orbit.primitive_period
    seg = flow_segment(spec, kappa, orbit.x0, T, tol, dense=True)
    ts = np.arange(samples) * (T / samples)
    xs = seg.dense(ts)[: 2 * spec.n].T
    m = float(np.mean(spec.kappa_derivative(kappa, xs)) * T)
    q = xs[:, : spec.n]
    k = np.fft.fftfreq(samples, d=T / samples) * 2 * np.pi
    qdot = np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(q, axis=0), axis=0))
    a = spec.gauge(q)
    phi = float(np.mean(np.sum(a * qdot, axis=1)) * T)
    return m, phi


# -- search ----------------------------------------------------------------------------
def _newton(spec, kappa, mu, x0, T, tol=1e-12, maxit=NEWTON_MAXIT):
    """Gauss-Newton on (x0, T): closure, energy, and a phase condition."""
    n2 = 2 * spec.n
    x_ref = np.array(x0, dtype=float)
    f_ref = spec.vector_field(kappa, x_ref)
    x = x_ref.copy()
    scale = max(1.0, np.linalg.norm(x_ref))
    for it in range(maxit):
        seg = flow_segment(spec, kappa, x, T, tol)
        r_close = seg.x - x
        r = np.concatenate([r_close, [spec.hamiltonian(kappa, x) - mu, f_ref @ (x - x_ref)]])
        if np.linalg.norm(r_close) <= NEWTON_TOL * scale and abs(r[n2]) <= 1e-12 * abs(mu):
            return x, T, it
        Jac = np.zeros((n2 + 2, n2 + 1))
        Jac[:n2, :n2] = seg.monodromy - np.eye(n2)
        Jac[:n2, n2] = spec.vector_field(kappa, seg.x)
        Jac[n2, :n2] = spec.gradient(kappa, x)
        Jac[n2 + 1, :n2] = f_ref
        step = np.linalg.lstsq(Jac, -r, rcond=1e-12)[0]
        # damp steps that would jump far along the shell
        lim = 0.2 * scale
        nrm = np.linalg.norm(step[:n2])
        if nrm > lim:
            step *= lim / nrm
        x = x + step[:n2]
        T = T + step[n2]
        if not (np.all(np.isfinite(x)) and T > 0):
            break
    return None


def _mode_seeds(spec, kappa, mu):
    modes = normal_modes(spec, kappa)
    seeds = []
    for k, w in enumerate(modes.frequencies):
        v = modes.vectors[:, k]
        for phase in (1.0, 1j):
            y = np.real(phase * v)
            quad = y @ modes.hessian @ y
            if quad <= 0:
                continue
            c = math.sqrt(2.0 * (mu - modes.energy_min) / quad)
            seeds.append((modes.x_min + c * y, 2 * math.pi / w))
    return seeds


def _recurrence_candidates(spec, kappa, x0, horizon, scale, per_seed=4, tol=1e-10):
    seg = flow_segment(spec, kappa, x0, horizon, tol, dense=True)
    n = max(4000, int(200 * horizon))
    ts = np.linspace(0.0, horizon, n + 1)[1:]
    xs = seg.dense(ts)[: 2 * spec.n].T
    d = np.linalg.norm(xs - x0, axis=1)
    mins = np.nonzero((d[1:-1] < d[:-2]) & (d[1:-1] <= d[2:]))[0] + 1
    mins = mins[d[mins] < 0.25 * scale]
    mins = mins[np.argsort(d[mins])][:per_seed]
    return [(x0, float(ts[i])) for i in sorted(mins)]


def _primitive(spec, kappa, mu, x0, T, scale, tol, k_max=64):
    """Largest k with x(T/k) = x0, then refine at T/k."""
    seg = flow_segment(spec, kappa, x0, T, tol, dense=True)
    for k in range(k_max, 1, -1):
        x = seg.dense(T / k)[: 2 * spec.n]
        if np.linalg.norm(x - x0) <= 1e-6 * scale:
            out = _newton(spec, kappa, mu, x0, T / k, tol)
            if out is not None:
                return out[0], out[1]
    return x0, T


def find_periodic_orbits(spec: HamiltonianSpec, kappa: float, mu: float, tau: float,
                         n_seeds: int = 12, seed: int = 0, tol: float = 1e-12,
                         degeneracy_threshold: float = DEFAULT_DEGENERACY, extra_seeds=(),
                         scan_horizon: float | None = None) -> OrbitSearch:
    """Periodic orbits on H = mu with period <= tau, repetitions included.

    Seeds: analytic normal-mode orbits for quadratic specs, recurrences of
    trajectories started on the shell, and `extra_seeds` (x0, T) pairs, e.g.
    orbits found at a neighbouring kappa. Each candidate is refined by
    Gauss-Newton on (x0, T), reduced to its primitive period, deduplicated by
    (T*, S, orientation), and checked for degeneracy of the Poincare map.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    from .classical import check_noncritical

    check_noncritical(spec, kappa, mu)
    scale = math.sqrt(2.0 * (mu - spec.potential.min_value)) + 1.0
    candidates = list(extra_seeds)
    if spec.is_quadratic:
        candidates += _mode_seeds(spec, kappa, mu)
    horizon = scan_horizon or tau
    for x in energy_shell_samples(spec, kappa, mu, n_seeds, seed):
        try:
            candidates += _recurrence_candidates(spec, kappa, x, horizon, scale)
        except IntegrationError as exc:
            log.info("seed scan failed: %s", exc)
    prims = []
    dropped = 0
    notes = []

    def add(x0, T):
        nonlocal dropped
        out = _newton(spec, kappa, mu, x0, T, tol)
        if out is None:
            dropped += 1
            log.info("Newton did not converge from T = %.6g", T)
            return
        x, Tn, _ = out
        x, Tp = _primitive(spec, kappa, mu, x, Tn, scale, tol)
        if Tp > tau * (1 + 1e-9) or Tp < 1e-6:
            return
        seg = flow_segment(spec, kappa, x, Tp, tol)
        for p in prims:
            k = round(Tp / p[1])
            if k >= 2 and abs(Tp - k * p[1]) <= 1e-6 * Tp and abs(seg.action - k * p[2].action) <= 1e-6 * max(1.0, abs(seg.action)):
                return
            if (abs(p[1] - Tp) <= 1e-6 * Tp and abs(p[2].action - seg.action) <= 1e-6 * max(1.0, abs(seg.action))
                    and abs(p[2].area - seg.area) <= 1e-6 * max(1.0, abs(seg.area))):
                return
        prims.append((x, Tp, seg))

    for x0, T in candidates:
        add(np.asarray(x0, dtype=float), float(T))
    if kappa == 0.0:
        # time reversal (q, p) -> (q, -p) maps orbits to orbits at zero field
        for x, Tp, _ in list(prims):
            xr = x.copy()
            xr[spec.n:] *= -1
            add(xr, Tp)

    orbits, degenerate = [], []
    for x, Tp, seg in sorted(prims, key=lambda p: (p[1], p[2].action)):
        built = _build(spec, kappa, mu, x, Tp, seg, tau, degeneracy_threshold, tol)
        for o in built:
            (degenerate if o.degenerate else orbits).append(o)
    if degenerate:
        notes.append(f"{len(degenerate)} orbit entries with Poincare eigenvalue near 1 (non-isolated)")
    if dropped:
        notes.append(f"{dropped} candidates dropped (Newton non-convergence)")
    orbits.sort(key=lambda o: (o.primitive_period, o.action, o.repetitions))
    return OrbitSearch(orbits, degenerate, dropped, notes)


def _build(spec, kappa, mu, x, Tp, seg, tau, threshold, tol):
    f = spec.vector_field(kappa, x)
    g = spec.gradient(kappa, x)
    M1 = seg.monodromy
    P1, _ = poincare_reduce(M1, f, g)
    eig = np.linalg.eigvals(P1)
    degenerate = bool(np.any(np.abs(eig - 1.0) < threshold))
    if spec.n == 2 and not degenerate:
        mas = maslov_index(spec, kappa, x, Tp, tol=tol)
    else:
        mas = None
    out = []
    r_max = int(math.floor(tau / Tp * (1 + 1e-12)))
    for r in range(1, max(1, r_max) + 1):
        Mr = np.linalg.matrix_power(M1, r)
        Pr, det = poincare_reduce(Mr, f, g)
        eig_r = np.linalg.eigvals(Pr)
        degen_r = degenerate or bool(np.any(np.abs(eig_r - 1.0) < threshold))
        if mas is not None:
            nu, nu_long = mas.repeated(r)
            stab = mas.stability
        else:
            nu, nu_long, stab = 0, 0, "degenerate"
        out.append(PeriodicOrbit(
            x0=x, period=r * Tp, primitive_period=Tp, repetitions=r, action=r * seg.action,
            maslov=nu, maslov_longitudinal=nu_long, monodromy=Mr, poincare=Pr,
            det_one_minus_P=det, moment=seg.moment, flux=seg.flux, area=seg.area,
            energy=float(spec.hamiltonian(kappa, x)), kappa=kappa, stability=stab,
            degenerate=degen_r,
        ))
    return out


def orbit_table_csv(orbits, path):
    orbits = list(orbits)
    n2 = orbits[0].x0.size if orbits else 4
    n = n2 // 2
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_primitive", "repetitions", "T", "S", "maslov", "det_one_minus_P", "m_gamma",
                    "flux"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)])
        for o in orbits:
            w.writerow([repr(o.primitive_period), o.repetitions, repr(o.period), repr(o.action),
                        o.maslov, repr(o.det_one_minus_P), repr(o.moment), repr(o.flux)]
                       + [repr(float(v)) for v in o.x0])
