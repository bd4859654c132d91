"""Scenario runner: `magres run|validate|oracle`.

A scenario is one TOML file holding the Hamiltonian ([potential], [gauge]),
defaults for the thermodynamic state ([state]), one sweep ([grid]) and the
experiment kind ([scenario].kind). Grid points go to a process pool; rows are
collected in grid order, so the worker count never changes the output.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from . import __version__
from .model import HamiltonianSpec, SpecError, spec_from_dict

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("magres")

KINDS = ("spectrum", "thermo-sweep", "orbits", "compare-trace", "landau-limit", "tail-decay", "dhva-fft")
GRID_VARIABLES = ("hbar", "inv_hbar", "beta", "kappa", "mu", "tau")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid scenario file; carries a path:line anchor."""

    def __init__(self, message: str, path: str = "<config>", line: int | None = None):
        self.path, self.line = path, line
        anchor = f"{path}:{line}" if line else path
        super().__init__(f"{anchor}: {message}")


class NumericalFailure(RuntimeError):
    def __init__(self, where: str, exc: BaseException):
        self.where = where
        super().__init__(f"{where}: {type(exc).__name__}: {exc}")


# -- configuration -------------------------------------------------------------------
@dataclass(frozen=True)
class Grid:
    variable: str
    values: tuple

    @classmethod
    def from_dict(cls, d: dict, anchor) -> "Grid":
        var = d.get("variable")
        if var not in GRID_VARIABLES:
            raise anchor(f"grid variable must be one of {GRID_VARIABLES}, got {var!r}", "[grid]")
        if "values" in d:
            vals = [float(v) for v in d["values"]]
        else:
            try:
                lo, hi, count = float(d["min"]), float(d["max"]), int(d["count"])
            except KeyError as exc:
                raise anchor(f"grid needs 'values' or min/max/count (missing {exc})", "[grid]") from None
            spacing = d.get("spacing", "linear")
            if spacing == "linear":
                vals = np.linspace(lo, hi, count)
            elif spacing == "log":
                if lo <= 0 or hi <= 0:
                    raise anchor("log spacing needs positive bounds", "[grid]")
                vals = np.geomspace(lo, hi, count)
            else:
                raise anchor(f"spacing must be linear or log, got {spacing!r}", "[grid]")
            vals = [float(v) for v in vals]
        if not vals:
            raise anchor("empty grid", "[grid]")
        return cls(var, tuple(vals))


@dataclass(frozen=True, eq=False)
class Scenario:
    kind: str
    name: str
    spec: HamiltonianSpec
    grid: Grid
    state: dict
    options: dict
    seed: int
    source: str = ""
    path: str = "<config>"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip().startswith(needle):
            return i
    return None


def parse_scenario(text: str, path: str = "<config>", seed: int | None = None) -> Scenario:
    def anchor(msg, needle=None):
        line = _line_of(text, needle) if needle else None
        return ConfigError(msg, path, line or 1)

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = getattr(exc, "lineno", None)
        raise ConfigError(f"TOML parse error: {exc}", path, m) from None
    sc = data.get("scenario", {})
    kind = sc.get("kind")
    if kind not in KINDS:
        raise anchor(f"[scenario].kind must be one of {KINDS}, got {kind!r}", "kind")
    if "potential" not in data:
        raise ConfigError("missing [potential] section", path, 1)
    try:
        spec = spec_from_dict(data)
    except (SpecError, ValueError, TypeError) as exc:
        raise anchor(str(exc), "[potential") from None
    if "grid" not in data:
        raise ConfigError("missing [grid] section", path, 1)
    grid = Grid.from_dict(data["grid"], anchor)
    state = dict(data.get("state", {}))
    if "mu" not in state and grid.variable != "mu":
        raise anchor("[state] needs mu", "[state]")
    if not any(k in state for k in ("beta", "beta_exponent", "sigma")) and grid.variable != "beta":
        raise anchor("[state] needs beta, beta_exponent or sigma", "[state]")
    out = sc.get("output", kind.replace("-", "_") + ".csv")
    opts = dict(data.get("options", {}))
    opts.setdefault("output", out)
    if kind == "dhva-fft" and "input" not in opts:
        raise anchor("dhva-fft needs options.input (a CSV with a uniform inv_hbar column)", "[options]")
    return Scenario(kind, str(sc.get("name", kind)), spec, grid, state, opts,
                    int(seed if seed is not None else sc.get("seed", 0)), text, path, data)


def load_scenario(path, seed: int | None = None) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", str(p)) from None
    return parse_scenario(text, str(p), seed)


# -- per-point state ---------------------------------------------------------------------
def point_state(sc: Scenario, value: float):
    """ThermoState at one grid point; beta from beta, sigma/hbar or hbar^-beta_exponent."""
    from .thermo import ThermoState

    s = dict(sc.state)
    var = sc.grid.variable
    if var == "inv_hbar":
        s["hbar"] = 1.0 / value
    else:
        s[var] = value
    hbar = float(s.get("hbar", 1.0))
    if var != "beta":
        if "beta" in s:
            beta = float(s["beta"])
        elif "sigma" in s:
            beta = float(s["sigma"]) / hbar
        else:
            beta = hbar ** (-float(s["beta_exponent"]))
    else:
        beta = float(value)
    return ThermoState(hbar, beta, float(s["mu"]), float(s.get("kappa", 0.0)),
                       tau=_opt(s, "tau"), tau0=_opt(s, "tau0"), delta=_opt(s, "delta"),
                       epsilon=float(s.get("epsilon", 0.05)), sigma_max=float(s.get("sigma_max", 50.0)))


def _opt(d, k):
    return None if d.get(k) is None else float(d[k])


def _spectrum(sc, kappa, hbar, e_max):
    from .quantum import spectrum_for

    return spectrum_for(sc.spec, kappa, hbar, e_max, sc.options.get("basis_per_axis"))


def _e_max(state):
    from .thermo import TRUNCATION_MARGIN

    return state.mu + 1.05 * TRUNCATION_MARGIN / state.beta


def _chi(sc, state):
    """(chi, error, method): closed-form second derivatives when present, else Richardson."""
    from .thermo import susceptibility_exact, susceptibility_from_derivatives

    sp = _spectrum(sc, state.kappa, state.hbar, _e_max(state))
    if sp.d2E_dkappa2 is not None:
        return susceptibility_from_derivatives(sp, state), 0.0, "exact"
    dk = float(sc.options.get("dkappa", 1e-3))

    def at(k):
        return _spectrum(sc, k, state.hbar, _e_max(state))

    c1 = susceptibility_exact(at, state, dk)
    c2 = susceptibility_exact(at, state, dk, richardson=True)
    return c2, abs(c2 - c1), "richardson"


# -- experiments (one grid point each) ----------------------------------------------------
def _row_header(sc, value, state):
    return {sc.grid.variable: value, "hbar": state.hbar, "beta": state.beta, "kappa": state.kappa,
            "mu": state.mu, "regime": state.regime.name}


def _exp_spectrum(sc, value, state):
    sp = _spectrum(sc, state.kappa, state.hbar, float(sc.options.get("e_max", _e_max(state))))
    rows = []
    for j, e in enumerate(sp.energies):
        r = _row_header(sc, value, state)
        r.update(j=j, E=float(e), dE_dkappa=float(sp.dE_dkappa[j]) if sp.dE_dkappa is not None else "",
                 converged=int(True if sp.converged is None else bool(sp.converged[j])), method=sp.method)
        rows.append(r)
    return rows


def _exp_thermo(sc, value, state):
    from .thermo import grand_potential, magnetization_exact, particle_number, smeared_magnetization, split_mean_oscillating

    sp = _spectrum(sc, state.kappa, state.hbar, _e_max(state))
    chi, chi_err, how = _chi(sc, state)
    r = _row_header(sc, value, state)
    r.update(Omega=grand_potential(sp, state), N=particle_number(sp, state), M_exact=magnetization_exact(sp, state),
             chi=chi, chi_err=chi_err, method=f"exact-sum/{how}")
    if state.tau is not None:
        r["M_tau"] = smeared_magnetization(sp, state)
        if state.tau0 is not None and state.delta is not None:
            r["M_bar_num"], r["M_osc_num"] = split_mean_oscillating(sp, state)
    if sc.options.get("expansion", False):
        from .semiclassical import correction_omega, weyl_omega

        kw = dict(samples=int(sc.options.get("samples", 2_000_000)), seed=sc.seed, force=True)
        w = weyl_omega(sc.spec, state, **kw)
        c = correction_omega(sc.spec, state, **kw)
        r.update(Omega_weyl=w.evaluate(state.hbar), Omega_weyl_err=w.evaluate_error(state.hbar),
                 Omega_correction=c.evaluate(state.hbar), Omega_correction_err=c.evaluate_error(state.hbar),
                 expansion_method=w.method)
    return [r]


def _exp_landau(sc, value, state):
    from .semiclassical import LANDAU_COEFFICIENT, SPINLESS_LANDAU_COEFFICIENT, landau_susceptibility

    chi, chi_err, how = _chi(sc, state)
    kw = dict(samples=int(sc.options.get("samples", 4_000_000)), seed=sc.seed)
    disp = landau_susceptibility(sc.spec, state.mu, LANDAU_COEFFICIENT, **kw)
    spin = landau_susceptibility(sc.spec, state.mu, SPINLESS_LANDAU_COEFFICIENT, **kw)
    r = _row_header(sc, value, state)
    r.update(chi=chi, chi_err=chi_err, chi_L=disp.value, chi_L_err=disp.stderr,
             chi_L_spinless=spin.value, chi_L_spinless_err=spin.stderr,
             rel_err=abs(chi - disp.value) / abs(disp.value) if disp.value else "",
             rel_err_spinless=abs(chi - spin.value) / abs(spin.value) if spin.value else "",
             method=how)
    return [r]


def _exp_tail(sc, value, state):
    from .thermo import default_energy_window, tail_diagnostic

    if state.delta is None:
        state = state.replace(delta=default_energy_window(sc.spec.critical_values(), state.mu))
    sp = _spectrum(sc, state.kappa, state.hbar, _e_max(state))
    force = bool(sc.options.get("force", False))
    tail = tail_diagnostic(sp, state, force=force)
    r = _row_header(sc, value, state)
    r.update(tau0=state.tau0, delta=state.delta, tail=tail, method="quadrature")
    return [r]


def _exp_trace(sc, value, state, orbits):
    from .semiclassical import oscillating_magnetization, oscillating_susceptibility
    from .thermo import oscillating_part

    force = bool(sc.options.get("force", False))
    e_max = state.mu + state.delta
    sp = _spectrum(sc, state.kappa, state.hbar, e_max)
    m_num = oscillating_part(sp, state)
    m_f = oscillating_magnetization(orbits, state, force=force)
    dk = float(sc.options.get("dkappa", 1e-4))
    vals = [oscillating_part(_spectrum(sc, state.kappa + s * dk, state.hbar, e_max), state.replace(kappa=state.kappa + s * dk))
            for s in (-1, 1)]
    chi_num = (vals[1] - vals[0]) / (2 * dk)
    c = oscillating_susceptibility(orbits, state, force=force)
    c_r = oscillating_susceptibility(orbits, state, hbar_rescaled=True, force=force)
    r = _row_header(sc, value, state)
    r.update(inv_hbar=1.0 / state.hbar, M_osc_num=m_num, M_osc_formula=m_f.value, chi_osc_num=chi_num,
             chi_osc_formula=c.value, chi_osc_formula_rescaled=c_r.value, method="quadrature/orbit-sum")
    return [r]


def _point(args):
    sc, idx, value, extra = args
    state = point_state(sc, value)
    try:
        if sc.kind == "spectrum":
            return _exp_spectrum(sc, value, state)
        if sc.kind == "thermo-sweep":
            return _exp_thermo(sc, value, state)
        if sc.kind == "landau-limit":
            return _exp_landau(sc, value, state)
        if sc.kind == "tail-decay":
            return _exp_tail(sc, value, state)
        if sc.kind == "compare-trace":
            return _exp_trace(sc, value, state, extra)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        raise NumericalFailure(f"{sc.kind} at {sc.grid.variable}={value!r}", exc) from exc
    raise ValueError(sc.kind)


# -- dHvA spectroscopy -----------------------------------------------------------------
@dataclass
class PeakTable:
    frequency: np.ndarray
    amplitude: np.ndarray
    resolution: float
    nyquist: float

    def __len__(self):
        return self.frequency.size

    def rows(self):
        return [{"frequency": float(f), "amplitude": float(a)} for f, a in zip(self.frequency, self.amplitude)]


def dhva_fft(values, grid, nw: float = 4.0, rel_floor: float = 1e-4, pad: int = 8,
             min_points: int = 256) -> PeakTable:
    """Peaks of a DPSS-windowed FFT of a series sampled on a uniform 1/hbar grid.

    Frequencies are in cycles per unit of 1/hbar (a term cos(S/hbar) sits at
    S/2 pi); amplitudes are those of the matching cosine. Peaks below
    rel_floor times the largest are dropped as noise.
    """
    y = np.asarray(values, dtype=float)
    x = np.asarray(grid, dtype=float)
    if x.size != y.size or x.size < min_points:
        raise ValueError(f"need >= {min_points} samples on the grid, got {x.size}")
    d = np.diff(x)
    if np.ptp(d) > 1e-9 * abs(d.mean()):
        raise ValueError("grid is not uniform in 1/hbar")
    dx = float(d.mean())
    w = signal.windows.dpss(y.size, nw)
    n_fft = pad * (1 << int(math.ceil(math.log2(y.size))))
    spec = np.fft.rfft((y - y.mean()) * w, n_fft)
    amp = 2.0 * np.abs(spec) / w.sum()
    freq = np.fft.rfftfreq(n_fft, dx)
    top = float(amp.max()) if amp.size else 0.0
    if top <= 0.0 or not np.isfinite(top):
        return PeakTable(np.empty(0), np.empty(0), 1.0 / (x[-1] - x[0]), 0.5 / dx)
    idx, _ = signal.find_peaks(amp, height=rel_floor * top)
    return PeakTable(freq[idx], amp[idx], 1.0 / (x[-1] - x[0]), 0.5 / dx)


def fold_frequency(f, nyquist):
    """Alias of a frequency into [0, nyquist] for a uniformly sampled series."""
    f = np.mod(np.asarray(f, dtype=float), 2 * nyquist)
    return np.where(f > nyquist, 2 * nyquist - f, f)


# -- output --------------------------------------------------------------------------------
def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows, seed):
    path = Path(path)
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["seed"] + cols)
    for r in rows:
        w.writerow([seed] + [_fmt(r.get(c, "")) for c in cols])
    path.write_text(buf.getvalue())
    return path


def _versions():
    import scipy

    return {"magres": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _workers(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("MAGRES_WORKERS")
    return max(1, int(env)) if env else 1


def run_scenario(sc: Scenario, out_dir, workers: int = 1, force: bool = False) -> dict:
    """Run one scenario, write CSV(s) and manifest.json; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if force:
        sc.options["force"] = True
    manifest = {"name": sc.name, "kind": sc.kind, "config": sc.path, "config_sha256": sc.config_hash,
                "seed": sc.seed, "workers": workers, "versions": _versions(), "grid_variable": sc.grid.variable,
                "points": [], "warnings": [], "outputs": []}
    extra = None
    if sc.kind == "orbits":
        rows, notes = _run_orbits(sc)
        manifest["warnings"] += notes
        manifest["outputs"].append(str(write_csv(out_dir / sc.options["output"], rows, sc.seed).name))
        return _finish(manifest, out_dir)
    if sc.kind == "dhva-fft":
        return _finish(_run_dhva(sc, out_dir, manifest), out_dir)
    if sc.kind == "compare-trace":
        extra, notes = _trace_orbits(sc)
        manifest["warnings"] += notes
    for v in sc.grid.values:
        st = point_state(sc, v)
        tag = st.regime
        manifest["points"].append({"value": v, "regime": tag.name,
                                   "margins": {k: round(m, 12) for k, m in tag.margins.items()}})
    jobs = [(sc, i, v, extra) for i, v in enumerate(sc.grid.values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_point, jobs))
    else:
        parts = [_point(j) for j in jobs]
    rows = [r for p in parts for r in p]
    allowed = {"landau-limit": ("expansion", "mesoscopic", "intermediate"),
               "tail-decay": ("intermediate",), "compare-trace": ("mesoscopic", "intermediate")}
    for p in manifest["points"]:
        ok = allowed.get(sc.kind)
        if ok and p["regime"] not in ok:
            manifest["warnings"].append(f"{sc.grid.variable}={p['value']!r}: regime {p['regime']} outside {ok}")
    manifest["outputs"].append(str(write_csv(out_dir / sc.options["output"], rows, sc.seed).name))
    if sc.kind == "compare-trace" and len(rows) >= 256:
        peaks = []
        grid = [r["inv_hbar"] for r in rows]
        for col in ("M_osc_num", "M_osc_formula", "chi_osc_num", "chi_osc_formula", "chi_osc_formula_rescaled"):
            t = dhva_fft([r[col] for r in rows], grid, float(sc.options.get("nw", 4.0)))
            peaks += [{"series": col, **r, "resolution": t.resolution} for r in t.rows()]
        manifest["outputs"].append(str(write_csv(out_dir / "peaks.csv", peaks, sc.seed).name))
    return _finish(manifest, out_dir)


def _finish(manifest, out_dir):
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float))
    return manifest


def _orbit_rows(res, kappa, mu):
    rows = []
    for o in res.orbits + res.degenerate:
        r = {"kappa": kappa, "mu": mu, "T_primitive": o.primitive_period, "repetitions": o.repetitions,
             "T": o.period, "S": o.action, "maslov": o.maslov, "maslov_longitudinal": o.maslov_longitudinal,
             "det_one_minus_P": o.det_one_minus_P, "m_gamma": o.moment, "flux": o.flux,
             "stability": o.stability, "degenerate": int(o.degenerate)}
        for i, v in enumerate(o.x0):
            r[f"x0_{i}"] = float(v)
        rows.append(r)
    return rows


def _run_orbits(sc):
    from .orbits import find_periodic_orbits

    st0 = point_state(sc, sc.grid.values[0])
    tau = float(sc.options.get("orbit_tau", st0.tau or 10.0))
    rows, notes, seeds = [], [], []
    for v in sc.grid.values:  # sequential: each kappa re-seeds from the previous one
        st = point_state(sc, v)
        res = find_periodic_orbits(sc.spec, st.kappa, st.mu, tau, n_seeds=int(sc.options.get("n_seeds", 8)),
                                   seed=sc.seed, extra_seeds=seeds)
        seeds = [(o.x0, o.primitive_period) for o in res.orbits if o.repetitions == 1]
        rows += _orbit_rows(res, st.kappa, st.mu)
        notes += [f"{sc.grid.variable}={v!r}: {n}" for n in res.notes]
    return rows, notes


def _trace_orbits(sc):
    from .orbits import find_periodic_orbits

    st = point_state(sc, sc.grid.values[0])
    st.require("tau", "tau0", "delta")
    res = find_periodic_orbits(sc.spec, st.kappa, st.mu, 2.0 * st.tau, n_seeds=int(sc.options.get("n_seeds", 4)),
                               seed=sc.seed)
    notes = list(res.notes)
    if res.degenerate:
        notes.append(f"{len(res.degenerate)} degenerate orbits excluded from the trace sum")
    return res.orbits, notes


def _run_dhva(sc, out_dir, manifest):
    src = Path(sc.options["input"])
    if not src.is_absolute():
        src = Path(sc.path).parent / src
    with open(src, newline="") as fh:
        data = list(csv.DictReader(fh))
    grid_col = sc.options.get("grid_column", "inv_hbar")
    cols = sc.options.get("columns", ["M_osc_num"])
    grid = [float(r[grid_col]) for r in data]
    rows = []
    for col in cols:
        t = dhva_fft([float(r[col]) for r in data], grid, float(sc.options.get("nw", 4.0)),
                     float(sc.options.get("rel_floor", 1e-4)))
        rows += [{"series": col, **r, "resolution": t.resolution, "nyquist": t.nyquist} for r in t.rows()]
    manifest["outputs"].append(str(write_csv(out_dir / sc.options["output"], rows, sc.seed).name))
    return manifest


# -- oracle table ----------------------------------------------------------------------
def run_oracles(verbose: bool = False) -> list[tuple[str, bool, str]]:
    """Closed-form and brute-force checks; (name, passed, detail) per oracle."""
    from .classical import phase_space_volume
    from .model import isotropic_benchmark
    from .orbits import poincare_reduce
    from .quantum import assemble_and_diagonalize, fock_darwin_spectrum
    from .semiclassical import CORRECTION_CONSTANT, SPINLESS_LANDAU_COEFFICIENT, landau_susceptibility
    from .thermo import ThermoState, grand_potential
    from .semiclassical import correction_omega, weyl_omega

    out = []
    spec = isotropic_benchmark()
    fd = fock_darwin_spectrum(1.0, 1.0, 1.0, count=20)
    gal = assemble_and_diagonalize(spec, 1.0, 1.0, 30, n_levels=20, derivatives=False)
    err = float(np.max(np.abs(gal.energies - fd.energies) / fd.energies))
    out.append(("galerkin vs Fock-Darwin (20 levels)", err < 1e-8, f"max rel err {err:.2e}"))
    vol = phase_space_volume(spec, 0.5, 2.0, method="mc", samples=1 << 20)
    exact = phase_space_volume(spec, 0.5, 2.0).value
    z = abs(vol.value - exact) / vol.stderr
    out.append(("phase-space volume MC vs closed form", z < 4, f"{vol.value:.5f} vs {exact:.5f} ({z:.1f} se)"))
    chi = landau_susceptibility(spec, 2.0).value
    out.append(("Landau term, isotropic mu=2", abs(chi + 1 / 6) < 1e-12, f"{chi:.12f}"))
    th = 2 * math.pi * math.sqrt(2)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    M = np.eye(4)
    M[np.ix_([1, 3], [1, 3])] = R
    _, det = poincare_reduce(M, np.array([0, 0, 1.0, 0]), np.array([1.0, 0, 0, 0]))
    out.append(("det(1-P) of a rotation", abs(det - 4 * math.sin(th / 2) ** 2) < 1e-12, f"{det:.10f}"))
    hbar = 0.01
    st = ThermoState(hbar, hbar**-0.6, 2.0, 0.3)
    sp = fock_darwin_spectrum(1.0, 0.3, hbar, e_max=2.0 + 60 / st.beta)
    resid = grand_potential(sp, st) - weyl_omega(spec, st).evaluate(hbar) - correction_omega(spec, st).evaluate(hbar)
    out.append(("Omega - Weyl - correction at hbar=0.01", abs(resid) < 1e-6, f"residual {resid:.2e}"))
    out.append(("correction constant from Landau calibration", abs(CORRECTION_CONSTANT + 1 / 24) < 1e-15,
                f"C = {CORRECTION_CONSTANT:.15f} (c_L = {SPINLESS_LANDAU_COEFFICIENT:.6e})"))
    return out


# -- entry point -------------------------------------------------------------------------
def _parser():
    p = argparse.ArgumentParser(prog="magres", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        s = sub.add_parser(name)
        s.add_argument("config_path", nargs="?", help="scenario TOML")
        s.add_argument("--config", dest="config", help="scenario TOML")
        s.add_argument("--out", default="out")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--force", action="store_true", help="run outside the validity regime (warnings only)")
        s.add_argument("--verbose", "-v", action="store_true")
    o = sub.add_parser("oracle")
    o.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "oracle":
        res = run_oracles(args.verbose)
        width = max(len(n) for n, _, _ in res)
        for name, ok, detail in res:
            print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
        return EXIT_OK if all(ok for _, ok, _ in res) else EXIT_FAIL
    cfg = args.config or args.config_path
    if cfg is None:
        print("magres: a config path is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sc = load_scenario(cfg, args.seed)
    except ConfigError as exc:
        print(f"magres: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{sc.path}: ok ({sc.kind}, {len(sc.grid.values)} grid points over {sc.grid.variable})")
        return EXIT_OK
    try:
        man = run_scenario(sc, args.out, _workers(args.workers), args.force)
    except NumericalFailure as exc:
        print(f"magres: numerical failure in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"magres: numerical failure in {sc.kind}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for w in man["warnings"]:
        log.warning(w)
    print(f"wrote {', '.join(man['outputs'])} and manifest.json to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
