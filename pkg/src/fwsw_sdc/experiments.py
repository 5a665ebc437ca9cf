"""Experiment drivers: each ``run_*`` function returns a table plus a dict of
summary metrics, and never touches the file system itself."""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg_core import GmresConfig, inf_norm
from .pde_problems import (AcousticAdvectionSystem, BoussinesqParams, BoussinesqState,
                           BoussinesqSystem, MULTISCALE_X_FAST, MULTISCALE_X_SLOW,
                           buoyancy_cross_section, exact_acoustic_advection,
                           gravity_wave_initial_data, multiscale_initial_data, slow_packet,
                           standing_profile)
from .quadrature import NodeFamily, lebesgue_constant, make_rule
from .reference_schemes import LinearStepper
from .scalar_analysis import STABILITY_THRESHOLD, scan_stability, stiff_limit_table
from .sdc_engine import SdcConfig, UpdateMode, integrate, step
from .wave_dispersion import Scheme, SpatialSymbol, max_phase_speed_error, sweep_curve

INSTABILITY_THRESHOLD = 1e3


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    metrics: dict = field(default_factory=dict)
    unstable: bool = False


COMMON_DEFAULTS = {
    "M": 3,
    "K": 3,
    "family": "radau",
    "scheme": "sdc",
    "update_mode": "quadrature",
    "gmres_tol": 1e-5,
    "gmres_restart": 10,
    "tol_factor": 0.1,
}

DEFAULTS = {
    "nodes": {},
    "stability": {"fast_max": 12.0, "slow_max": 5.0, "resolution": 400},
    "stiff-limit": {"M_min": 2, "M_max": 14, "lambda_fast": [50.0, 100.0], "lambda_slow": 1.0,
                    "dt": 1.0},
    "dispersion": {"U": 0.05, "cs": 1.0, "dt": 1.0, "n_kappa": 256, "kappa_dt_max": math.pi,
                   "fd_order": 0},
    "converge": {"U": 0.1, "cs": 1.0, "T": 1.0, "C_fast": 5.0, "K_values": [3, 4, 5],
                 "steps": [8, 16, 32, 64], "waves": 3, "solver": "direct"},
    "residual-rates": {"U": 0.1, "dt": 0.025, "nx": 300, "C_fast": [3.75, 7.5, 11.25, 37.5],
                       "sweeps": 15, "waves": 3, "solver": "direct"},
    "multiscale": {"U": 0.05, "cs": 1.0, "nx": 512, "T": 3.0, "n_steps": 154,
                   "scheme": "all", "solver": "direct", "cutoff": 18},
    "boussinesq": {"K": 4, "dt": 30.0, "T": 3000.0, "nx": 300, "nz": 30, "U": 20.0, "cs": 300.0,
                   "N_buoy": 0.01, "height": 5000.0, "reference": False},
}


def defaults_for(experiment):
    if experiment not in DEFAULTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    merged = dict(COMMON_DEFAULTS)
    merged.update(DEFAULTS[experiment])
    return merged


def _coerce(name, value, default):
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)) or not value:
            raise ValueError(f"{name}: expected a non-empty list")
        return [_coerce(name, v, default[0]) for v in value]
    if isinstance(default, int):
        f = float(value)
        if f != int(f):
            raise ValueError(f"{name}: expected an integer, got {value!r}")
        return int(f)
    if isinstance(default, float):
        f = float(value)
        if not math.isfinite(f):
            raise ValueError(f"{name}: must be finite")
        return f
    return str(value)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    out: str = None

    def resolved(self):
        """All parameters with defaults filled in, coerced and checked.

        Everything is validated here so that a bad value fails before any
        computation starts.
        """
        base = defaults_for(self.experiment)
        unknown = sorted(set(self.params) - set(base))
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.experiment}: {', '.join(unknown)}")
        p = dict(base)
        for key, value in self.params.items():
            if value is not None:
                p[key] = _coerce(key, value, base[key])
        _check(self.experiment, p)
        return p


def _positive(p, *names):
    for n in names:
        values = p[n] if isinstance(p[n], list) else [p[n]]
        if any(not v > 0 for v in values):
            raise ValueError(f"{n} must be positive")


def _check(experiment, p):
    NodeFamily.parse(p["family"])
    UpdateMode(p["update_mode"])
    if p["M"] < 1 or p["K"] < 1:
        raise ValueError("M and K must be at least 1")
    _positive(p, "gmres_tol", "gmres_restart", "tol_factor")
    if p["tol_factor"] > 1:
        raise ValueError("tol_factor must lie in (0, 1]")
    if experiment == "stability":
        _positive(p, "fast_max", "slow_max", "resolution")
    elif experiment == "stiff-limit":
        if not 1 <= p["M_min"] <= p["M_max"]:
            raise ValueError("need 1 <= M_min <= M_max")
        _positive(p, "lambda_fast", "dt")
    elif experiment == "dispersion":
        Scheme(p["scheme"])
        _positive(p, "cs", "dt", "n_kappa", "kappa_dt_max")
        if not p["cs"] > p["U"] >= 0:
            raise ValueError("need cs > U >= 0")
        if p["fd_order"] not in (0, 2, 4, 6, 8):
            raise ValueError("fd_order must be 0 (exact) or an even order up to 8")
    elif experiment == "converge":
        _positive(p, "cs", "T", "C_fast", "K_values", "steps", "waves")
        _check_solver(p)
    elif experiment == "residual-rates":
        _positive(p, "dt", "nx", "C_fast", "sweeps", "waves")
        _check_solver(p)
    elif experiment == "multiscale":
        _positive(p, "cs", "nx", "T", "n_steps", "cutoff")
        if p["scheme"] not in ("all", "sdc", "midpoint", "bdf2"):
            raise ValueError("scheme must be all, sdc, midpoint or bdf2")
        _check_solver(p)
    elif experiment == "boussinesq":
        _positive(p, "dt", "T", "nx", "nz", "cs", "N_buoy", "height")
        if p["scheme"] not in ("sdc", "midpoint", "bdf2"):
            raise ValueError("scheme must be sdc, midpoint or bdf2")
        _steps(p["T"], p["dt"])


def _check_solver(p):
    if p["solver"] not in ("direct", "gmres"):
        raise ValueError("solver must be direct or gmres")


def _steps(T, dt):
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a whole number of steps of dt={dt}")
    return int(n)


def _gmres(p, tol=None):
    return GmresConfig(tolerance=tol if tol is not None else p["gmres_tol"], restart=p["gmres_restart"])


def _sdc_config(p, M=None, K=None, **kw):
    rule = make_rule(p["family"], M or p["M"])
    return SdcConfig(rule, K or p["K"], update_mode=p["update_mode"], inner_tol_factor=p["tol_factor"],
                     inner_tol_floor=p["gmres_tol"], **kw)


# ---------------------------------------------------------------------------


def run_nodes(p):
    rule = make_rule(p["family"], p["M"])
    rows = []
    for name in ("taus", "dtau", "q_end"):
        for i, v in enumerate(getattr(rule, name)):
            rows.append((name, i, 0, float(v)))
    for name in ("Q", "S", "Qfast", "Qslow"):
        a = getattr(rule, name)
        for i in range(rule.M):
            for j in range(rule.M):
                rows.append((name, i, j, float(a[i, j])))
    metrics = {
        "family": rule.family.value,
        "M": rule.M,
        "exactness_degree": rule.family.exactness_degree(rule.M),
        "lebesgue_constant": lebesgue_constant(rule),
        "norm_Q": inf_norm(rule.Q),
        "norm_Qfast": inf_norm(rule.Qfast),
        "norm_Qslow": inf_norm(rule.Qslow),
    }
    return ExperimentResult("nodes", ["matrix", "row", "col", "value"], rows, metrics)


def run_stability(p):
    rule = make_rule(p["family"], p["M"])
    grid = scan_stability(rule, p["K"], (0.0, p["fast_max"]), (0.0, p["slow_max"]), p["resolution"])
    rows = []
    for j, ls in enumerate(grid.axis_slow):
        for i, lf in enumerate(grid.axis_fast):
            rows.append((float(ls), float(lf), float(grid.modulus[i, j]), int(grid.mask_nonsense[i, j])))
    sensible = ~grid.mask_nonsense
    metrics = {"M": rule.M, "K": p["K"], "threshold": STABILITY_THRESHOLD,
               "stable_fraction": float(np.mean(grid.stable[sensible])),
               "max_abs_R": float(grid.modulus[sensible].max())}
    return ExperimentResult("stability", ["dt_lambda_slow", "dt_lambda_fast", "abs_R", "masked"],
                            rows, metrics)


def run_stiff_limit(p):
    table = stiff_limit_table(range(p["M_min"], p["M_max"] + 1), p["lambda_fast"], p["lambda_slow"],
                              p["dt"], NodeFamily.parse(p["family"]))
    rows = [(r["M"], r["lambda_fast"], r["spectral_radius"], r["inf_norm"]) for r in table]
    first = {}
    for r in table:
        key = "inf" if math.isinf(r["lambda_fast"]) else f"{r['lambda_fast']:g}"
        if r["spectral_radius"] > 1.0 and key not in first:
            first[key] = r["M"]
    return ExperimentResult("stiff-limit", ["M", "lambda_fast", "spectral_radius", "inf_norm"], rows,
                            {"first_M_above_one": first})


def run_dispersion(p):
    dt = p["dt"]
    kappas = np.linspace(0.0, p["kappa_dt_max"] / dt, p["n_kappa"] + 1)[1:]
    symbol = SpatialSymbol() if p["fd_order"] == 0 else SpatialSymbol.centered(p["fd_order"], 1.0)
    curve = sweep_curve(kappas, p["U"], p["cs"], dt, make_rule(p["family"], p["M"]), p["K"],
                        p["scheme"], symbol, p["update_mode"])
    rows = []
    for i, kappa in enumerate(kappas):
        for b in range(2):
            om = curve.omega[b, i]
            rows.append((float(kappa), b, float(om.real), float(om.imag), float(curve.phase_speed[b, i]),
                         float(curve.amplification[b, i]), float(curve.amplification_unit[b, i]),
                         int(curve.wrapped[b, i])))
    metrics = {"max_phase_speed_error": max_phase_speed_error(curve, p["U"], p["cs"]),
               "max_amplification": float(np.max(curve.amplification)),
               "wrapped_points": int(curve.wrapped.sum()),
               "ambiguous_points": int(curve.ambiguous.sum())}
    return ExperimentResult("dispersion", ["kappa", "branch", "re_omega", "im_omega", "phase_speed",
                                           "amplification", "amplification_unit", "wrapped"],
                            rows, metrics)


def observed_order(steps, errors):
    """Order from the two finest resolutions, ``log(e_{n-1}/e_n) / log(s_n/s_{n-1})``."""
    return float(math.log(errors[-2] / errors[-1]) / math.log(steps[-1] / steps[-2]))


def fitted_order(steps, errors):
    """Least-squares slope of ``-log(error)`` against ``log(steps)``."""
    return float(-np.polyfit(np.log(steps), np.log(errors), 1)[0])


def acoustic_error(n_steps, K, p):
    """Relative max-norm error of the convergence test for one resolution."""
    T, c = p["T"], p["cs"]
    dt = T / n_steps
    nx = int(round(p["C_fast"] * n_steps / (c * T)))
    sys = AcousticAdvectionSystem(nx, p["U"], c, solver=p["solver"], gmres=_gmres(p))
    x = sys.x
    profile = lambda s: standing_profile(s, p["waves"])  # noqa: E731
    u0 = np.concatenate((np.zeros(nx), profile(x)))
    u, _ = integrate(u0, sys, _sdc_config(p, K=K), dt, n_steps)
    ue, pe = exact_acoustic_advection(profile, p["U"], c, T, x)
    exact = np.concatenate((ue, pe))
    return nx, float(np.max(np.abs(u - exact)) / np.max(np.abs(exact)))


def run_converge(p):
    steps = sorted(p["steps"])
    rows = []
    metrics = {"observed_order": {}, "fitted_order": {}}
    unstable = False
    for K in p["K_values"]:
        errors = []
        for n in steps:
            nx, err = acoustic_error(n, K, p)
            if not err < INSTABILITY_THRESHOLD:
                rows.append((K, n, nx, p["T"] / n, float("nan"), "unstable"))
                unstable = True
                break
            errors.append(err)
            rows.append((K, n, nx, p["T"] / n, err, "ok"))
        if len(errors) >= 2:
            metrics["observed_order"][str(K)] = observed_order(steps[:len(errors)], errors)
            metrics["fitted_order"][str(K)] = fitted_order(steps[:len(errors)], errors)
    return ExperimentResult("converge", ["K", "n_steps", "nx", "dt", "rel_error", "status"], rows, metrics,
                            unstable)


def residual_history(c_s, p):
    """Residual norms (initial plus one per sweep) of a single SDC step."""
    nx = p["nx"]
    sys = AcousticAdvectionSystem(nx, p["U"], c_s, solver=p["solver"], gmres=_gmres(p))
    u0 = np.concatenate((np.zeros(nx), standing_profile(sys.x, p["waves"])))
    res = step(u0, sys, _sdc_config(p, K=p["sweeps"]), p["dt"])
    return np.array(res.residuals)


def run_residual_rates(p):
    dx = 1.0 / p["nx"]
    rows = []
    metrics = {"mean_ratio": {}, "decreasing_sweeps": {}}
    for C in p["C_fast"]:
        c_s = C * dx / p["dt"]
        r = residual_history(c_s, p)
        ratios = r[1:] / r[:-1]
        for k, (res, ratio) in enumerate(zip(r[1:], ratios), start=1):
            rows.append((c_s, C, k, float(res), float(ratio)))
        metrics["mean_ratio"][f"{C:g}"] = float(np.mean(ratios))
        metrics["decreasing_sweeps"][f"{C:g}"] = int(np.sum(ratios < 1.0))
    return ExperimentResult("residual-rates", ["c_s", "C_fast", "sweep", "residual", "ratio"], rows, metrics)


# ---------------------------------------------------------------------------
# multi-scale diagnostics


def scale_split(p, cutoff, length=1.0):
    """Split a periodic profile into parts below and at/above ``cutoff`` cycles per ``length``."""
    n = len(p)
    P = np.fft.fft(p)
    freq = np.abs(np.fft.fftfreq(n, d=length / n)) * length
    high = np.fft.ifft(np.where(freq >= cutoff, P, 0.0)).real
    return p - high, high


def hilbert_envelope(h):
    """Amplitude envelope of a periodic oscillatory signal via its analytic signal."""
    n = len(h)
    H = np.fft.fft(h)
    freq = np.fft.fftfreq(n)
    gain = np.where(freq > 0, 2.0, np.where(freq == 0, 1.0, 0.0))
    if n % 2 == 0:
        gain[n // 2] = 1.0
    return np.abs(np.fft.ifft(H * gain))


def periodic_centroid(x, weight, length=1.0):
    """Centre of mass of a non-negative weight on a periodic interval."""
    z = np.sum(weight * np.exp(2j * np.pi * x / length))
    return float(np.mod(np.angle(z) * length / (2.0 * np.pi), length))


class _PacketTracker:
    """Accumulates the displacement of the fast packet step by step."""

    def __init__(self, x, p0, cutoff):
        self.x = x
        self.cutoff = cutoff
        self.position = periodic_centroid(x, scale_split(p0, cutoff)[1] ** 2)
        self.displacement = 0.0

    def __call__(self, p):
        c = periodic_centroid(self.x, scale_split(p, self.cutoff)[1] ** 2)
        self.displacement += (c - self.position + 0.5) % 1.0 - 0.5
        self.position = c


def multiscale_run(scheme, p, M=None, K=None):
    """Final pressure and diagnostics of one multi-scale trajectory."""
    nx, n = p["nx"], p["n_steps"]
    dt = p["T"] / n
    sys = AcousticAdvectionSystem(nx, p["U"], p["cs"], solver=p["solver"], gmres=_gmres(p))
    u0 = multiscale_initial_data(nx).to_vector()
    x = sys.x
    tracker = _PacketTracker(x, u0[nx:], p["cutoff"])
    if scheme == "sdc":
        u, _ = integrate(u0, sys, _sdc_config(p, M, K), dt, n, callback=lambda k, v, r: tracker(v[nx:]))
    else:
        stepper = LinearStepper(scheme, sys, dt, tol=p["gmres_tol"] if p["solver"] == "gmres" else None)
        u = stepper.run(u0, n, callback=lambda k, v: tracker(v[nx:]))
    pressure = u[nx:]
    metrics = multiscale_metrics(x, u0[nx:], pressure, p, tracker.displacement)
    return pressure, metrics


def multiscale_metrics(x, p_initial, p_final, p, fast_displacement):
    slow0, fast0 = scale_split(p_initial, p["cutoff"])
    slow, fast = scale_split(p_final, p["cutoff"])
    travel = (p["U"] + p["cs"]) * p["T"]
    env0 = hilbert_envelope(fast0).max()
    return {
        "fast_envelope_ratio": float(hilbert_envelope(fast).max() / env0),
        "fast_l2_ratio": float(np.linalg.norm(fast) / np.linalg.norm(fast0)),
        "fast_displacement": float(fast_displacement),
        "fast_exact_displacement": float(travel),
        "slow_peak": float(slow.max() / slow0.max()),
        "slow_centroid": periodic_centroid(x, np.clip(slow, 0.0, None) ** 2),
        "slow_exact_centroid": float(np.mod(MULTISCALE_X_SLOW + travel, 1.0)),
        "slow_max_error": float(np.max(np.abs(slow - slow_packet(x, MULTISCALE_X_SLOW + travel)))),
        "fast_initial_centroid": MULTISCALE_X_FAST,
    }


MULTISCALE_SCHEMES = (("sdc-M2-K2", "sdc", 2, 2), ("sdc-M3-K4", "sdc", 3, 4),
                      ("midpoint", "midpoint", None, None), ("bdf2", "bdf2", None, None))


def run_multiscale(p):
    if p["scheme"] == "all":
        runs = MULTISCALE_SCHEMES
    elif p["scheme"] == "sdc":
        runs = ((f"sdc-M{p['M']}-K{p['K']}", "sdc", p["M"], p["K"]),)
    else:
        runs = ((p["scheme"], p["scheme"], None, None),)
    x = np.arange(p["nx"]) / p["nx"]
    travel = (p["U"] + p["cs"]) * p["T"]
    profiles = {"slow-reference": slow_packet(x, MULTISCALE_X_SLOW + travel)}
    metrics = {}
    for label, scheme, M, K in runs:
        profiles[label], metrics[label] = multiscale_run(scheme, p, M, K)
    rows = [(label, float(xi), float(v)) for label, prof in profiles.items() for xi, v in zip(x, prof)]
    unstable = any(not np.all(np.isfinite(prof)) or np.max(np.abs(prof)) > INSTABILITY_THRESHOLD
                   for prof in profiles.values())
    return ExperimentResult("multiscale", ["scheme", "x", "p"], rows, metrics, unstable)


# ---------------------------------------------------------------------------


def boussinesq_params(p, gmres=None):
    return BoussinesqParams(U=p["U"], c_s=p["cs"], N_buoy=p["N_buoy"], Nx=p["nx"], Nz=p["nz"],
                            gmres=gmres or _gmres(p))


def boussinesq_trajectory(p, scheme=None, M=None, K=None, dt=None, gmres_tol=None):
    """Final state and solver counters of one Boussinesq run."""
    scheme = scheme or p["scheme"]
    dt = dt or p["dt"]
    params = boussinesq_params(p, _gmres(p, gmres_tol))
    sys = BoussinesqSystem(params)
    u0 = gravity_wave_initial_data(params).to_vector()
    n = _steps(p["T"], dt)
    if scheme == "sdc":
        cfg = _sdc_config(p, M, K)
        if gmres_tol is not None:
            cfg = replace(cfg, inner_tol_floor=gmres_tol)
        u, totals = integrate(u0, sys, cfg, dt, n)
        counts = totals["sweep_counts"]
        per_sweep = [float(i) / (c * cfg.rule.M) if c else 0.0
                     for i, c in zip(totals["sweep_iterations"], counts)]
        info = {"steps": n, "M": cfg.rule.M, "K": cfg.K, "solves": int(totals["implicit_solves"]),
                "gmres_total": int(totals["inner_iterations"]), "per_sweep_mean_iterations": per_sweep}
    else:
        stepper = LinearStepper(scheme, sys, dt, tol=params.gmres.tolerance)
        u = stepper.run(u0, n)
        info = {"steps": n, "solves": stepper.solves, "gmres_total": stepper.iterations}
    info["avg_per_call"] = info["gmres_total"] / info["solves"] if info["solves"] else 0.0
    return BoussinesqState.from_vector(u, params), params, info


def run_boussinesq(p):
    state, params, info = boussinesq_trajectory(p)
    section = buoyancy_cross_section(state, params, p["height"])
    b_max0 = 0.01
    unstable = not np.all(np.isfinite(state.b)) or np.max(np.abs(state.b)) > INSTABILITY_THRESHOLD * b_max0
    metrics = dict(info)
    metrics["scheme"] = p["scheme"]
    metrics["dt"] = p["dt"]
    metrics["error"] = None
    columns = ["x", "b"]
    if p["reference"] and not unstable:
        ref, _, _ = boussinesq_trajectory(p, "sdc", 3, 5, p["dt"] / 10.0, 1e-10)
        ref_section = buoyancy_cross_section(ref, params, p["height"])
        metrics["error"] = float(np.max(np.abs(state.b - ref.b)) / np.max(np.abs(ref.b)))
        rows = [(float(x), float(b), float(r)) for x, b, r in zip(params.x, section, ref_section)]
        columns.append("b_reference")
    else:
        rows = [(float(x), float(b)) for x, b in zip(params.x, section)]
    return ExperimentResult("boussinesq", columns, rows, metrics, unstable)


RUNNERS = {
    "nodes": run_nodes,
    "stability": run_stability,
    "stiff-limit": run_stiff_limit,
    "dispersion": run_dispersion,
    "converge": run_converge,
    "residual-rates": run_residual_rates,
    "multiscale": run_multiscale,
    "boussinesq": run_boussinesq,
}


def run(cfg):
    """Validate ``cfg`` and run its experiment."""
    params = cfg.resolved()
    return RUNNERS[cfg.experiment](params)
