"""Large-population convergence studies.

Every study is a pure function of its :class:`StudyConfig`; ``threads``
only sets how many replication chunks run at once.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.optimize import least_squares

from .. import rng
from ..chaos.bundles import CoefficientBundle, EmpiricalMeasure
from ..chaos.hamiltonian import lq_hamiltonian, minimize_hamiltonian
from ..chaos.particles import PicardSettings, solve_mkv_fbsde, solve_particle_fbsde
from ..chaos.residual import fbsde_residual
from ..errors import ConfigError, InsufficientReplications
from ..lq.control import EquilibriumControlMap
from ..lq.cooperative import (cooperative_system, driver_identity_violation, mfg_particle_system,
                              solve_cooperative_lq)
from ..lq.mkv import solve_mkv_lq, state_variance
from ..lq.nplayer import solve_nplayer_lq_symmetric
from ..metrics import (Gaussian, QuantileReference, empirical_tail, mean_ci, theoretical_rate,
                       wasserstein2_1d)
from .config import STUDIES, StudyConfig
from .engine import (brownian_increments, cooperative_controls, initial_states, run_chunked,
                     simulate_linear_coupled, simulate_mfg_copies, simulate_nash_coupled)
from .report import StudyReport

# gaps at or below this level are numerical zeros (identical coefficients up to ODE tolerance)
GAP_FLOOR = 1e-16
MAX_RELATIVE_HALF_WIDTH = 0.3
NASH_SLOPE_WINDOW = (-1.25, -0.75)
NASH_MIN_R2 = 0.98
OFFDIAG_SLOPE_WINDOW = (-1.3, -0.7)
OFFDIAG_EXACT_ZERO = 1e-12
COOP_MAX_SLOPE = -0.4
COOP_MIN_R2 = 0.95
IDENTITY_TOL = 1e-14
W2_MAX_SLOPE = -0.4
MASTER_MAX_RATIO = 0.25
FBSDE_RESIDUAL_TOL = 1e-6
FBSDE_SE_MULTIPLE = 3.0


# ---------------------------------------------------------------- helpers

def _picard(cfg: StudyConfig) -> PicardSettings:
    return PicardSettings(max_iter=cfg.picard_max_iter, tol=cfg.picard_tol, degree=cfg.picard_degree)


def _time_label(t: float) -> str:
    return f"t={t:.6g}"


def _lq_only(cfg: StudyConfig):
    if cfg.bundle is not None:
        raise ConfigError(f"study {cfg.study!r} runs on the closed-form LQ path only; unset 'bundle'")


def _need_players(cfg: StudyConfig, minimum=2):
    if cfg.N_list[0] < minimum:
        raise ConfigError(f"study {cfg.study!r} needs N >= {minimum}")


def _rate_columns(Ns, k: float, dims: dict) -> tuple:
    """Overlay columns ``sum_M r_{N,M,k}`` for each named dimension set."""
    cols, units = {}, {}
    for name, Ms in dims.items():
        cols[name] = np.array([sum(theoretical_rate(N=N, M=M, k=k) for M in Ms) for N in Ns])
        units[name] = "dimensionless, exact"
    return cols, units


def _estimate_columns(label: str, times, samples, unit: str) -> tuple:
    """Mean and CI half-width columns for ``samples[N_index] -> (reps, n_times)``."""
    means = np.array([s.mean(axis=0) for s in samples])
    halves = np.array([mean_ci(s, axis=0)[1] for s in samples])
    cols, units = {}, {}
    for j, t in enumerate(times):
        name = f"{label}[{_time_label(t)}]"
        cols[name] = means[:, j]
        cols[f"{name}_ci95"] = halves[:, j]
        units[name] = unit
        units[f"{name}_ci95"] = f"{unit}, 95% normal half-width"
    return cols, units, means, halves


def _check_replications(study: str, Ns, times, means, halves):
    for i, N in enumerate(Ns):
        for j, t in enumerate(times):
            m, h = means[i, j], halves[i, j]
            if m > GAP_FLOOR and h > MAX_RELATIVE_HALF_WIDTH * m:
                raise InsufficientReplications(
                    f"{study}: CI half-width {h:.3e} exceeds {MAX_RELATIVE_HALF_WIDTH:.0%} of the estimate "
                    f"{m:.3e} at N = {N}, {_time_label(t)}; raise 'replications'")


def _fit_times(report: StudyReport, label: str, Ns, times, means, halves) -> dict:
    """Fit every evaluation time whose estimates are all above the floor."""
    fits = {}
    for j, t in enumerate(times):
        name = f"{label}[{_time_label(t)}]"
        if np.all(means[:, j] > GAP_FLOOR) and len(Ns) >= 4:
            fits[t] = report.add_fit(name, Ns, means[:, j], halves[:, j])
        else:
            report.notes.append(f"{name}: no slope fit (values at the numerical floor or fewer than 4 N)")
    return fits


def _separated_decrease(means, halves, j) -> bool:
    """Largest-N interval lies strictly below the smallest-N interval."""
    return bool(means[-1, j] + halves[-1, j] < means[0, j] - halves[0, j])


def _lq_inputs(spec, cfg: StudyConfig, grid, reps, N):
    X0 = initial_states(spec.mu0_mean, spec.mu0_std, cfg.seed, reps, N)
    dW = brownian_increments(grid, cfg.seed, reps, N, cfg.noise_substeps)
    return X0, dW


def _nash_samples(spec, cfg: StudyConfig, threads: int, keep_alpha=False) -> tuple:
    """Coupled Nash-versus-limit simulations for every ``N`` (closed form)."""
    grid, nodes = cfg.grid, cfg.eval_nodes()
    mfg = solve_mkv_lq(spec, grid)
    results, decs = [], []
    for N in cfg.N_list:
        nash = solve_nplayer_lq_symmetric(spec, N, grid)
        decs.append(nash)

        def work(reps, N=N, nash=nash):
            X0, dW = _lq_inputs(spec, cfg, grid, reps, N)
            return simulate_nash_coupled(spec, nash, mfg, X0, dW, nodes, keep_alpha=keep_alpha)

        results.append(run_chunked(work, cfg.replications, cfg.chunk_size, threads))
    return mfg, decs, results


def _bundle_with_control(cfg: StudyConfig) -> CoefficientBundle:
    cb = cfg.make_bundle()
    if cb.control is None:
        raise ConfigError(f"bundle {cb.name!r} has no control map")
    return cb


def _picard_clouds(cfg: StudyConfig, threads: int, reduce) -> tuple:
    """Particle clouds with frozen-flow shadows for every ``N``.

    ``reduce(cloud, nodes)`` maps a chunk's cloud to a dict of per-replication
    arrays, so whole clouds are never kept.
    """
    cb = _bundle_with_control(cfg)
    grid, nodes, settings = cfg.grid, cfg.eval_nodes(), _picard(cfg)
    mkv = solve_mkv_fbsde(cb, cfg.law_particles, grid, settings, cfg.seed)
    results = []
    for N in cfg.N_list:
        def work(reps, N=N):
            cloud = solve_particle_fbsde(cb, N, grid, settings, cfg.seed, replications=reps, flow=mkv.flow)
            return reduce(cloud, nodes)

        results.append(run_chunked(work, cfg.replications, cfg.chunk_size, threads))
    return cb, mkv, results


def _control_gap(cloud, nodes):
    d = cloud.alpha[..., nodes] - cloud.shadow_alpha[..., nodes]
    return {"gap": np.mean(d**2, axis=1)}


# ---------------------------------------------------------------- studies

def nash_gap_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Mean squared gap between Nash and mean-field equilibrium controls.

    Closed-form path (no bundle): symmetric N-player decoupling against the
    limiting decoupling on shared initials and noise.  Picard path: the
    bundle's particle system against its frozen-flow copies.
    """
    _need_players(cfg)
    report = StudyReport(cfg.study, cfg)
    times = cfg.grid.times[cfg.eval_nodes()]
    Ns = cfg.N_list
    if cfg.bundle is None:
        _, _, results = _nash_samples(cfg.spec, cfg, threads)
        report.notes.append("path: closed-form LQ decouplings, synchronous coupling")
    else:
        cb, mkv, results = _picard_clouds(cfg, threads, _control_gap)
        report.notes.append(f"path: Picard regression on bundle {cb.name!r}, "
                            f"{mkv.outer_iterations} outer flow iterations")
    cols, units, means, halves = _estimate_columns("gap", times, [r["gap"] for r in results], "control^2")
    _check_replications(cfg.study, Ns, times, means, halves)
    rates, rate_units = _rate_columns(Ns, cfg.k_moment, {"rate_r[M=2]+r[M=1]": (2, 1)})
    rates["rate_N^-1"] = 1.0 / np.asarray(Ns, dtype=float)
    rate_units["rate_N^-1"] = "dimensionless, exact"
    report.add_table("gap", {"N": np.asarray(Ns), **cols, **rates}, {**units, **rate_units},
                     replications=cfg.replications, n_steps=cfg.n_steps, k_moment=cfg.k_moment)
    fits = _fit_times(report, "gap", Ns, times, means, halves)
    lo, hi = NASH_SLOPE_WINDOW
    for j, t in enumerate(times):
        label = _time_label(t)
        if t in fits:
            f = fits[t]
            report.checks[f"slope[{label}] in [{lo}, {hi}], R^2 >= {NASH_MIN_R2}"] = bool(
                lo <= f.slope <= hi and f.r2 >= NASH_MIN_R2)
            report.checks[f"gap[{label}] N={Ns[-1]} below N={Ns[0]}"] = _separated_decrease(means, halves, j)
        else:
            report.checks[f"gap[{label}] at floor"] = bool(np.all(means[:, j] <= GAP_FLOOR))
    return report


def offdiag_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """``E sup_t |Y^{12}_t|^2`` along simulated Nash paths."""
    _lq_only(cfg)
    _need_players(cfg)
    report = StudyReport(cfg.study, cfg)
    Ns = cfg.N_list
    _, decs, results = _nash_samples(cfg.spec, cfg, threads)
    sups = [r["offdiag_sup"][:, None] for r in results]
    cols, units, means, halves = _estimate_columns("sup_Y12_sq", [cfg.grid.T], sups, "adjoint^2")
    cols = {k.replace(f"[{_time_label(cfg.grid.T)}]", ""): v for k, v in cols.items()}
    units = {k.replace(f"[{_time_label(cfg.grid.T)}]", ""): v for k, v in units.items()}
    coeff_max = np.array([np.max(np.abs(d.sym[:, 3:])) for d in decs])
    report.add_table("offdiag", {"N": np.asarray(Ns), **cols, "max_abs_defg": coeff_max,
                                 "rate_N^-1": 1.0 / np.asarray(Ns, dtype=float)},
                     {**units, "max_abs_defg": "adjoint per state, exact",
                      "rate_N^-1": "dimensionless, exact"},
                     replications=cfg.replications, n_steps=cfg.n_steps)
    if np.all(means[:, 0] <= OFFDIAG_EXACT_ZERO):
        report.notes.append("off-diagonal adjoints vanish identically")
        report.checks[f"sup |Y12|^2 <= {OFFDIAG_EXACT_ZERO}"] = True
        return report
    _check_replications(cfg.study, Ns, [cfg.grid.T], means, halves)
    if len(Ns) >= 4:
        fit = report.add_fit("sup_Y12_sq", Ns, means[:, 0], halves[:, 0])
        lo, hi = OFFDIAG_SLOPE_WINDOW
        report.checks[f"slope in [{lo}, {hi}]"] = bool(lo <= fit.slope <= hi)
    monotone = all(means[i + 1, 0] <= means[i, 0] + halves[i, 0] + halves[i + 1, 0] for i in range(len(Ns) - 1))
    report.checks["non-increasing in N within CI"] = bool(monotone)
    report.notes.append(f"max |d, e, f, g| over N: {coeff_max.max():.6g} (bounded coefficients)")
    return report


def concentration_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """W2 distance between the empirical law of the Nash controls and the
    limiting control law, its tails, and Lipschitz-observable deviations."""
    _need_players(cfg)
    if cfg.replications < 100:
        raise ConfigError("tail studies need at least 100 replications")
    report = StudyReport(cfg.study, cfg)
    grid, nodes = cfg.grid, cfg.eval_nodes()
    times = grid.times[nodes]
    Ns = cfg.N_list
    gaussians = None
    if cfg.bundle is None:
        spec = cfg.spec
        if spec.mu0_std != 0:
            report.notes.append("initial law is not a point mass: the tail bound's hypothesis does not hold")
        mfg, _, results = _nash_samples(spec, cfg, threads, keep_alpha=True)
        X0 = initial_states(spec.mu0_mean, spec.mu0_std, cfg.seed, [0], cfg.reference_size,
                            rng.CHANNEL_REFERENCE)
        dW = brownian_increments(grid, cfg.seed, [0], cfg.reference_size, cfg.noise_substeps,
                                 rng.CHANNEL_REFERENCE_NOISE)
        reference = simulate_mfg_copies(mfg, X0, dW, nodes)[:, 0]
        var = state_variance(mfg)
        gain = abs(spec.B / (2 * spec.R))
        gaussians = [Gaussian(float(mfg.control(k, mfg.m[k])), float(gain * abs(mfg.eta[k]) * np.sqrt(var[k])))
                     for k in nodes]
        report.notes.append(f"reference: {cfg.reference_size} limiting copies on dedicated streams")
    else:
        cb = _bundle_with_control(cfg)
        if cb.x0_std != 0:
            report.notes.append("initial law is not a point mass: the tail bound's hypothesis does not hold")

        def reduce(cloud, nodes):
            return {"alpha": np.transpose(cloud.alpha[..., nodes], (0, 2, 1))}

        cb, mkv, results = _picard_clouds(cfg, threads, reduce)
        reference = mkv.cloud.alpha[0][:, nodes].T
        report.notes.append(f"reference: {cfg.law_particles} law particles of the flow fixed point")
    refs = [QuantileReference(r) for r in reference]
    ref_std = reference.std(axis=1)
    scale = ref_std if cfg.threshold_units == "std" else np.ones(len(nodes))

    w2 = []
    w2_gauss = []
    tail_rows = {k: [] for k in ("N", "t", "observable", "threshold", "a", "count", "n", "estimate",
                                 "wilson_low", "wilson_high")}
    tails = {}
    for N, res in zip(Ns, results):
        alpha = res["alpha"]
        w = np.column_stack([refs[j].distances(alpha[:, j]) for j in range(len(nodes))])
        w2.append(w)
        if gaussians is not None:
            w2_gauss.append(np.array([[wasserstein2_1d(alpha[r, j], gaussians[j]) for j in range(len(nodes))]
                                      for r in range(alpha.shape[0])]))
        for j, t in enumerate(times):
            first = alpha[:, j, 0]
            total = alpha[:, j].sum(axis=-1) / np.sqrt(N)
            observables = {"w2": w[:, j], "first": first - first.mean(), "normalized_sum": total - total.mean()}
            for thr in cfg.thresholds:
                a = thr * scale[j]
                for obs, values in observables.items():
                    est = empirical_tail(values, a)
                    tails[(N, j, thr, obs)] = est
                    for key, v in (("N", N), ("t", t), ("observable", obs), ("threshold", thr), ("a", a),
                                   ("count", est.count), ("n", est.n), ("estimate", est.estimate),
                                   ("wilson_low", est.low), ("wilson_high", est.high)):
                        tail_rows[key].append(v)

    cols, units, means, halves = _estimate_columns("E_W2", times, w2, "control")
    if w2_gauss:
        gcols, gunits, _, _ = _estimate_columns("E_W2_gaussian", times, w2_gauss, "control")
        cols.update(gcols)
        units.update(gunits)
    rates, rate_units = _rate_columns(Ns, cfg.k_moment, {"rate_N^-1+r[M=2]+r[M=1]": (2, 1)})
    rates["rate_N^-1+r[M=2]+r[M=1]"] += 1.0 / np.asarray(Ns, dtype=float)
    report.add_table("w2", {"N": np.asarray(Ns), **cols, **rates}, {**units, **rate_units},
                     replications=cfg.replications, reference_std=" ".join(repr(float(s)) for s in ref_std))
    tail_cols = {k: np.array(v, dtype=object if k == "observable" else None) for k, v in tail_rows.items()}
    report.add_table("tails", tail_cols, {"a": "control (threshold in absolute units)",
                                          "estimate": "probability", "wilson_low": "probability, Wilson 95%",
                                          "wilson_high": "probability, Wilson 95%"},
                     threshold_units=cfg.threshold_units)
    fits = _fit_times(report, "E_W2", Ns, times, means, halves)
    for j, t in enumerate(times):
        label = _time_label(t)
        if t in fits:
            report.checks[f"E_W2[{label}] slope <= {W2_MAX_SLOPE}"] = bool(fits[t].slope <= W2_MAX_SLOPE)
        for thr in cfg.thresholds:
            small, large = tails[(Ns[0], j, thr, "w2")], tails[(Ns[-1], j, thr, "w2")]
            report.checks[f"tail[{label}, a={thr:g}] N={Ns[-1]} below N={Ns[0]}"] = large.separated_below(small)
    shape = _shape_fit(tails, Ns, times, cfg.thresholds, scale)
    report.add_table("shape_fit", shape, {"log_C": "descriptive", "K": "descriptive"},
                     model="P(W2 > a) ~ C/(a^2 N^2) + exp(-K N a^2), least squares on log probabilities")
    return report


def _shape_fit(tails, Ns, times, thresholds, scale) -> dict:
    out = {"t": [], "log_C": [], "K": [], "rms_log_residual": [], "points": []}
    for j, t in enumerate(times):
        pts = [(N, thr * scale[j], tails[(N, j, thr, "w2")].estimate)
               for N in Ns for thr in thresholds if tails[(N, j, thr, "w2")].estimate > 0]
        out["t"].append(t)
        out["points"].append(len(pts))
        if len(pts) < 3:
            out["log_C"].append(np.nan)
            out["K"].append(np.nan)
            out["rms_log_residual"].append(np.nan)
            continue
        N, a, p = (np.array(v, dtype=float) for v in zip(*pts))

        def resid(theta):
            model = np.exp(theta[0]) / (a**2 * N**2) + np.exp(-theta[1] * N * a**2)
            return np.log(model) - np.log(p)

        sol = least_squares(resid, x0=[0.0, 1.0], bounds=([-50.0, 0.0], [50.0, np.inf]))
        out["log_C"].append(float(sol.x[0]))
        out["K"].append(float(sol.x[1]))
        out["rms_log_residual"].append(float(np.sqrt(np.mean(sol.fun**2))))
    return {k: np.array(v) for k, v in out.items()}


def cooperative_gap_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Gap between N-player social-optimum controls and the limiting
    cooperative control, plus the driver coefficient-identity check."""
    _lq_only(cfg)
    _need_players(cfg)
    report = StudyReport(cfg.study, cfg)
    spec, grid, nodes = cfg.spec, cfg.grid, cfg.eval_nodes()
    times = grid.times[nodes]
    Ns = cfg.N_list
    system = cooperative_system(spec)
    pr, _ = system.solve(grid)
    coop = solve_cooperative_lq(spec, grid)
    mn = np.column_stack([coop.m, coop.n])
    results, violations = [], []
    for N in Ns:
        control = cooperative_controls(spec, N, coop)

        def work(reps, N=N, control=control):
            X0, dW = _lq_inputs(spec, cfg, grid, reps, N)
            return simulate_linear_coupled(system, pr, mn, spec.sigma, grid, X0, dW, nodes, control)

        results.append(run_chunked(work, cfg.replications, cfg.chunk_size, threads))
        violations.append(_identity_violation(spec, cfg, N, pr))
    cols, units, means, halves = _estimate_columns("gap", times, [r["gap"] for r in results], "control^2")
    _check_replications(cfg.study, Ns, times, means, halves)
    rates, rate_units = _rate_columns(Ns, cfg.k_moment, {"rate_r[M=2]+r[M=1]": (2, 1)})
    report.add_table("gap", {"N": np.asarray(Ns), **cols, "identity_violation": np.array(violations), **rates},
                     {**units, **rate_units, "identity_violation": "adjoint drift, exact max"},
                     replications=cfg.replications, n_steps=cfg.n_steps)
    fits = _fit_times(report, "gap", Ns, times, means, halves)
    report.checks[f"identity violation <= {IDENTITY_TOL:g}"] = bool(max(violations) <= IDENTITY_TOL)
    for t, f in fits.items():
        report.checks[f"slope[{_time_label(t)}] <= {COOP_MAX_SLOPE}, R^2 >= {COOP_MIN_R2}"] = bool(
            f.slope <= COOP_MAX_SLOPE and f.r2 >= COOP_MIN_R2)
    report.notes.append("cooperative decoupling coefficients (p, r) solve N-independent equations; "
                        f"max identity violation {max(violations):.3e}")
    return report


def _identity_violation(spec, cfg: StudyConfig, N: int, pr) -> float:
    """Identity check on the initial draws with equilibrium and random adjoints."""
    reps = np.arange(min(cfg.replications, 50))
    X = initial_states(spec.mu0_mean, max(spec.mu0_std, 1.0), cfg.seed, reps, N)
    Y = pr[0, 0] * X + pr[0, 1] * X.mean(axis=-1, keepdims=True)
    noise = rng.stream_normals(cfg.seed, reps[:, None], np.arange(N)[None, :], rng.CHANNEL_REFERENCE, 1)[..., 0]
    return max(driver_identity_violation(spec, X, Y), driver_identity_violation(spec, X, noise))


def master_gap_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Gap between the N-particle decoupling ``v^{1,N}`` and the limiting
    decoupling ``V`` along synchronously coupled paths started at i.i.d.
    draws from the initial law."""
    _need_players(cfg)
    report = StudyReport(cfg.study, cfg)
    grid, nodes = cfg.grid, cfg.eval_nodes()
    times = grid.times[nodes]
    Ns = cfg.N_list
    if cfg.bundle is None:
        spec = cfg.spec
        system = mfg_particle_system(spec)
        pr, _ = system.solve(grid)
        mn = np.column_stack(system.mean_path(spec, grid))
        results = []
        for N in Ns:
            def work(reps, N=N):
                X0, dW = _lq_inputs(spec, cfg, grid, reps, N)
                return simulate_linear_coupled(system, pr, mn, spec.sigma, grid, X0, dW, nodes)

            results.append(run_chunked(work, cfg.replications, cfg.chunk_size, threads))
        report.notes.append("path: closed-form particle decoupling Y^i = p X^i + r Xbar")
    else:
        def reduce(cloud, nodes):
            d = cloud.Y[:, 0, nodes] - cloud.shadow_Y[:, 0, nodes]
            return {"y_gap": d**2}

        cb, mkv, results = _picard_clouds(cfg, threads, reduce)
        report.notes.append(f"path: Picard regression on bundle {cb.name!r}")
    cols, units, means, halves = _estimate_columns("gap", times, [r["y_gap"] for r in results], "adjoint^2")
    _check_replications(cfg.study, Ns, times, means, halves)
    if "y_gap_empirical" in results[0]:
        ecols, eunits, _, _ = _estimate_columns("gap_empirical", times, [r["y_gap_empirical"] for r in results],
                                                "adjoint^2")
        cols.update(ecols)
        units.update(eunits)
    rates, rate_units = _rate_columns(Ns, cfg.k_moment, {"rate_r[M=2]+r[M=1]": (2, 1)})
    report.add_table("gap", {"N": np.asarray(Ns), **cols, **rates}, {**units, **rate_units},
                     replications=cfg.replications, n_steps=cfg.n_steps)
    _fit_times(report, "gap", Ns, times, means, halves)
    for j, t in enumerate(times):
        label = _time_label(t)
        if means[0, j] > GAP_FLOOR:
            ratio = means[-1, j] / means[0, j]
            report.checks[f"gap[{label}] N={Ns[-1]} <= {MASTER_MAX_RATIO} x N={Ns[0]}, CI-separated"] = bool(
                ratio <= MASTER_MAX_RATIO and _separated_decrease(means, halves, j))
            report.notes.append(f"gap[{label}] ratio N={Ns[-1]} / N={Ns[0]}: {ratio:.4f}")
        else:
            report.checks[f"gap[{label}] at floor"] = bool(np.all(means[:, j] <= GAP_FLOOR))
    return report


def price_impact_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Linear-impact execution game: coefficient mapping, Nash gap,
    vanishing off-diagonal adjoints and the Hamiltonian-minimizer check."""
    _need_players(cfg)
    report = StudyReport(cfg.study, cfg)
    spec = cfg.impact_spec()
    grid, nodes = cfg.grid, cfg.eval_nodes()
    times = grid.times[nodes]
    Ns = cfg.N_list
    mapping = spec.as_dict()
    report.add_table("mapping", {"coefficient": np.array(list(mapping), dtype=object),
                                 "value": np.array([float(v) for v in mapping.values()])},
                     rule="R = c_quad + h2_slope, Sbar = -h1_slope, Q = cX_quad, QT = g_quad, B = 1, others 0")
    _, decs, results = _nash_samples(spec, cfg.replace(bundle=None), threads)
    cols, units, means, halves = _estimate_columns("gap", times, [r["gap"] for r in results], "control^2")
    _check_replications(cfg.study, Ns, times, means, halves)
    offdiag_coeff = np.array([np.max(np.abs(d.sym[:, 3:])) for d in decs])
    offdiag_sup = np.array([np.max(r["offdiag_sup"]) for r in results])
    ham = np.array([_hamiltonian_check(spec, d, cfg) for d in decs])
    report.add_table("gap", {"N": np.asarray(Ns), **cols, "max_abs_defg": offdiag_coeff,
                             "max_sup_Y12_sq": offdiag_sup, "hamiltonian_mismatch": ham},
                     {**units, "max_abs_defg": "adjoint per state, exact",
                      "max_sup_Y12_sq": "adjoint^2, max over replications",
                      "hamiltonian_mismatch": "control, max abs"},
                     replications=cfg.replications, n_steps=cfg.n_steps)
    _fit_times(report, "gap", Ns, times, means, halves)
    report.checks[f"off-diagonal adjoints <= {OFFDIAG_EXACT_ZERO:g}"] = bool(
        offdiag_sup.max() <= OFFDIAG_EXACT_ZERO and offdiag_coeff.max() <= OFFDIAG_EXACT_ZERO)
    report.checks["closed form matches the Hamiltonian minimizer"] = bool(ham.max() <= 1e-10)
    if spec.Sbar == 0:
        report.checks["zero impact: gap at floor"] = bool(np.all(means <= GAP_FLOOR))
    report.notes.append(f"equilibrium control: alpha^i = -(1/(2R)) (B Y^ii + (Sbar/N) X^i) "
                        f"with R = {spec.R:g}, Sbar = {spec.Sbar:g}")
    return report


def _hamiltonian_check(spec, dec, cfg: StudyConfig) -> float:
    """Max gap between the closed-form Nash control and the numerical
    Hamiltonian minimizer on simulated initial states."""
    N = dec.N
    cmap = EquilibriumControlMap(spec, N)
    hb = lq_hamiltonian(spec.R, spec.B)
    X = initial_states(spec.mu0_mean, max(spec.mu0_std, 1.0), cfg.seed, np.arange(4), N)
    worst = 0.0
    for k in (0, len(dec.grid) // 2, len(dec.grid) - 1):
        Y = dec.adjoints(k, X)
        closed = cmap.nash(X, Y)
        y_diag = np.diagonal(Y, axis1=-2, axis2=-1)
        for r in range(X.shape[0]):
            for i in range(min(N, 8)):
                res = minimize_hamiltonian(hb, dec.grid.times[k], X[r, i], y_diag[r, i],
                                           chi=-(spec.Sbar / N) * X[r, i])
                worst = max(worst, abs(res.control - closed[r, i]))
    return worst


def fbsde_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Picard solve of a bundle's particle system with residual diagnostics
    and, for the LQ bundle, the closed-form comparison of ``Y_0``."""
    if cfg.bundle is None:
        raise ConfigError("the fbsde study needs a bundle")
    cb = cfg.make_bundle()
    report = StudyReport(cfg.study, cfg)
    grid, settings = cfg.grid, _picard(cfg)
    rows = {k: [] for k in ("N", "Y0", "Y0_se", "closed_form_particle", "closed_form_nash", "max_residual",
                            "terminal_residual", "picard_iterations", "mean_contraction")}
    last = None
    for N in cfg.N_list:
        if N < 2:
            raise ConfigError("the particle system needs N >= 2")
        cloud = solve_particle_fbsde(cb, N, grid, settings, cfg.seed, replications=range(cfg.replications))
        res = fbsde_residual(cloud, cb)
        pathwise = _pathwise_terminal_plus_drivers(cloud, cb)
        y0 = float(np.mean(cloud.Y[..., 0]))
        se = float(np.std(pathwise) / np.sqrt(pathwise.size))
        cf_particle, cf_nash = _closed_forms(cb, N, grid, cloud)
        factors = cloud.contraction_factors
        for key, v in (("N", N), ("Y0", y0), ("Y0_se", se), ("closed_form_particle", cf_particle),
                       ("closed_form_nash", cf_nash), ("max_residual", res.max_relative),
                       ("terminal_residual", res.terminal_relative),
                       ("picard_iterations", len(cloud.picard_changes)),
                       ("mean_contraction", float(np.mean(factors)) if factors else np.nan)):
            rows[key].append(v)
        report.checks[f"N={N} residual <= {FBSDE_RESIDUAL_TOL:g}"] = bool(res.max_relative <= FBSDE_RESIDUAL_TOL)
        for name, cf in (("particle", cf_particle), ("nash", cf_nash)):
            if np.isfinite(cf):
                report.checks[f"N={N} Y0 within {FBSDE_SE_MULTIPLE:g} SE of {name} closed form"] = bool(
                    abs(y0 - cf) <= FBSDE_SE_MULTIPLE * se)
        last = cloud
    report.add_table("summary", {k: np.array(v) for k, v in rows.items()},
                     {"Y0": "adjoint, particle and replication mean", "Y0_se": "adjoint, Monte Carlo standard error",
                      "max_residual": "relative to mean |Y|^2 over time", "terminal_residual": "relative"},
                     bundle=cb.name, n_steps=cfg.n_steps, replications=cfg.replications)
    report.add_table("picard", {"iteration": np.arange(1, len(last.picard_changes) + 1),
                                "relative_change": np.array(last.picard_changes)},
                     {"relative_change": "relative L2 change of Y"}, N=cfg.N_list[-1])
    table = last.to_table()
    report.tables["cloud"] = table
    table.meta.update({"kind": "fbsde.cloud", **report.provenance})
    return report


def _pathwise_terminal_plus_drivers(cloud, cb) -> np.ndarray:
    """``G(X_T) + sum_k F_k dt`` per particle: its mean estimates ``Y_0``."""
    grid = cloud.grid
    total = np.asarray(cb.terminal(cloud.X[..., -1], EmpiricalMeasure(cloud.X[..., -1])), dtype=float).copy()
    for k in range(grid.n_steps):
        mu = EmpiricalMeasure(cloud.X[..., k], cloud.Y[..., k])
        total += np.asarray(cb.driver(grid.times[k], cloud.X[..., k], cloud.Y[..., k], cloud.Z[..., k], mu)) * grid.dt
    return total.ravel()


def _closed_forms(cb, N, grid, cloud) -> tuple:
    spec = cb.meta.get("spec") if cb.meta else None
    if spec is None:
        return np.nan, np.nan
    system = cb.meta["system"]
    pr, _ = system.solve(grid)
    x0 = cloud.X0
    particle = float(np.mean(pr[0, 0] * x0 + pr[0, 1] * x0.mean(axis=-1, keepdims=True)))
    nash = solve_nplayer_lq_symmetric(spec, N, grid)
    nash_y = float(np.mean(nash.diagonal(0, x0)))
    return particle, nash_y


# ---------------------------------------------------------------- dispatch

STUDY_FUNCTIONS = {
    "nash_gap": nash_gap_study,
    "offdiag": offdiag_study,
    "concentration": concentration_study,
    "cooperative_gap": cooperative_gap_study,
    "master_gap": master_gap_study,
    "price_impact": price_impact_study,
    "fbsde": fbsde_study,
}
assert set(STUDY_FUNCTIONS) == set(STUDIES)


def run_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Run the study named by ``cfg.study`` and record its wall-clock time."""
    start = time.perf_counter()
    report = STUDY_FUNCTIONS[cfg.study](cfg, threads=threads)
    report.runtime = time.perf_counter() - start
    return report


def grid_refinement_check(cfg: StudyConfig, threads: int = 1, max_change=0.1) -> StudyReport:
    """Rerun a study on a grid with half the step, on the same Brownian
    paths, and report the relative change of every estimate."""
    coarse = cfg.replace(noise_substeps=2 * cfg.noise_substeps)
    fine = cfg.replace(n_steps=2 * cfg.n_steps)
    a, b = run_study(coarse, threads), run_study(fine, threads)
    report = StudyReport(cfg.study, cfg)
    name = next(iter(a.tables))
    ta, tb = a.tables[name], b.tables[name]
    cols = {"N": ta["N"]}
    worst = 0.0
    for col in ta.columns:
        if col == "N" or col.endswith("_ci95") or col.startswith("rate") or ta[col].dtype == object:
            continue
        va, vb = np.asarray(ta[col], float), np.asarray(tb[col], float)
        scale = np.maximum(np.abs(vb), GAP_FLOOR)
        rel = np.where(np.maximum(np.abs(va), np.abs(vb)) <= GAP_FLOOR, 0.0, np.abs(va - vb) / scale)
        cols[f"{col}_relative_change"] = rel
        worst = max(worst, float(np.max(rel)))
    report.add_table("refinement", cols, {k: "relative" for k in cols if k != "N"},
                     coarse_steps=cfg.n_steps, fine_steps=2 * cfg.n_steps)
    report.checks[f"relative change < {max_change:g}"] = worst < max_change
    report.notes.append(f"largest relative change on halving dt: {worst:.4f}")
    return report


__all__ = [
    "nash_gap_study", "offdiag_study", "concentration_study", "cooperative_gap_study",
    "master_gap_study", "price_impact_study", "fbsde_study", "run_study", "grid_refinement_check",
    "STUDY_FUNCTIONS",
]
