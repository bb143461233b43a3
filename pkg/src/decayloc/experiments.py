"""Canned experiments driven by an ExperimentConfig, with CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import asymptotics as asy
from . import dynamics as dyn
from . import spectrum as spc
from .config import ConfigError, ExperimentConfig
from .ensemble import map_realizations
from .model import BandEdgeError, ModelParams, energy_point, potential, sample_disorder
from .prufer import direct_trajectory, initial_solution, matrix_log_norms, prufer_trajectory

__all__ = ["ExperimentResult", "run_experiment", "phase_sweep", "classify", "write_csv", "format_csv"]

log = logging.getLogger("decayloc")


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    columns: list[str]
    rows: list[dict[str, Any]]
    notes: list[str] = field(default_factory=list)
    elapsed: float = 0.0
    steps: int = 0  # elementary chain steps or box sites processed

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def format_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([_fmt(row[c]) for c in result.columns])
    return buf.getvalue()


def write_csv(result: ExperimentResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(result))


def _meta(cfg: ExperimentConfig) -> dict[str, Any]:
    return {"seed": cfg.seed, "realizations": cfg.realizations}


def _ep(cfg: ExperimentConfig, E: float):
    return energy_point(E, cfg.resonance_tol, cfg.band_guard)


# ---------------------------------------------------------------- kinds

def _lyapunov(cfg: ExperimentConfig, threads):
    params = cfg.params
    rows = []
    for E in cfg.energies:
        ep = _ep(cfg, E)
        est = asy.estimate_beta(params, ep, cfg.n, cfg.realizations, cfg.seed, cfg.theta0, threads)
        rows.append(
            dict(
                alpha=params.alpha, **{"lambda": params.lam}, E=ep.E, k=ep.k, resonant=ep.resonant,
                n=cfg.n, theta0=cfg.theta0, beta_hat=est.beta_hat, stderr=est.stderr,
                beta_theory=est.beta_theory, normalizer=est.normalizer, **_meta(cfg),
            )
        )
    return rows, cfg.n * cfg.realizations * len(cfg.energies), []


def _fourth_moment(cfg: ExperimentConfig, threads):
    params = cfg.params
    rows = []
    for E in cfg.energies:
        ep = _ep(cfg, E)
        c = asy.fourth_moment_curve(params, ep, cfg.n, cfg.realizations, cfg.seed, theta0=cfg.theta0, threads=threads)
        var = c.last_decade_variation()
        for j, m, e, b in zip(c.steps, c.mean, c.stderr, c.bound):
            rows.append(
                dict(
                    alpha=params.alpha, **{"lambda": params.lam}, E=ep.E, steps=int(j), mean_r4=m, stderr=e,
                    bound=b, bound_limit=c.bound_limit, c=c.c, within_bound=bool(m <= b),
                    last_decade_variation=var, **_meta(cfg),
                )
            )
    return rows, cfg.n * cfg.realizations * len(cfg.energies), []


def _spectrum_decay(cfg: ExperimentConfig, threads):
    params = cfg.params
    lo, hi = cfg.interval

    def one(i, seed):
        box = spc.build_box(sample_disorder(params.disorder, seed, cfg.L + 1), params, cfg.L)
        out = []
        for pair in spc.diagonalize(box, window=(lo, hi)):
            try:
                fit = spc.decay_fit(pair, params.alpha)
            except ValueError:
                continue
            out.append((i, fit))
        return out

    rows = []
    for batch in map_realizations(one, cfg.realizations, cfg.seed, threads):
        for i, fit in batch:
            rows.append(
                dict(
                    alpha=params.alpha, **{"lambda": params.lam}, L=cfg.L, realization=i,
                    eigenvalue=fit.eigenvalue, scaling=fit.scaling, slope=fit.slope,
                    intercept=fit.intercept, fit_quality=fit.fit_quality,
                    window_lo=fit.window[0], window_hi=fit.window[1], **_meta(cfg),
                )
            )
    return rows, (cfg.L + 1) * cfg.realizations, []


def _direction(cfg: ExperimentConfig, threads):
    params = cfg.params
    rows = []
    for E in cfg.energies:
        ep = _ep(cfg, E)
        horizon = spc.DIRECTION_HORIZON_FACTOR * cfg.n

        def one(i, seed):
            r = sample_disorder(params.disorder, seed, horizon + 1)
            d = spc.decaying_direction(r, ep, params, horizon)
            dec = spc.relaunch_growth(r, ep, params, d.theta_inf, cfg.n)
            gen = spc.relaunch_growth(r, ep, params, cfg.theta0, cfg.n)
            return i, d, dec, gen

        for i, d, dec, gen in map_realizations(one, cfg.realizations, cfg.seed, threads):
            gaps = d.cauchy_gaps()
            rows.append(
                dict(
                    alpha=params.alpha, **{"lambda": params.lam}, E=ep.E, n=cfg.n, realization=i,
                    theta_inf=d.theta_inf, r_inf=d.r_inf, last_cauchy_gap=float(gaps[-1]) if gaps.size else math.nan,
                    diverging=d.diverging, decaying_rate=dec, generic_rate=gen,
                    beta_theory=asy.theoretical_beta(ep, params.lam), **_meta(cfg),
                )
            )
    return rows, (2 * spc.DIRECTION_HORIZON_FACTOR + 2) * cfg.n * cfg.realizations * len(cfg.energies), []


def _correlator(cfg: ExperimentConfig, threads):
    params = cfg.params
    res = dyn.correlator_decay_experiment(
        params, cfg.interval, cfg.m, cfg.n_grid, cfg.L, cfg.realizations, cfg.seed, threads
    )
    rows = [
        dict(
            alpha=params.alpha, **{"lambda": params.lam}, L=cfg.L, m=cfg.m, I_lo=cfg.interval[0],
            I_hi=cfg.interval[1], n=int(n), mean_q2=q, best_gamma=res.fit.best_gamma,
            slope=res.slope, spearman=res.spearman, **_meta(cfg),
        )
        for n, q in zip(res.n_grid, res.mean_q2)
    ]
    return rows, (cfg.L + 1) * cfg.realizations, []


def _greens(cfg: ExperimentConfig, threads):
    params = cfg.params
    rows, notes = [], []
    for E in cfg.energies:
        res = dyn.greens_decay_experiment(
            params, E, cfg.s, cfg.m, cfg.n_grid, cfg.L, cfg.realizations, cfg.seed, threads
        )
        if res.skipped:
            notes.append(f"E={E}: {res.skipped} realizations skipped (eigenvalue collision)")
        rows += [
            dict(
                alpha=params.alpha, **{"lambda": params.lam}, E=E, s=cfg.s, L=cfg.L, m=cfg.m, n=int(n),
                mean_moment=g, best_gamma=res.fit.best_gamma, used=res.realizations,
                skipped=res.skipped, **_meta(cfg),
            )
            for n, g in zip(res.n_grid, res.mean_moment)
        ]
    return rows, (cfg.L + 1) * cfg.realizations * len(cfg.energies), notes


def _moments(cfg: ExperimentConfig, threads):
    params = cfg.params
    res = dyn.transport_experiment(
        params, cfg.interval, cfg.L, cfg.p, cfg.realizations, cfg.seed,
        window=cfg.window, margin=cfg.window_margin, threads=threads,
    )
    floor_lin, floor_quad = dyn.transport_lower_bounds(params.lam, cfg.interval, cfg.p)
    rows = [
        dict(
            alpha=params.alpha, **{"lambda": params.lam}, L=cfg.L, p=cfg.p, J_lo=cfg.interval[0],
            J_hi=cfg.interval[1], window=cfg.window, T=T, mean_moment=m,
            exponent_of_mean=res.exponent_of_mean, mean_exponent=res.mean_exponent,
            floor_linear=floor_lin, floor_quadratic=floor_quad, **_meta(cfg),
        )
        for T, m in zip(res.T_grid, res.mean_normalized)
    ]
    return rows, (cfg.L + 1) * cfg.realizations, []


def _diagnostics(cfg: ExperimentConfig, threads):
    params = cfg.params
    rows = []
    n_oracle = min(cfg.n, 10_000)
    for E in cfg.energies:
        ep = _ep(cfg, E)
        B = params.disorder.support_bound
        onset = asy.phase_bound_onset(ep, params.lam, B, params.alpha)

        def one(i, seed):
            r = sample_disorder(params.disorder, seed, cfg.n + 1)
            d = asy.decomposition_trace(r, ep, params, cfg.n, cfg.theta0)
            osc = d.oscillatory / d.normalizer
            pot = potential(r, params.envelope, params.lam)
            lr, tb, dth = prufer_trajectory(pot, ep, cfg.theta0, cfg.n)
            n = np.arange(1, cfg.n + 1)
            sel = n >= onset
            bound = asy.phase_increment_bound(ep, params.lam, B, params.alpha, n[sel])
            phase_ratio = float(np.max(np.abs(dth[sel]) / bound)) if params.lam and sel.any() else 0.0
            x1, x0 = initial_solution(cfg.theta0, ep)
            ln, _ = direct_trajectory(pot, ep, x1, x0, cfg.n)
            ratio = np.exp(2.0 * (ln - lr))
            mx = matrix_log_norms(pot, ep, cfg.theta0, n_oracle)
            oracle = float(np.max(np.abs(mx - lr[: n_oracle + 1])))
            return i, d, osc, phase_ratio, float(ratio.min()), float(ratio.max()), oracle

        for i, d, osc, pr, smin, smax, oracle in map_realizations(one, cfg.realizations, cfg.seed, threads):
            ml, msq, mosc = d.martingale_ratios()
            rows.append(
                dict(
                    alpha=params.alpha, **{"lambda": params.lam}, E=ep.E, resonant=ep.resonant, n=cfg.n,
                    realization=i, drift=d.drift, two_log_radius=d.two_log_radius,
                    taylor_defect=abs(d.total() - d.two_log_radius), remainder=d.remainder,
                    remainder_bound=d.remainder_bound, ratio_linear=ml, ratio_square=msq,
                    ratio_oscillating=mosc, oscillatory_ratio=osc, phase_bound_ratio=pr,
                    sandwich_min=smin / (ep.sin_k**2 / 4.0), sandwich_max=smax / 4.0,
                    oracle_max_diff=oracle, **_meta(cfg),
                )
            )
    return rows, 4 * cfg.n * cfg.realizations * len(cfg.energies), []


def classify(alpha: float, beta_hat: float) -> str:
    if alpha > 0.5:
        return "ac-like"
    if alpha == 0.5:
        return "sc-like" if beta_hat < 0.5 else "pp-like"
    return "pp-like"


def phase_sweep(
    lambda_grid: Sequence[float],
    alpha_grid: Sequence[float],
    E_grid: Sequence[float],
    n: int,
    reals: int,
    master_seed: int,
    disorder: str = "uniform",
    band_guard: float = 0.01,
    resonance_tol: float = 1e-6,
    threads: int | None = None,
    fourth_moment_reals: int | None = None,
) -> tuple[list[dict[str, Any]], list[str]]:
    """beta_hat over an (alpha, lambda, E) grid with the predicted spectral label.

    For alpha > 1/2 the row also reports whether the empirical E[R^4] stays under
    the explicit product bound.
    """
    from .model import DisorderSpec

    if not lambda_grid or not alpha_grid or not E_grid:
        raise ValueError("grids must be non-empty")
    rows, notes = [], []
    for alpha in alpha_grid:
        for lam in lambda_grid:
            params = ModelParams(alpha, lam, DisorderSpec(disorder))
            for E in E_grid:
                try:
                    ep = energy_point(E, resonance_tol, band_guard)
                except BandEdgeError as exc:
                    notes.append(f"skipped alpha={alpha} lambda={lam} E={E}: {exc}")
                    continue
                est = asy.estimate_beta(params, ep, n, reals, master_seed, threads=threads, strict=False)
                bounded = None
                if alpha > 0.5:
                    c = asy.fourth_moment_curve(params, ep, n, fourth_moment_reals or reals, master_seed, threads=threads)
                    bounded = c.within_bound
                rows.append(
                    dict(
                        alpha=alpha, **{"lambda": lam}, E=ep.E, resonant=ep.resonant, beta_hat=est.beta_hat,
                        stderr=est.stderr, beta_theory=est.beta_theory,
                        classification=classify(alpha, est.beta_hat), fourth_moment_bounded=bounded,
                        n=n, seed=master_seed, realizations=reals,
                    )
                )
    return rows, notes


def _phase_sweep(cfg: ExperimentConfig, threads):
    lams = cfg.lambda_grid or (cfg.model.lam,)
    alphas = cfg.alpha_grid or (cfg.model.alpha,)
    rows, notes = phase_sweep(
        lams, alphas, cfg.energies, cfg.n, cfg.realizations, cfg.seed, cfg.model.disorder,
        cfg.band_guard, cfg.resonance_tol, threads,
    )
    return rows, cfg.n * cfg.realizations * len(rows), notes


_RUNNERS = {
    "lyapunov": _lyapunov,
    "fourth-moment": _fourth_moment,
    "spectrum-decay": _spectrum_decay,
    "direction": _direction,
    "correlator": _correlator,
    "greens": _greens,
    "moments": _moments,
    "phase-sweep": _phase_sweep,
    "diagnostics": _diagnostics,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run ``cfg``; output depends only on the config, never on ``threads``."""
    if cfg.kind not in _RUNNERS:
        raise ConfigError("kind", f"unknown experiment kind {cfg.kind!r}")
    t0 = time.perf_counter()
    rows, steps, notes = _RUNNERS[cfg.kind](cfg, threads)
    elapsed = time.perf_counter() - t0
    for note in notes:
        log.warning(note)
    columns = list(rows[0].keys()) if rows else ["seed", "realizations"]
    log.info("%s: %d rows, %d steps, %.2f s", cfg.kind, len(rows), steps, elapsed)
    return ExperimentResult(cfg, columns, rows, notes, elapsed, steps)
