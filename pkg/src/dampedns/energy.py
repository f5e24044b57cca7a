"""Energy-method diagnostics on sampled trajectories.

Identities are checked in time-integrated form: integrals over samples use
the not-a-knot cubic spline (fourth order), so residuals shrink at the
integrator's order when samples are taken every few steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import DiagnosticsRecord, SimConfig, Stepper, Trajectory, simulate
from .spectral import SpectralVectorField

_TINY = 1e-300


def cumulative_integral(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``int_{t_0}^{t_i} y dt`` at every sample, fourth-order spline quadrature."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return np.zeros_like(t)
    if t.size == 2:
        return np.array([0.0, 0.5 * (y[0] + y[1]) * (t[1] - t[0])])
    F = CubicSpline(t, y).antiderivative()
    return F(t) - F(t[0])


def _series(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


def interval_residuals(records: list[DiagnosticsRecord], cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval residuals of the energy and strong-energy equalities.

    ``energy[i] = 1/2 (E_{i+1} - E_i) + int (nu G + alpha E - (g,u)) dt`` over
    ``[t_i, t_{i+1}]``; the strong version replaces ``(E, G, (g,u))`` by
    ``(G, Lap, -(g, Lap u))``.
    """
    t = _series(records, "t")
    E = _series(records, "energy")
    G = _series(records, "grad_energy")
    Lp = _series(records, "laplacian_energy")
    F = _series(records, "forcing_power")
    Fs = _series(records, "strong_forcing_power")
    nu, alpha = cfg.nu, cfg.alpha
    I1 = cumulative_integral(t, nu * G + alpha * E - F)
    I2 = cumulative_integral(t, nu * Lp + alpha * G + Fs)
    r1 = 0.5 * np.diff(E) + np.diff(I1)
    r2 = 0.5 * np.diff(G) + np.diff(I2)
    return r1, r2


def fill_residuals(records: list[DiagnosticsRecord], cfg: SimConfig) -> list[DiagnosticsRecord]:
    """Return records with the residual columns set (row ``i`` holds interval ``[t_{i-1}, t_i]``)."""
    if len(records) < 2:
        return list(records)
    r1, r2 = interval_residuals(records, cfg)
    out = [replace(records[0], energy_residual=0.0, strong_energy_residual=0.0)]
    for rec, a, b in zip(records[1:], r1, r2):
        out.append(replace(rec, energy_residual=float(a), strong_energy_residual=float(b)))
    return out


def _normalized(num: float, den: float) -> float:
    num = abs(num)
    if num == 0.0:
        return 0.0
    return num / max(abs(den), _TINY)


def energy_balance_residual(window: list[DiagnosticsRecord], cfg: SimConfig) -> float:
    """``|1/2 (||u(t2)||^2 - ||u(t1)||^2) + int (nu||grad u||^2 + alpha||u||^2 - (g,u)) dt|``,
    normalized by the integrated dissipation ``int (nu||grad u||^2 + alpha||u||^2) dt``.
    """
    if len(window) < 2:
        raise ValueError("energy_balance_residual needs at least two records")
    t = _series(window, "t")
    E = _series(window, "energy")
    G = _series(window, "grad_energy")
    F = _series(window, "forcing_power")
    diss = cumulative_integral(t, cfg.nu * G + cfg.alpha * E)[-1]
    forcing = cumulative_integral(t, F)[-1]
    return _normalized(0.5 * (E[-1] - E[0]) + diss - forcing, diss)


def strong_energy_balance_residual(window: list[DiagnosticsRecord], cfg: SimConfig) -> float:
    """Same as :func:`energy_balance_residual` for ``1/2 d/dt||grad u||^2 + nu||Lap u||^2
    + alpha||grad u||^2 = -(g, Lap u)``.

    The sign follows from testing the equation with ``-Lap u``; the record's
    ``strong_forcing_power`` column stores ``(g, Lap u)`` itself.
    """
    if len(window) < 2:
        raise ValueError("strong_energy_balance_residual needs at least two records")
    t = _series(window, "t")
    G = _series(window, "grad_energy")
    Lp = _series(window, "laplacian_energy")
    Fs = _series(window, "strong_forcing_power")
    diss = cumulative_integral(t, cfg.nu * Lp + cfg.alpha * G)[-1]
    forcing = -cumulative_integral(t, Fs)[-1]
    return _normalized(0.5 * (G[-1] - G[0]) + diss - forcing, diss)


# ---------------------------------------------------------------- estimates
@dataclass
class MarginReport:
    """Relative slacks ``(rhs - lhs) / rhs`` of an a-priori estimate; negative means violated."""

    pointwise_min_slack: float
    window_min_slack: float
    n_pointwise: int
    n_windows: int
    violations: list[tuple[str, float, float]] = field(default_factory=list)
    tolerance: float = 1e-9

    @property
    def min_slack(self) -> float:
        return min(self.pointwise_min_slack, self.window_min_slack)

    @property
    def holds(self) -> bool:
        return self.min_slack >= -self.tolerance


def _window_lags(n: int) -> list[int]:
    lags, lag = [], 1
    while lag < n:
        lags.append(lag)
        lag *= 2
    if n > 1 and (n - 1) not in lags:
        lags.append(n - 1)
    return lags


def _relative_slack(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return (rhs - lhs) / np.maximum(np.abs(rhs), _TINY)


def _estimate_report(t, alpha, state_sq, integrand_sq, decay_bound_const, window_const, window_factor, tol):
    """Shared machinery for the two dissipative estimates.

    Pointwise: ``state_sq(t) <= state_sq(0) e^{-alpha t} + decay_bound_const``.
    Windows:   ``window_factor * int_t^{t+T} integrand_sq <= window_const * T + state_sq(t)``.
    """
    point_rhs = state_sq[0] * np.exp(-alpha * t) + decay_bound_const
    ps = _relative_slack(state_sq, point_rhs)
    cum = cumulative_integral(t, integrand_sq)
    ws_all, viol = [], []
    for lag in _window_lags(len(t)):
        T = t[lag:] - t[:-lag]
        lhs = window_factor * (cum[lag:] - cum[:-lag])
        rhs = window_const * T + state_sq[:-lag]
        s = _relative_slack(lhs, rhs)
        ws_all.append(s)
        bad = np.nonzero(s < -tol)[0]
        viol += [("window", float(t[i]), float(s[i])) for i in bad[:5]]
    bad = np.nonzero(ps < -tol)[0]
    viol = [("pointwise", float(t[i]), float(ps[i])) for i in bad[:5]] + viol
    ws = np.concatenate(ws_all) if ws_all else np.array([np.inf])
    return MarginReport(float(ps.min()), float(ws.min()), len(ps), int(ws.size), viol, tol)


def check_dissipative_estimate(records: list[DiagnosticsRecord], cfg: SimConfig, tol: float = 1e-9) -> MarginReport:
    """``||u(t)||^2 <= ||u0||^2 e^{-alpha t} + alpha^-2 ||g||^2`` and
    ``2 nu int_t^{t+T} ||grad u||^2 <= alpha^-1 T ||g||^2 + ||u(t)||^2``.

    ``records[0]`` is taken as the initial state. Windows are every pair of
    samples at dyadic lags plus the full run.
    """
    t = _series(records, "t")
    t = t - t[0]
    g2 = cfg.forcing.norm() ** 2
    a, nu = cfg.alpha, cfg.nu
    return _estimate_report(
        t,
        a,
        _series(records, "energy"),
        _series(records, "grad_energy"),
        g2 / a**2,
        g2 / a,
        2 * nu,
        tol,
    )


def check_strong_estimates(records: list[DiagnosticsRecord], cfg: SimConfig, tol: float = 1e-9) -> MarginReport:
    """``||grad u(t)||^2 <= ||grad u0||^2 e^{-alpha t} + (2 alpha nu)^-1 ||g||^2`` and
    ``nu int_t^{t+T} ||Lap u||^2 <= nu^-1 T ||g||^2 + ||grad u(t)||^2``."""
    t = _series(records, "t")
    t = t - t[0]
    g2 = cfg.forcing.norm() ** 2
    a, nu = cfg.alpha, cfg.nu
    return _estimate_report(
        t,
        a,
        _series(records, "grad_energy"),
        _series(records, "laplacian_energy"),
        g2 / (2 * a * nu),
        g2 / nu,
        nu,
        tol,
    )


def smoothing_ratio(records: list[DiagnosticsRecord], cfg: SimConfig) -> float:
    """``sup_{0 < t <= 1} t ||u(t)||_{H^1}^2 / (||u0||^2 + ||g||^2)`` over the samples.

    ``records[0]`` must be the initial state; ``||u||_{H^1}^2 = ||u||^2 + ||grad u||^2``.
    """
    t = _series(records, "t")
    t = t - t[0]
    sel = (t > 0) & (t <= 1.0 + 1e-12)
    if not np.any(sel):
        raise ValueError("no samples in (0, 1]")
    E = _series(records, "energy")
    G = _series(records, "grad_energy")
    den = E[0] + cfg.forcing.norm() ** 2
    if den == 0:
        return 0.0
    return float(np.max(t[sel] * (E[sel] + G[sel])) / den)


@dataclass
class AbsorbingReport:
    status: str  # "entered", "not_yet_entered", "degenerate"
    entry_time: float | None
    predicted_bound: float | None
    radius_sq: float

    @property
    def within_prediction(self) -> bool:
        if self.status != "entered" or self.predicted_bound is None:
            return self.status == "entered"
        return self.entry_time <= self.predicted_bound


def absorbing_entry_time(records: list[DiagnosticsRecord], cfg: SimConfig) -> AbsorbingReport:
    """First sample with ``||u||^2 <= 2 alpha^-2 ||g||^2``.

    The prediction ``alpha^-1 ln(alpha^2 ||u0||^2 / ||g||^2) + sample_interval``
    is attached whenever ``||u0||^2 > alpha^-2 ||g||^2``.
    """
    t = _series(records, "t")
    t = t - t[0]
    E = _series(records, "energy")
    g2 = cfg.forcing.norm() ** 2
    radius = 2 * g2 / cfg.alpha**2
    if g2 == 0:
        return AbsorbingReport("degenerate", None, None, 0.0)
    predicted = None
    if E[0] > g2 / cfg.alpha**2:
        predicted = math.log(cfg.alpha**2 * E[0] / g2) / cfg.alpha + cfg.sample_interval
    inside = np.nonzero(E <= radius)[0]
    if inside.size == 0:
        return AbsorbingReport("not_yet_entered", None, predicted, radius)
    return AbsorbingReport("entered", float(t[inside[0]]), predicted, radius)


@dataclass
class LipschitzReport:
    times: np.ndarray
    log_growth: np.ndarray  # log(||u_a - u_b||^2 / ||u_a(0) - u_b(0)||^2)
    budget: np.ndarray  # 2 C^2 nu^-1 int_0^t ||grad u_b||^2
    constant: float

    @property
    def max_growth(self) -> float:
        return float(np.max(self.log_growth[1:])) if self.log_growth.size > 1 else 0.0

    @property
    def holds(self) -> bool:
        return bool(np.all(self.log_growth <= self.budget + 1e-9 * (1 + np.abs(self.budget))))


def lipschitz_growth(
    u0a: SpectralVectorField,
    u0b: SpectralVectorField,
    cfg: SimConfig,
    constant: float | None = None,
) -> LipschitzReport:
    """Realized growth of ``||u_a(t) - u_b(t)||`` against the Gronwall budget.

    The Ladyzhenskaya constant is the larger of ``constant`` and the ratio
    measured on the difference fields along the run.
    """
    from .inequalities import ladyzhenskaya_ratio

    d0 = (u0a - u0b).norm()
    if d0 == 0:
        raise ValueError("initial data coincide; growth ratio undefined")
    ta = simulate(cfg, u0a, store_states=True)
    tb = simulate(cfg, u0b, store_states=True)
    diffs = [sa.u - sb.u for sa, sb in zip(ta.states, tb.states)]
    ratios = [ladyzhenskaya_ratio(d) for d in diffs if d.norm() > 0]
    C = max([constant or 0.0] + ratios)
    times = tb.times - tb.times[0]
    growth = np.array([2 * math.log(max(d.norm(), 1e-300) / d0) for d in diffs])
    budget = 2 * C**2 / cfg.nu * cumulative_integral(times, tb.column("grad_energy"))
    return LipschitzReport(times, growth, budget, C)


def observed_order(errors, ratio: float = 2.0) -> np.ndarray:
    """Successive convergence orders ``log(e_i / e_{i+1}) / log(ratio)``."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def self_convergence_order(cfg: SimConfig, u0: SpectralVectorField, t_end: float, levels: int = 3) -> np.ndarray:
    """Richardson self-convergence of the final state under dt halving."""
    finals = []
    for i in range(levels):
        c = replace(cfg, dt=cfg.dt / 2**i, sample_interval=cfg.dt / 2**i, t_end=t_end)
        finals.append(simulate(c, u0, stepper=Stepper(c)).final.u)
    diffs = [(finals[i] - finals[i + 1]).norm() for i in range(levels - 1)]
    return observed_order(diffs)
