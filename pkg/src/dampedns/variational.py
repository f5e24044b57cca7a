"""Tangent-linear dynamics and Lyapunov exponents.

Tangents are stacked under the base state and advanced by the same
integrator with synchronized stages, so the tangent map is exactly the
derivative of the discrete flow map. Every ``reorthonormalization_interval``
the frame is QR-factorized in the L2 inner product and the logs of the
diagonal stretch factors are accumulated (Benettin's method).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import BlowUpError, SimConfig, Stepper, TrajectoryState, _dynamics_for, simulate
from .integrators import make_integrator
from .spectral import Grid, SpectralVectorField, random_field

TRACE_CONSTANT = 1.0 / (16.0 * math.sqrt(3.0))


class RankCollapseError(RuntimeError):
    pass


class InsufficientBundleError(ValueError):
    """No sign change of the partial sums within the bundle: increase ``m``."""


def tangent_rhs(v: SpectralVectorField, u: SpectralVectorField, cfg: SimConfig) -> SpectralVectorField:
    """``-P((v, grad) u + (u, grad) v) - alpha v + nu Lap v``, dealiased."""
    dyn = _dynamics_for(cfg)
    y = np.stack([u.coefficients, v.coefficients])
    n = dyn.tangent_nonlinear(y)[1]
    return SpectralVectorField(n + dyn.lin * v.coefficients, cfg.grid, True)


# ----------------------------------------------------------- orthonormalization
def _as_real_rows(c: np.ndarray, grid: Grid) -> np.ndarray:
    m = c.shape[0]
    return np.ascontiguousarray(c).reshape(m, -1).view(np.float64) * grid.box_length


def _from_real_rows(x: np.ndarray, grid: Grid) -> np.ndarray:
    m = x.shape[0]
    c = np.ascontiguousarray(x / grid.box_length).view(np.complex128)
    return c.reshape((m, 2) + grid.shape)


def orthonormalize(c: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """QR in the L2 inner product: returns ``(Q, R)`` with ``c = Q R`` and ``diag(R) > 0``."""
    x = _as_real_rows(c, grid)
    q, r = np.linalg.qr(x.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = r * signs[:, None]
    # Householder rounding leaks into coordinates every input leaves at zero
    q[~np.any(x != 0, axis=0)] = 0.0
    return _from_real_rows(q.T, grid), r


def gram_matrix(c: np.ndarray, grid: Grid) -> np.ndarray:
    x = _as_real_rows(c, grid)
    return x @ x.T


# -------------------------------------------------------------------- bundle
@dataclass
class TangentBundle:
    """``m`` L2-orthonormal divergence-free tangents plus log-stretch accumulators."""

    tangents: np.ndarray  # (m, 2, n, n)
    grid: Grid
    reorthonormalization_interval: float
    log_accumulators: np.ndarray = None
    t_accumulated: float = 0.0

    def __post_init__(self):
        if self.log_accumulators is None:
            self.log_accumulators = np.zeros(self.m)

    @property
    def m(self) -> int:
        return self.tangents.shape[0]

    @classmethod
    def from_fields(cls, fields, reorthonormalization_interval: float) -> "TangentBundle":
        grid = fields[0].grid
        c = np.stack([f.coefficients for f in fields])
        q, _ = orthonormalize(c, grid)
        return cls(q, grid, reorthonormalization_interval)

    @classmethod
    def random(cls, grid: Grid, m: int, reorthonormalization_interval: float, seed=0, band=None) -> "TangentBundle":
        rng = np.random.default_rng(seed)
        fields = [random_field(grid, rng, band=band) for _ in range(m)]
        return cls.from_fields(fields, reorthonormalization_interval)

    def gram_defect(self) -> float:
        return float(np.max(np.abs(gram_matrix(self.tangents, self.grid) - np.eye(self.m))))

    def exponents(self) -> np.ndarray:
        if self.t_accumulated <= 0:
            return np.zeros(self.m)
        return np.sort(self.log_accumulators / self.t_accumulated)[::-1]

    def reset_accumulators(self):
        self.log_accumulators = np.zeros(self.m)
        self.t_accumulated = 0.0


@dataclass
class EvolutionLog:
    """Per-reorthonormalization records gathered while evolving a bundle."""

    times: list[float] = field(default_factory=list)
    grad_energy: list[float] = field(default_factory=list)
    quadratic_forms: list[np.ndarray] = field(default_factory=list)  # (L v_j, v_j) per member
    running_exponents: list[np.ndarray] = field(default_factory=list)
    grad_energy_integral: float = 0.0
    duration: float = 0.0

    @property
    def avg_grad_energy(self) -> float:
        return self.grad_energy_integral / self.duration if self.duration > 0 else float("nan")


def _quadratic_forms(dyn, u: np.ndarray, q: np.ndarray) -> np.ndarray:
    y = np.concatenate([u[None], q])
    lv = dyn.tangent_nonlinear(y)[1:] + dyn.lin * q
    return dyn.grid.inner(lv, q)


def evolve_bundle(
    bundle: TangentBundle,
    state: TrajectoryState,
    cfg: SimConfig,
    duration: float,
    log: EvolutionLog | None = None,
    record_forms: bool = True,
) -> tuple[TangentBundle, TrajectoryState, EvolutionLog]:
    """Advance base state and tangents together for ``duration``.

    Reorthonormalizes every ``bundle.reorthonormalization_interval`` (rounded
    to whole steps) and at the end, accumulating ``log diag(R)``.
    """
    grid = cfg.grid
    dyn = _dynamics_for(cfg)
    integ = make_integrator(cfg.integrator, dyn.lin, cfg.dt)
    n_steps = int(round(duration / cfg.dt))
    every = max(1, int(round(bundle.reorthonormalization_interval / cfg.dt)))
    log = log or EvolutionLog()
    y = np.concatenate([state.u.coefficients[None], bundle.tangents])
    k2 = grid.k2
    g_prev = float(grid.weighted_sq(y[0], k2))
    last_qr = 0
    for i in range(1, n_steps + 1):
        y = integ.step(y, dyn.tangent_nonlinear)
        g_now = float(grid.weighted_sq(y[0], k2))
        log.grad_energy_integral += 0.5 * (g_prev + g_now) * cfg.dt
        g_prev = g_now
        if i % every == 0 or i == n_steps:
            if not np.all(np.isfinite(y)):
                raise BlowUpError(f"non-finite tangent state at t={state.t + i * cfg.dt:.6g}")
            q, r = orthonormalize(y[1:], grid)
            d = np.diag(r)
            if np.any(d < 1e-300):
                raise RankCollapseError(f"tangent frame collapsed at t={state.t + i * cfg.dt:.6g}: diag(R)={d}")
            hist = integ.state()
            if hist is not None:
                # keep the multistep history consistent with the new frame
                hist = hist.copy()
                rinv = np.linalg.inv(r)
                hist[1:] = np.tensordot(rinv.T, hist[1:], axes=1)
                integ.load_state(hist)
            y[1:] = q
            bundle.log_accumulators = bundle.log_accumulators + np.log(d)
            bundle.t_accumulated += (i - last_qr) * cfg.dt
            last_qr = i
            t_now = state.t + i * cfg.dt
            log.times.append(t_now)
            log.grad_energy.append(g_now)
            log.running_exponents.append(bundle.exponents())
            if record_forms:
                log.quadratic_forms.append(_quadratic_forms(dyn, y[0], q))
    log.duration += n_steps * cfg.dt
    bundle.tangents = y[1:].copy()
    new_state = TrajectoryState(state.t + n_steps * cfg.dt, SpectralVectorField(y[0], grid, True))
    return bundle, new_state, log


def propagate_tangents(u0: SpectralVectorField, tangents: np.ndarray, cfg: SimConfig, duration: float):
    """Advance base and raw tangents (no reorthonormalization). Returns ``(u(t), V(t))``."""
    dyn = _dynamics_for(cfg)
    integ = make_integrator(cfg.integrator, dyn.lin, cfg.dt)
    y = np.concatenate([u0.coefficients[None], np.asarray(tangents).reshape((-1, 2) + cfg.grid.shape)])
    for _ in range(int(round(duration / cfg.dt))):
        y = integ.step(y, dyn.tangent_nonlinear)
    return SpectralVectorField(y[0], cfg.grid, True), y[1:]


# -------------------------------------------------------------------- reports
def kaplan_yorke(exponents) -> float:
    """Interpolated zero crossing of the partial sums of the sorted exponents.

    Returns 0 when the leading exponent is negative. Raises
    :class:`InsufficientBundleError` when every partial sum is nonnegative.
    """
    lam = np.sort(np.asarray(getattr(exponents, "exponents", exponents), dtype=float))[::-1]
    sums = np.cumsum(lam)
    if lam[0] < 0:
        return 0.0
    nonneg = np.nonzero(sums >= 0)[0]
    j = int(nonneg[-1])  # zero-based; j+1 exponents have a nonnegative sum
    if j + 1 >= lam.size:
        raise InsufficientBundleError(f"all {lam.size} partial sums are nonnegative; increase m")
    return (j + 1) + sums[j] / abs(lam[j + 1])


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    partial_sums: np.ndarray
    kaplan_yorke: float
    ky_status: str  # "ok" or "increase_m"
    converged: bool
    trend: float
    averaging_time: float

    @classmethod
    def from_exponents(cls, exponents, averaging_time=float("nan"), trend=0.0, trend_tol=0.05):
        lam = np.sort(np.asarray(exponents, dtype=float))[::-1]
        try:
            ky, status = kaplan_yorke(lam), "ok"
        except InsufficientBundleError:
            ky, status = float(lam.size), "increase_m"
        return cls(lam, np.cumsum(lam), ky, status, bool(trend <= trend_tol), float(trend), averaging_time)

    @property
    def m(self) -> int:
        return self.exponents.size

    def volume_contraction_crossing(self) -> float:
        """Smallest real ``m >= 1`` with interpolated partial sum ``<= 0`` (``m`` itself if none)."""
        s = self.partial_sums
        if s[0] <= 0:
            return 1.0
        for j in range(1, s.size):
            if s[j] <= 0:
                return j + s[j - 1] / (s[j - 1] - s[j])
        return float(s.size)

    def to_dict(self) -> dict:
        return {
            "exponents": self.exponents.tolist(),
            "partial_sums": self.partial_sums.tolist(),
            "kaplan_yorke": self.kaplan_yorke,
            "ky_status": self.ky_status,
            "volume_contraction_crossing": self.volume_contraction_crossing(),
            "converged": self.converged,
            "trend": self.trend,
            "averaging_time": self.averaging_time,
        }


def q_proxy(report: LyapunovReport, m_real: float) -> float:
    """Piecewise-linear interpolation of the partial sums at real ``m`` in ``[1, m]``."""
    m = report.m
    if not 1.0 <= m_real <= m:
        raise ValueError(f"m_real must lie in [1, {m}], got {m_real}")
    return float(np.interp(m_real, np.arange(1, m + 1), report.partial_sums))


@dataclass
class LyapunovRun:
    report: LyapunovReport
    log: EvolutionLog
    bundle: TangentBundle
    final_state: TrajectoryState
    cfg: SimConfig

    @property
    def avg_grad_energy(self) -> float:
        return self.log.avg_grad_energy


def lyapunov_spectrum(
    cfg: SimConfig,
    u0: SpectralVectorField,
    m: int,
    averaging_time: float,
    burn_in: float | None = None,
    reorthonormalization_interval: float | None = None,
    tangent_burn_in: float = 0.0,
    tangents0: list[SpectralVectorField] | None = None,
    seed: int | None = None,
    trend_tol: float = 0.05,
) -> LyapunovRun:
    """Burn in the base flow (default ``10 / alpha``), then accumulate ``m`` exponents.

    ``tangent_burn_in`` evolves the frame before the accumulators are reset.
    The trend statistic is the largest change of any exponent between the
    first half and the whole averaging window, relative to the largest
    exponent magnitude.
    """
    burn_in = 10.0 / cfg.alpha if burn_in is None else burn_in
    interval = 10 * cfg.dt if reorthonormalization_interval is None else reorthonormalization_interval
    state = TrajectoryState(0.0, u0)
    if burn_in > 0:
        state = simulate(cfg, u0, t_end=burn_in, stepper=Stepper(cfg)).final
    if tangents0 is not None:
        bundle = TangentBundle.from_fields(tangents0, interval)
    else:
        bundle = TangentBundle.random(cfg.grid, m, interval, seed=cfg.seed if seed is None else seed)
    if tangent_burn_in > 0:
        bundle, state, _ = evolve_bundle(bundle, state, cfg, tangent_burn_in, record_forms=False)
        bundle.reset_accumulators()
    half = 0.5 * averaging_time
    half_steps = int(round(half / cfg.dt))
    bundle, state, log = evolve_bundle(bundle, state, cfg, half_steps * cfg.dt)
    first_half = bundle.exponents()
    bundle, state, log = evolve_bundle(bundle, state, cfg, averaging_time - half_steps * cfg.dt, log=log)
    lam = bundle.exponents()
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    trend = float(np.max(np.abs(lam - first_half))) / scale
    report = LyapunovReport.from_exponents(lam, bundle.t_accumulated, trend, trend_tol)
    return LyapunovRun(report, log, bundle, state, cfg)


# ----------------------------------------------------------- trace estimate
@dataclass
class TraceReport:
    instant_min_slack: np.ndarray  # per m' = 1..m, minimum over reorthonormalization instants
    averaged_lhs: np.ndarray  # Lyapunov partial sums
    averaged_rhs: np.ndarray  # -m' + c avg ||grad u||^2
    avg_grad_energy: float

    @property
    def min_instant_slack(self) -> float:
        return float(np.min(self.instant_min_slack))

    @property
    def averaged_holds(self) -> bool:
        return bool(np.all(self.averaged_lhs <= self.averaged_rhs))


def _require_unit_scaling(cfg: SimConfig):
    if cfg.nu != 1.0 or cfg.alpha != 1.0:
        raise ValueError("trace estimate is stated for nu = alpha = 1; rescale the run first")


def trace_slack(u: SpectralVectorField, family: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Instantaneous ``-m' + c ||grad u||^2 - sum_{j<=m'} (L v_j, v_j)`` for ``m' = 1..m``."""
    _require_unit_scaling(cfg)
    dyn = _dynamics_for(cfg)
    forms = _quadratic_forms(dyn, u.coefficients, np.asarray(family))
    g2 = float(cfg.grid.weighted_sq(u.coefficients, cfg.grid.k2))
    mm = np.arange(1, forms.size + 1)
    return -mm + TRACE_CONSTANT * g2 - np.cumsum(forms)


def trace_estimate_check(run: LyapunovRun) -> TraceReport:
    """Compare the evolved frames against ``-m + (16 sqrt 3)^-1 ||grad u||^2``.

    Instantaneous slacks are taken at every reorthonormalization instant;
    the averaged comparison uses the Lyapunov partial sums and the
    time-averaged ``||grad u||^2`` over the same window.
    """
    _require_unit_scaling(run.cfg)
    forms = np.array(run.log.quadratic_forms)  # (instants, m)
    g = np.array(run.log.grad_energy)
    mm = np.arange(1, forms.shape[1] + 1)
    slack = -mm[None, :] + TRACE_CONSTANT * g[:, None] - np.cumsum(forms, axis=1)
    avg = run.avg_grad_energy
    return TraceReport(slack.min(axis=0), run.report.partial_sums, -mm + TRACE_CONSTANT * avg, avg)


# ------------------------------------------------------- quasi-differentiability
@dataclass
class QuasiDifferentialReport:
    eps: np.ndarray
    remainders: np.ndarray
    order: float
    at_floor: bool

    @property
    def passes(self) -> bool:
        return self.at_floor or self.order >= 1.5


def _flow(cfg: SimConfig, c: np.ndarray, n_steps: int) -> np.ndarray:
    st = Stepper(cfg)
    for _ in range(n_steps):
        c = st.advance(c)
    return c


def quasi_differential_check(
    u0: SpectralVectorField,
    xi: SpectralVectorField,
    cfg: SimConfig,
    t: float = 1.0,
    eps_ladder=None,
    floor_rel: float = 1e-12,
) -> QuasiDifferentialReport:
    """Remainders ``||S(t)(u0 + eps xi) - S(t)u0 - eps v(t)||`` along an eps ladder.

    ``v`` solves the equation of variations with ``v(0) = xi``. The fitted
    log-log slope is the order; remainders below ``floor_rel * ||S(t)u0||``
    count as rounding floor.
    """
    u0n = u0.norm()
    xin = xi.norm()
    if eps_ladder is None:
        base = max(u0n, 1e-300) / max(xin, 1e-300)
        eps_ladder = base * np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4])
    eps = np.asarray(eps_ladder, dtype=float)
    if xin > 0 and np.any(eps * xin < 1e-10 * u0n):
        raise ValueError("eps ladder reaches below the rounding floor 1e-10 ||u0||")
    n_steps = int(round(t / cfg.dt))
    mask = cfg.grid.dealias_mask
    c0 = u0.coefficients * mask
    base_final = _flow(cfg, c0, n_steps)
    if xin == 0:
        return QuasiDifferentialReport(eps, np.zeros_like(eps), float("inf"), True)
    _, v = propagate_tangents(SpectralVectorField(c0, cfg.grid), xi.coefficients * mask, cfg, n_steps * cfg.dt)
    v = v[0]
    rem = []
    for e in eps:
        pert = _flow(cfg, c0 + e * xi.coefficients * mask, n_steps)
        rem.append(math.sqrt(cfg.grid.weighted_sq(pert - base_final - e * v, 1.0)))
    rem = np.array(rem)
    floor = floor_rel * math.sqrt(cfg.grid.weighted_sq(base_final, 1.0))
    ok = rem > floor
    if ok.sum() < 2:
        return QuasiDifferentialReport(eps, rem, float("nan"), True)
    order = float(np.polyfit(np.log(eps[ok]), np.log(rem[ok]), 1)[0])
    return QuasiDifferentialReport(eps, rem, order, False)
