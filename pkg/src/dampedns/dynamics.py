"""Damped, driven Navier-Stokes on the periodic box.

    du/dt + (u, grad) u + grad p + alpha u = nu Lap u + g,   div u = 0

Pressure is eliminated by Leray projection; the nonlinearity is evaluated
pseudo-spectrally in rotational form ``P(omega u_perp)`` (which differs from
``P((u, grad) u)`` only by a projected-out gradient) and dealiased with the
two-thirds mask.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .integrators import INTEGRATORS, make_integrator
from .spectral import Grid, SpectralVectorField, leray_project, nonlinear_term

log = logging.getLogger(__name__)


class BlowUpError(RuntimeError):
    """Raised when the state becomes non-finite; carries the last good diagnostics."""

    def __init__(self, message, t=None, last_record=None):
        super().__init__(message)
        self.t = t
        self.last_record = last_record


@dataclass(frozen=True, eq=False)
class SimConfig:
    nu: float
    alpha: float
    forcing: SpectralVectorField
    grid: Grid
    dt: float
    t_end: float
    integrator: str = "exponential_rk4"
    sample_interval: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("nu", "alpha", "dt", "t_end"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.sample_interval is None:
            object.__setattr__(self, "sample_interval", self.dt)
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        ratio = self.sample_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError("sample_interval must be a positive integer multiple of dt")
        if self.forcing.grid != self.grid:
            raise ValueError("forcing lives on a different grid")
        g = self.forcing
        gn = g.norm()
        if np.any(g.coefficients[:, 0, 0] != 0):
            raise ValueError("forcing must be mean-free (g_hat(0) = 0)")
        if g.max_divergence() > 1e-12 * max(gn, 1e-300) * self.grid.k0 * self.grid.n:
            raise ValueError("forcing must be divergence-free")
        if np.any(g.coefficients[:, ~self.grid.dealias_mask] != 0):
            raise ValueError("forcing must lie inside the dealiased band")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_interval / self.dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def linear_multiplier(self) -> np.ndarray:
        return -self.alpha - self.nu * self.grid.k2

    def stability_number(self) -> float:
        """``dt * (alpha + nu k_max^2)`` over the dealiased band."""
        k2max = float(np.max(self.grid.k2[self.grid.dealias_mask]))
        return self.dt * (self.alpha + self.nu * k2max)

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    u: SpectralVectorField


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    energy: float
    grad_energy: float
    laplacian_energy: float
    forcing_power: float
    strong_forcing_power: float
    energy_residual: float = 0.0
    strong_energy_residual: float = 0.0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list[float]:
        return [getattr(self, c) for c in self.columns()]


@dataclass
class Trajectory:
    """Sampled output of a run: diagnostics rows and, optionally, the sampled states."""

    records: list[DiagnosticsRecord]
    states: list[TrajectoryState] = field(default_factory=list)
    final: TrajectoryState | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")


# --------------------------------------------------------------- kernels
class Dynamics:
    """Array-level right-hand side pieces for one configuration (cached per config)."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.mask = cfg.grid.dealias_mask
        self.lin = cfg.linear_multiplier
        self.g = cfg.forcing.coefficients

    def _physical_with_vorticity(self, c: np.ndarray) -> np.ndarray:
        grid = self.grid
        stack = np.concatenate([c, grid.curl(c)[..., None, :, :]], axis=-3)
        return grid.to_physical(stack)

    def advection(self, c: np.ndarray) -> np.ndarray:
        """``-mask * P((u, grad) u)`` for coefficient arrays ``(..., 2, n, n)``."""
        p = self._physical_with_vorticity(c)
        u1, u2, w = p[..., 0, :, :], p[..., 1, :, :], p[..., 2, :, :]
        prod = np.stack([w * u2, -w * u1], axis=-3)
        return self.grid.project(self.grid.to_spectral(prod)) * self.mask

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        """Everything but the diagonal linear part: advection plus forcing."""
        return self.advection(c) + self.g

    def tangent_nonlinear(self, y: np.ndarray) -> np.ndarray:
        """Nonlinear part for a stacked state ``y = [u, v_1, ..., v_m]``.

        Row 0 gets ``-P((u, grad) u) + g``; rows ``j >= 1`` get the linearized
        advection ``-P((v_j, grad) u + (u, grad) v_j)``.
        """
        p = self._physical_with_vorticity(y)
        u1, u2, wu = p[0, 0], p[0, 1], p[0, 2]
        v1, v2, wv = p[1:, 0], p[1:, 1], p[1:, 2]
        prod = np.empty(y.shape, dtype=np.float64)
        prod[0, 0] = wu * u2
        prod[0, 1] = -wu * u1
        prod[1:, 0] = wu * v2 + wv * u2
        prod[1:, 1] = -(wu * v1 + wv * u1)
        out = self.grid.project(self.grid.to_spectral(prod)) * self.mask
        out[0] += self.g
        return out


@lru_cache(maxsize=16)
def _dynamics_for(cfg: SimConfig) -> Dynamics:
    return Dynamics(cfg)


def rhs(u: SpectralVectorField, cfg: SimConfig) -> SpectralVectorField:
    """``P(-(u, grad) u) - alpha u + nu Lap u + g``."""
    dyn = _dynamics_for(cfg)
    c = dyn.advection(u.coefficients) + dyn.lin * u.coefficients + dyn.g
    return SpectralVectorField(c, cfg.grid, True)


def advective_rhs(u: SpectralVectorField, cfg: SimConfig) -> SpectralVectorField:
    """Same as :func:`rhs` but built from the advective-form :func:`nonlinear_term`."""
    adv = leray_project(nonlinear_term(u))
    c = -adv.coefficients + cfg.linear_multiplier * u.coefficients + cfg.forcing.coefficients
    return SpectralVectorField(c * cfg.grid.dealias_mask, cfg.grid, True)


class Stepper:
    """Stateful time stepper for one trajectory."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.dyn = _dynamics_for(cfg)
        self.integrator = make_integrator(cfg.integrator, self.dyn.lin, cfg.dt)

    def advance(self, c: np.ndarray) -> np.ndarray:
        return self.integrator.step(c, self.dyn.nonlinear)


def step(state: TrajectoryState, cfg: SimConfig, stepper: Stepper | None = None) -> TrajectoryState:
    """Advance one time step. Pass a persistent ``stepper`` for multistep schemes."""
    stepper = stepper or Stepper(cfg)
    c = stepper.advance(state.u.coefficients)
    if not np.all(np.isfinite(c)):
        raise BlowUpError(f"non-finite state at t={state.t + cfg.dt:.6g}", t=state.t + cfg.dt)
    return TrajectoryState(state.t + cfg.dt, SpectralVectorField(c, cfg.grid, True))


def diagnostics(u: SpectralVectorField, cfg: SimConfig, t: float) -> DiagnosticsRecord:
    grid = cfg.grid
    c = u.coefficients
    g = cfg.forcing.coefficients
    k2 = grid.k2
    return DiagnosticsRecord(
        t=float(t),
        energy=float(grid.weighted_sq(c, 1.0)),
        grad_energy=float(grid.weighted_sq(c, k2)),
        laplacian_energy=float(grid.weighted_sq(c, k2 * k2)),
        forcing_power=float(grid.inner(g, c)),
        strong_forcing_power=float(-grid.inner(g, k2 * c)),
    )


def simulate(
    cfg: SimConfig,
    u0: SpectralVectorField,
    *,
    t0: float = 0.0,
    t_end: float | None = None,
    store_states: bool = False,
    on_sample=None,
    stepper: Stepper | None = None,
    start_step: int = 0,
    prior_records: list[DiagnosticsRecord] | None = None,
) -> Trajectory:
    """Integrate to ``t_end`` (default ``cfg.t_end``), sampling diagnostics.

    Step ``j`` sits at time ``t0 + j * dt``; ``u0`` is the state at step
    ``start_step``. A fresh run (``start_step == 0``) projects ``u0`` onto
    divergence-free, mean-free, dealiased fields; a resumed run takes the
    state as is and appends to ``prior_records`` so that it reproduces an
    uninterrupted run bit for bit. ``on_sample(state, record, step, stepper)``
    is called at every sample, which is how checkpointing hooks in. Residual
    columns are filled in at the end.
    """
    t_end = cfg.t_end if t_end is None else t_end
    n_total = int(round((t_end - t0) / cfg.dt))
    stepper = stepper or Stepper(cfg)
    if start_step == 0:
        c = cfg.grid.project(u0.coefficients) * cfg.grid.dealias_mask
    else:
        c = np.array(u0.coefficients, dtype=np.complex128)
    state = TrajectoryState(t0 + start_step * cfg.dt, SpectralVectorField(c, cfg.grid, True))
    if prior_records:
        records = list(prior_records)
    else:
        records = [diagnostics(state.u, cfg, state.t)]
        if on_sample is not None:
            on_sample(state, records[-1], start_step, stepper)
    states = [state] if store_states else []
    every = cfg.steps_per_sample
    for j in range(start_step + 1, n_total + 1):
        # overflow is caught below as a blow-up, not warned about
        with np.errstate(over="ignore", invalid="ignore"):
            c = stepper.advance(c)
        if j % every == 0 or j == n_total:
            t = t0 + j * cfg.dt
            state = TrajectoryState(t, SpectralVectorField(c, cfg.grid, True))
            with np.errstate(over="ignore", invalid="ignore"):
                rec = diagnostics(state.u, cfg, t) if np.all(np.isfinite(c)) else None
            if rec is None or not np.isfinite(rec.laplacian_energy):
                raise BlowUpError(
                    f"non-finite state between t={records[-1].t:.6g} and t={t:.6g}",
                    t=t,
                    last_record=records[-1],
                )
            records.append(rec)
            if store_states:
                states.append(state)
            if on_sample is not None:
                on_sample(state, records[-1], j, stepper)
    final = TrajectoryState(t0 + max(n_total, start_step) * cfg.dt, SpectralVectorField(c, cfg.grid, True))
    from .energy import fill_residuals

    return Trajectory(fill_residuals(records, cfg), states, final)


class WallClock:
    """Tiny helper: true once every ``seconds`` of wall time."""

    def __init__(self, seconds: float):
        self.seconds = seconds
        self._last = time.monotonic()

    def due(self) -> bool:
        now = time.monotonic()
        if now - self._last >= self.seconds:
            self._last = now
            return True
        return False
