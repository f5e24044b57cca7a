"""Closed-form upper bounds for the attractor dimension and the scaling reduction.

All arithmetic is carried out with mpmath at 40 significant digits and
rounded once to float, so values such as 3/256 come out exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .spectral import Grid, SpectralVectorField, rot, sobolev_norm

_DPS = 40


def _mp(x):
    return mpmath.mpf(x)


def _check_positive(**kw):
    for name, val in kw.items():
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")


def _coefficient_mp(s):
    """``(1 - s^2) ((1+|s|)/(1-|s|))^{|s|} / (64 sqrt 3)`` written as
    ``(1+a)^{1+a} (1-a)^{1-a} / (64 sqrt 3)`` with ``a = |s|``; the endpoint
    ``a = 1`` evaluates to ``1 / (16 sqrt 3)`` without a 0^0 special case."""
    a = abs(_mp(s))
    return (1 + a) ** (1 + a) * (1 - a) ** (1 - a) / (64 * mpmath.sqrt(3))


def bound_coefficient(s: float) -> float:
    s = float(s)
    if abs(s) > 1:
        raise ValueError(f"|s| must not exceed 1, got {s}")
    with mpmath.workdps(_DPS):
        return float(_coefficient_mp(s))


def dim_bound_s(nu: float, alpha: float, s: float, norm_s: float) -> float:
    """Dimension bound for forcing in the homogeneous space of order ``s``:

        (1-s^2)/(64 sqrt 3) * ((1+|s|)/(1-|s|))^{|s|} * (nu/alpha)^s / (alpha^2 nu^2) * ||g||_{H^s}^2
    """
    s = float(s)
    if abs(s) > 1:
        raise ValueError(f"|s| must not exceed 1, got {s}")
    _check_positive(nu=nu, alpha=alpha)
    if norm_s < 0:
        raise ValueError("norm must be nonnegative")
    with mpmath.workdps(_DPS):
        nu_, a_ = _mp(nu), _mp(alpha)
        val = _coefficient_mp(s) * (nu_ / a_) ** _mp(s) / (a_**2 * nu_**2) * _mp(norm_s) ** 2
        return float(val)


def dim_bound_rot(nu: float, alpha: float, rot_norm: float) -> float:
    """``||rot g||^2 / (16 sqrt 3 alpha^3 nu)``."""
    _check_positive(nu=nu, alpha=alpha)
    if rot_norm < 0:
        raise ValueError("rot_norm must be nonnegative")
    with mpmath.workdps(_DPS):
        return float(_mp(rot_norm) ** 2 / (16 * mpmath.sqrt(3) * _mp(alpha) ** 3 * _mp(nu)))


def dim_bound_periodic(nu: float, alpha: float, L: float, rot_norm: float) -> float:
    """Periodic-box estimate ``min(sqrt 6 ||rot g|| L / (nu alpha), 3/8 ||rot g||^2 / (nu alpha^3))``.

    ``L`` is the scale of the box ``[0, 2 pi L]^2``, i.e. ``box_length / (2 pi)``.
    """
    _check_positive(nu=nu, alpha=alpha, L=L)
    if rot_norm < 0:
        raise ValueError("rot_norm must be nonnegative")
    with mpmath.workdps(_DPS):
        nu_, a_, L_, r_ = _mp(nu), _mp(alpha), _mp(L), _mp(rot_norm)
        first = mpmath.sqrt(6) * r_ * L_ / (nu_ * a_)
        second = _mp(3) / 8 * r_**2 / (nu_ * a_**3)
        return float(min(first, second))


def dim_via_trace(avg_grad_sq: float) -> float:
    """``avg ||grad u||^2 / (16 sqrt 3)`` for a run scaled to ``nu = alpha = 1``."""
    if avg_grad_sq < 0:
        raise ValueError("time-averaged ||grad u||^2 cannot be negative")
    with mpmath.workdps(_DPS):
        return float(_mp(avg_grad_sq) / (16 * mpmath.sqrt(3)))


def grad_energy_majorant(s: float, norm_s: float) -> float:
    """Bound on the time average of ``||grad u||^2`` at ``nu = alpha = 1``:
    ``(1-s^2)/4 ((1+|s|)/(1-|s|))^{|s|} ||g||_{H^s}^2``."""
    s = float(s)
    if abs(s) > 1:
        raise ValueError(f"|s| must not exceed 1, got {s}")
    with mpmath.workdps(_DPS):
        a = abs(_mp(s))
        return float((1 + a) ** (1 + a) * (1 - a) ** (1 - a) / 4 * _mp(norm_s) ** 2)


# ------------------------------------------------------------------ scaling
@dataclass(frozen=True)
class ScaledProblem:
    """The problem rewritten with ``nu = alpha = 1``.

    ``t' = time_scale * t``, ``x' = length_scale * x``,
    ``u' = velocity_scale * u``, ``g' = forcing_scale * g``.
    """

    grid: Grid
    forcing: SpectralVectorField
    time_scale: float
    length_scale: float
    velocity_scale: float
    forcing_scale: float

    def scale_velocity(self, u: SpectralVectorField) -> SpectralVectorField:
        return SpectralVectorField(u.coefficients * self.velocity_scale, self.grid, u.divergence_free)

    def descriptor(self) -> dict:
        return {
            "nu": 1.0,
            "alpha": 1.0,
            "box_length": self.grid.box_length,
            "time_scale": self.time_scale,
            "length_scale": self.length_scale,
            "velocity_scale": self.velocity_scale,
            "forcing_scale": self.forcing_scale,
        }


def scaling_transform(nu: float, alpha: float, g: SpectralVectorField) -> ScaledProblem:
    """Map ``(nu, alpha, g)`` on a box of side ``L`` to ``(1, 1, g')`` on a box of side
    ``sqrt(alpha/nu) L``, with ``g'(x') = alpha^-1 (alpha nu)^-1/2 g(x)``.

    Fourier coefficients are unchanged up to the constant factor because the
    lattice index set is the same on both boxes.
    """
    _check_positive(nu=nu, alpha=alpha)
    length_scale = math.sqrt(alpha / nu)
    velocity_scale = 1.0 / math.sqrt(alpha * nu)
    forcing_scale = velocity_scale / alpha
    grid = g.grid.with_box_length(g.grid.box_length * length_scale)
    forcing = SpectralVectorField(g.coefficients * forcing_scale, grid, g.divergence_free)
    return ScaledProblem(grid, forcing, alpha, length_scale, velocity_scale, forcing_scale)


# ------------------------------------------------------------------ report
DEFAULT_S_GRID = tuple(np.linspace(-1.0, 1.0, 41))


@dataclass
class BoundInputs:
    nu: float
    alpha: float
    forcing: SpectralVectorField
    s_grid: tuple[float, ...] = DEFAULT_S_GRID

    def __post_init__(self):
        _check_positive(nu=self.nu, alpha=self.alpha)
        s = np.asarray(self.s_grid, dtype=float)
        if s.size == 0:
            raise ValueError("s_grid is empty")
        if np.any(np.abs(s) > 1) or np.any(np.diff(s) <= 0):
            raise ValueError("s_grid must be strictly increasing within [-1, 1]")

    @property
    def box_length(self) -> float:
        return self.forcing.grid.box_length


@dataclass
class BoundReport:
    per_s: list[tuple[float, float, float]]  # (s, ||g||_{H^s}, bound)
    best_s: float
    best_bound: float
    periodic_min_bound: float
    rot_endpoint_bound: float
    rot_norm: float
    grashof: float
    scaled_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_s": [{"s": s, "norm": n, "bound": b} for s, n, b in self.per_s],
            "best_s": self.best_s,
            "best_bound": self.best_bound,
            "periodic_min_bound": self.periodic_min_bound,
            "rot_endpoint_bound": self.rot_endpoint_bound,
            "rot_norm": self.rot_norm,
            "grashof_box": self.grashof,
            "scaled_config": self.scaled_config,
        }


def best_bound_over_s(inputs: BoundInputs) -> BoundReport:
    """Tabulate the bound over ``s_grid`` and pick the minimizer (first one on ties)."""
    g = inputs.forcing
    rows = []
    for s in inputs.s_grid:
        s = float(s)
        norm = sobolev_norm(g, s)
        rows.append((s, norm, dim_bound_s(inputs.nu, inputs.alpha, s, norm)))
    best = min(rows, key=lambda r: r[2])
    rn = rot(g).norm()
    L = inputs.box_length / (2 * math.pi)
    scaled = scaling_transform(inputs.nu, inputs.alpha, g)
    return BoundReport(
        per_s=rows,
        best_s=best[0],
        best_bound=best[2],
        periodic_min_bound=dim_bound_periodic(inputs.nu, inputs.alpha, L, rn),
        rot_endpoint_bound=dim_bound_rot(inputs.nu, inputs.alpha, rn),
        rot_norm=rn,
        grashof=g.norm() * inputs.box_length**2 / inputs.nu**2,
        scaled_config=scaled.descriptor(),
    )
