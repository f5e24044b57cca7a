"""Numerical checks of the functional inequalities and identities used by the dimension estimates.

Quartic and cubic integrands (``rho^2``, ``|u|^4``, triple products) are
evaluated on a grid zero-padded to ``2n`` points per axis. For inputs inside
the two-thirds band the padded trapezoidal sum is then the exact integral of
the trigonometric polynomial, so identities hold to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import Grid, SpectralVectorField, random_field, sobolev_norm

LIEB_THIRRING_BOUND = 1.0 / (2.0 * math.sqrt(3.0))
_TINY = 1e-300


# ----------------------------------------------------------------- helpers
def _padded_grid(grid: Grid) -> Grid:
    return Grid(2 * grid.n, grid.box_length)


def _pad(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero-pad coefficient arrays ``(..., n, n)`` to ``2n`` (the Nyquist row is dropped)."""
    big = 2 * grid.n
    out = np.zeros(c.shape[:-2] + (big, big), dtype=np.complex128)
    sel = (np.abs(grid.ix) < grid.n // 2) & (np.abs(grid.iy) < grid.n // 2)
    out[..., grid.ix[sel] % big, grid.iy[sel] % big] = c[..., sel]
    return out


def _padded_physical(c: np.ndarray, grid: Grid) -> tuple[np.ndarray, float]:
    """Physical values on the padded grid and the matching cell area."""
    big = _padded_grid(grid)
    return big.to_physical(_pad(c, grid)), big.cell_area


def _grad_sq(c: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.weighted_sq(c, grid.k2)


# ------------------------------------------------------------------ families
@dataclass(frozen=True, eq=False)
class OrthonormalFamily:
    """``m`` divergence-free, mean-free, L2-orthonormal vector fields."""

    m: int
    members: tuple[SpectralVectorField, ...]
    gram_defect: float

    def __post_init__(self):
        if self.m < 1 or len(self.members) != self.m:
            raise ValueError("family size mismatch")
        if not self.gram_defect <= 1e-10:
            raise ValueError(f"family is not orthonormal (Gram defect {self.gram_defect:.3e})")

    @property
    def grid(self) -> Grid:
        return self.members[0].grid

    @property
    def coefficients(self) -> np.ndarray:
        return np.stack([f.coefficients for f in self.members])

    @classmethod
    def from_coefficients(cls, c: np.ndarray, grid: Grid) -> "OrthonormalFamily":
        from .variational import gram_matrix

        c = np.asarray(c)
        defect = float(np.max(np.abs(gram_matrix(c, grid) - np.eye(c.shape[0]))))
        return cls(c.shape[0], tuple(SpectralVectorField(x, grid, True) for x in c), defect)


def band_dimension(grid: Grid, band_limit: float) -> int:
    """Real dimension of the band-limited divergence-free, mean-free subspace."""
    return int(grid.band_mask(band_limit).sum())


def random_orthonormal_family(grid: Grid, m: int, seed=0, band_limit: float | None = None) -> OrthonormalFamily:
    """Gram-Schmidt (via QR) of ``m`` random band-limited divergence-free fields.

    ``band_limit`` defaults to ``n // 4`` so that cubic and quartic products
    stay alias-free even without padding.
    """
    from .variational import orthonormalize

    band = grid.n // 4 if band_limit is None else band_limit
    if m < 1:
        raise ValueError("m must be positive")
    dim = band_dimension(grid, band)
    if m > dim:
        raise ValueError(f"m={m} exceeds the dimension {dim} of the band-limited divergence-free subspace")
    rng = np.random.default_rng(seed)
    c = np.stack([random_field(grid, rng, band=band).coefficients for _ in range(m)])
    q, _ = orthonormalize(c, grid)
    return OrthonormalFamily.from_coefficients(q, grid)


# --------------------------------------------------------------- inequalities
def lieb_thirring_ratio(fam: OrthonormalFamily) -> float:
    """``||rho||^2 / sum_j ||grad v_j||^2`` with ``rho = sum_j |v_j|^2``."""
    grid = fam.grid
    c = fam.coefficients
    denom = float(np.sum(_grad_sq(c, grid)))
    if not denom > 0:
        raise ArithmeticError("zero gradient sum: family is not mean-free")
    v, cell = _padded_physical(c, grid)
    rho = np.sum(v**2, axis=(0, 1))
    return float(np.sum(rho**2) * cell / denom)


def pointwise_inequality_check(A, v) -> np.ndarray:
    """Slack ``2^{-1/2} |A|_F |v|^2 - |(A v, v)|`` for traceless 2x2 ``A``.

    Vectorized over leading axes: ``A`` is ``(..., 2, 2)`` and ``v`` is ``(..., 2)``.
    """
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    fro = np.sqrt(np.sum(A**2, axis=(-2, -1)))
    tr = A[..., 0, 0] + A[..., 1, 1]
    if np.any(np.abs(tr) > 1e-14 * np.maximum(fro, _TINY)):
        raise ValueError("A must be traceless")
    form = np.einsum("...k,...ki,...i->...", v, A, v)
    return fro * np.sum(v**2, axis=-1) / math.sqrt(2.0) - np.abs(form)


def ladyzhenskaya_ratio(u: SpectralVectorField) -> float:
    """``||u||_{L4}^2 / (||u|| ||grad u||)``."""
    grid = u.grid
    c = u.coefficients
    l2 = math.sqrt(grid.weighted_sq(c, 1.0))
    h1 = math.sqrt(_grad_sq(c, grid))
    if l2 == 0 or h1 == 0:
        raise ValueError("ladyzhenskaya_ratio needs a nonzero, non-constant field")
    p, cell = _padded_physical(c, grid)
    l4_sq = math.sqrt(float(np.sum(np.sum(p**2, axis=0) ** 2) * cell))
    return l4_sq / (l2 * h1)


def advection_pairing(u: SpectralVectorField, v: SpectralVectorField) -> float:
    """``((u, grad) v, v)`` by exact quadrature on the padded grid."""
    grid = u.grid
    d = np.stack([1j * grid.dx * v.coefficients, 1j * grid.dy * v.coefficients])
    stack = np.concatenate([u.coefficients[None], v.coefficients[None], d])
    p, cell = _padded_physical(stack, grid)
    up, vp, jac = p[0], p[1], p[2:]
    adv = up[0] * jac[0] + up[1] * jac[1]
    return float(np.sum(adv * vp) * cell)


def divergence_pairing(u: SpectralVectorField, v: SpectralVectorField) -> float:
    """``-1/2 (div u, |v|^2)``; equals :func:`advection_pairing` for any ``u``."""
    grid = u.grid
    div_c = 1j * (grid.dx * u.coefficients[0] + grid.dy * u.coefficients[1])
    p, cell = _padded_physical(np.concatenate([div_c[None], v.coefficients]), grid)
    return float(-0.5 * np.sum(p[0] * (p[1] ** 2 + p[2] ** 2)) * cell)


def orthogonality_residuals(u: SpectralVectorField, v: SpectralVectorField) -> tuple[float, float]:
    """Relative sizes of ``((u, grad) v, v)`` and ``((u, grad) u, Lap u)``."""
    grid = u.grid
    eps = _TINY
    nu_ = math.sqrt(grid.weighted_sq(u.coefficients, 1.0))
    nv = math.sqrt(grid.weighted_sq(v.coefficients, 1.0))
    gv = math.sqrt(_grad_sq(v.coefficients, grid))
    gu = math.sqrt(_grad_sq(u.coefficients, grid))
    lu = math.sqrt(grid.weighted_sq(u.coefficients, grid.k2**2))
    r1 = abs(advection_pairing(u, v)) / (nu_ * gv * nv + eps)
    lap = SpectralVectorField(-grid.k2 * u.coefficients, grid, True)
    # ((u, grad) u, Lap u) is the advection pairing with the second slot split
    d = np.stack([1j * grid.dx * u.coefficients, 1j * grid.dy * u.coefficients])
    p, cell = _padded_physical(np.concatenate([u.coefficients[None], lap.coefficients[None], d]), grid)
    up, lp, jac = p[0], p[1], p[2:]
    adv = up[0] * jac[0] + up[1] * jac[1]
    r2 = abs(float(np.sum(adv * lp) * cell)) / (nu_ * gu * lu + eps)
    return float(r1), float(r2)


def interpolation_slacks(u: SpectralVectorField, s: float) -> tuple[float, float]:
    """Relative slacks of the two homogeneous interpolation inequalities, ``s in [0, 1]``:

        ||u||_{H^s} <= ||u||^{1-s} ||grad u||^s
        ||grad u||_{H^{1-s}} <= ||grad u||^s ||Lap u||^{1-s}
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    n0 = sobolev_norm(u, 0.0)
    n1 = sobolev_norm(u, 1.0)
    n2 = sobolev_norm(u, 2.0)
    lhs1, rhs1 = sobolev_norm(u, s), n0 ** (1 - s) * n1**s
    lhs2, rhs2 = sobolev_norm(u, 2.0 - s), n1**s * n2 ** (1 - s)
    return (rhs1 - lhs1) / max(rhs1, _TINY), (rhs2 - lhs2) / max(rhs2, _TINY)


# -------------------------------------------------------------- trial runners
@dataclass
class IneqTrialReport:
    trials: int
    min_slack: float
    worst_case: dict = field(default_factory=dict)
    empirical_constant: float = float("nan")

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if not math.isfinite(self.min_slack):
            raise ValueError("min_slack must be finite")

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "min_slack": self.min_slack,
            "empirical_constant": self.empirical_constant,
            "worst_case_seed": self.worst_case.get("seed"),
            "worst_case": self.worst_case,
        }


def pointwise_trials(trials: int = 10**6, seed: int = 0, batch: int = 200_000) -> IneqTrialReport:
    """Random traceless ``A`` (not necessarily symmetric) and vectors ``v``.

    ``min_slack`` is relative to ``|A|_F |v|^2``; the empirical constant is
    ``max |(Av, v)| / (|A|_F |v|^2)``, which approaches ``2^{-1/2}``.
    """
    rng = np.random.default_rng(seed)
    worst, worst_idx, const = np.inf, -1, 0.0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        a, bb, cc = rng.standard_normal((3, b))
        A = np.empty((b, 2, 2))
        A[:, 0, 0], A[:, 0, 1], A[:, 1, 0], A[:, 1, 1] = a, bb, cc, -a
        v = rng.standard_normal((b, 2))
        scale = np.sqrt(np.sum(A**2, axis=(1, 2))) * np.sum(v**2, axis=1)
        rel = pointwise_inequality_check(A, v) / scale
        i = int(np.argmin(rel))
        if rel[i] < worst:
            worst, worst_idx = float(rel[i]), done + i
        const = max(const, float(np.max(1.0 / math.sqrt(2.0) - rel)))
        done += b
    return IneqTrialReport(trials, worst, {"seed": seed, "trial": worst_idx}, const)


def saturation_slack(trials: int = 1000, seed: int = 0) -> float:
    """Largest relative slack on symmetric traceless ``A`` with ``v`` its top eigenvector (should be ~0)."""
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, trials))
    A = np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2)
    _, vecs = np.linalg.eigh(A)
    v = vecs[..., :, 1] * rng.uniform(0.1, 10.0, trials)[:, None]
    scale = np.sqrt(np.sum(A**2, axis=(1, 2))) * np.sum(v**2, axis=1)
    return float(np.max(np.abs(pointwise_inequality_check(A, v)) / scale))


def lieb_thirring_trials(
    grid: Grid, trials: int = 100, m_values=range(1, 9), seed: int = 0, band_limit: float | None = None
) -> IneqTrialReport:
    worst, worst_case = np.inf, {}
    count = 0
    for m in m_values:
        for i in range(trials):
            s = seed + i
            r = lieb_thirring_ratio(random_orthonormal_family(grid, m, (s, m), band_limit))
            count += 1
            if LIEB_THIRRING_BOUND - r < worst:
                worst, worst_case = LIEB_THIRRING_BOUND - r, {"seed": s, "m": m, "ratio": r}
    return IneqTrialReport(count, float(worst), worst_case, float(worst_case["ratio"]))


def ladyzhenskaya_trials(grid: Grid, trials: int = 1000, seed: int = 0, band_limit: float | None = None) -> IneqTrialReport:
    """Empirical supremum of the Ladyzhenskaya ratio. The constant is only reported;
    ``min_slack`` is measured against that supremum and is therefore 0."""
    ratios = np.array(
        [ladyzhenskaya_ratio(random_field(grid, seed + i, band=band_limit)) for i in range(trials)]
    )
    i = int(np.argmax(ratios))
    sup = float(ratios[i])
    return IneqTrialReport(trials, float(np.min(sup - ratios)), {"seed": seed + i, "ratio": sup}, sup)


def orthogonality_trials(grid: Grid, trials: int = 1000, seed: int = 0, band_limit: float | None = None) -> IneqTrialReport:
    """``u = v`` random divergence-free fields; slack is minus the worst residual."""
    band = grid.n // 4 if band_limit is None else band_limit
    worst, worst_case = -1.0, {}
    for i in range(trials):
        u = random_field(grid, seed + i, band=band)
        r = max(orthogonality_residuals(u, u))
        if r > worst:
            worst, worst_case = r, {"seed": seed + i, "residual": r}
    return IneqTrialReport(trials, -worst, worst_case, worst)


def interpolation_trials(grid: Grid, trials: int = 1000, seed: int = 0, band_limit: float | None = None) -> IneqTrialReport:
    """Random ``(field, s)`` draws; the empirical constant is the largest ``lhs / rhs``."""
    rng = np.random.default_rng(seed)
    s_vals = rng.uniform(0.0, 1.0, trials)
    worst, worst_case = np.inf, {}
    for i, s in enumerate(s_vals):
        sl = min(interpolation_slacks(random_field(grid, seed + i, band=band_limit), float(s)))
        if sl < worst:
            worst, worst_case = sl, {"seed": seed + i, "s": float(s)}
    return IneqTrialReport(trials, float(worst), worst_case, float(1.0 - worst))


def verify_all(trials: int = 100, n: int = 32, seed: int = 0) -> dict:
    """Run every inequality family with ``trials`` draws each; returns a JSON-ready dict."""
    grid = Grid(n)
    out = {
        "pointwise": pointwise_trials(max(trials, 1) * 1000, seed),
        "lieb_thirring": lieb_thirring_trials(grid, trials, seed=seed),
        "ladyzhenskaya": ladyzhenskaya_trials(grid, trials, seed),
        "orthogonality": orthogonality_trials(grid, trials, seed),
        "interpolation": interpolation_trials(grid, trials, seed),
    }
    res = {k: v.to_dict() for k, v in out.items()}
    res["pointwise"]["saturation_slack"] = saturation_slack(seed=seed)
    res["lieb_thirring"]["bound"] = LIEB_THIRRING_BOUND
    return res
