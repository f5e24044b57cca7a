"""Run configuration documents (TOML or JSON) and their canonical hash.

A run document::

    nu = 0.01
    alpha = 0.1
    dt = 0.01
    t_end = 50.0
    integrator = "exponential_rk4"     # or "imex_cn_ab2"
    sample_interval = 0.1              # multiple of dt, default dt
    seed = 0

    [grid]
    n = 64
    box_length = 6.283185307179586     # default 2 pi

    [forcing]                          # see build_field for descriptor kinds
    kind = "random_band"
    k_min = 3
    k_max = 5
    norm = 1.0
    seed = 1

    [initial]                          # same descriptor kinds, plus "zero" and "snapshot"
    kind = "random_band"
    k_max = 8
    norm = 1.0

    [lyapunov]                         # only read by the lyapunov analysis
    m = 8
    reorthonormalization_interval = 0.1
    burn_in = 100.0
    averaging_time = 200.0
    tangent_burn_in = 10.0

    [bounds]
    s_grid = [-1.0, -0.5, 0.0, 0.5, 1.0]   # default 41 points on [-1, 1]

    [checkpoint]
    wall_seconds = 60.0
    every_samples = 0                   # >0 adds a sample-count cadence

Missing optional sections take the defaults above. Unknown top-level keys
are rejected so typos fail fast.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .dynamics import SimConfig
from .integrators import INTEGRATORS
from .spectral import Grid, SpectralVectorField, field_from_modes, random_field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


RUN_KEYS = {
    "nu", "alpha", "dt", "t_end", "integrator", "sample_interval", "seed",
    "grid", "forcing", "initial", "lyapunov", "bounds", "checkpoint",
    "label", "analyses",
}
LYAPUNOV_DEFAULTS = {
    "m": 8,
    "reorthonormalization_interval": None,
    "burn_in": None,
    "averaging_time": 100.0,
    "tangent_burn_in": 0.0,
}
CHECKPOINT_DEFAULTS = {"wall_seconds": 60.0, "every_samples": 0}


def load_document(path) -> dict:
    """Parse a TOML or JSON file (chosen by suffix; ``.json`` is JSON, anything else TOML)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(doc) -> str:
    """SHA-256 of the canonical JSON form of a normalized document."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


# ------------------------------------------------------------------ helpers
def _get(doc, key, ctx, kind=float, default=None, required=True):
    if key not in doc:
        if required and default is None:
            raise ConfigError(f"missing required key '{ctx}{key}'")
        return default
    val = doc[key]
    try:
        if kind is float:
            if isinstance(val, bool):
                raise TypeError
            val = float(val)
            if not math.isfinite(val):
                raise ValueError
        elif kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            val = int(val)
        elif kind is str and not isinstance(val, str):
            raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"key '{ctx}{key}' has invalid value {val!r} (expected {kind.__name__})") from None
    return val


def _positive(doc, key, ctx="", default=None, required=True):
    val = _get(doc, key, ctx, float, default, required)
    if val is not None and not val > 0:
        raise ConfigError(f"key '{ctx}{key}' must be positive, got {val!r}")
    return val


def build_field(desc: dict | None, grid: Grid, ctx: str, base_dir: Path | None = None) -> SpectralVectorField:
    """Build a divergence-free field from a descriptor.

    ``kind = "zero"``; ``kind = "modes"`` with ``modes = [{k = [k1, k2], amplitude = a}]``
    where a scalar ``a`` is taken along ``k_perp/|k|`` and a 2-vector is projected;
    ``kind = "random_band"`` with ``k_min``, ``k_max`` (integer indices, annulus),
    ``norm``, ``seed``; ``kind = "snapshot"`` with ``path`` (initial data only).
    """
    if desc is None:
        return SpectralVectorField.zeros(grid)
    if not isinstance(desc, dict):
        raise ConfigError(f"'{ctx}' must be a table")
    kind = _get(desc, "kind", ctx + ".", str)
    if kind == "zero":
        return SpectralVectorField.zeros(grid)
    if kind == "modes":
        modes = desc.get("modes")
        if not isinstance(modes, list) or not modes:
            raise ConfigError(f"'{ctx}.modes' must be a nonempty list")
        entries = []
        for i, m in enumerate(modes):
            where = f"{ctx}.modes[{i}]"
            try:
                k1, k2 = (int(x) for x in m["k"])
                amp = m["amplitude"]
            except (KeyError, TypeError, ValueError):
                raise ConfigError(f"'{where}' needs k = [k1, k2] and amplitude") from None
            if k1 == 0 and k2 == 0:
                raise ConfigError(f"'{where}.k' must be nonzero")
            if np.ndim(amp) == 0:
                vec = float(amp) * np.array([-k2, k1]) / math.hypot(k1, k2)
            elif np.shape(amp) == (2,):
                vec = np.asarray(amp, dtype=float)
            else:
                raise ConfigError(f"'{where}.amplitude' must be a scalar or a 2-vector")
            entries.append(((k1, k2), vec))
        try:
            return field_from_modes(grid, entries)
        except ValueError as exc:
            raise ConfigError(f"'{ctx}.modes': {exc}") from None
    if kind == "random_band":
        k_max = _positive(desc, "k_max", ctx + ".")
        k_min = _get(desc, "k_min", ctx + ".", float, 0.0, required=False)
        norm = _get(desc, "norm", ctx + ".", float, 1.0, required=False)
        seed = _get(desc, "seed", ctx + ".", int, 0, required=False)
        decay = _get(desc, "decay", ctx + ".", float, 2.0, required=False)
        mask = grid.band_mask(k_max, k_min, square=False)
        if not mask.any():
            raise ConfigError(f"'{ctx}': band [{k_min}, {k_max}] contains no modes")
        return random_field(grid, seed, norm=norm, decay=decay, mask=mask)
    if kind == "snapshot":
        from .io import load_snapshot

        p = Path(_get(desc, "path", ctx + ".", str))
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        try:
            f = load_snapshot(p)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"'{ctx}.path': {exc}") from None
        if f.grid != grid:
            raise ConfigError(f"'{ctx}.path': snapshot grid {f.grid} differs from {grid}")
        return f
    raise ConfigError(f"'{ctx}.kind' must be one of zero, modes, random_band, snapshot; got {kind!r}")


# --------------------------------------------------------------- run specs
def normalize_run(doc: dict) -> dict:
    """Validate a run document and fill defaults; the result is what gets hashed."""
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a table")
    unknown = set(doc) - RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}")
    out = {}
    for key in ("nu", "alpha", "dt", "t_end"):
        out[key] = _positive(doc, key)
    integ = _get(doc, "integrator", "", str, "exponential_rk4", required=False)
    if integ not in INTEGRATORS:
        raise ConfigError(f"key 'integrator' must be one of {INTEGRATORS}, got {integ!r}")
    out["integrator"] = integ
    out["sample_interval"] = _positive(doc, "sample_interval", default=out["dt"], required=False)
    out["seed"] = _get(doc, "seed", "", int, 0, required=False)
    grid = doc.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("missing required table 'grid'")
    n = _get(grid, "n", "grid.", int)
    if n < 4 or n & (n - 1):
        raise ConfigError(f"key 'grid.n' must be a power of two >= 4, got {n}")
    out["grid"] = {"n": n, "box_length": _positive(grid, "box_length", "grid.", 2 * math.pi, False)}
    out["forcing"] = copy.deepcopy(doc.get("forcing", {"kind": "zero"}))
    out["initial"] = copy.deepcopy(doc.get("initial", {"kind": "zero"}))
    lyap = dict(LYAPUNOV_DEFAULTS)
    lyap.update(doc.get("lyapunov", {}))
    unknown = set(lyap) - set(LYAPUNOV_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown key(s) in 'lyapunov': {sorted(unknown)}")
    lyap["m"] = _get(lyap, "m", "lyapunov.", int)
    if lyap["m"] < 1:
        raise ConfigError("key 'lyapunov.m' must be >= 1")
    for key in ("reorthonormalization_interval", "burn_in", "averaging_time"):
        if lyap[key] is not None:
            lyap[key] = _get(lyap, key, "lyapunov.", float)
    lyap["tangent_burn_in"] = _get(lyap, "tangent_burn_in", "lyapunov.", float)
    out["lyapunov"] = lyap
    bounds = doc.get("bounds", {})
    if "s_grid" in bounds:
        try:
            out["bounds"] = {"s_grid": [float(s) for s in bounds["s_grid"]]}
        except (TypeError, ValueError):
            raise ConfigError("key 'bounds.s_grid' must be a list of numbers") from None
    else:
        out["bounds"] = {}
    ck = dict(CHECKPOINT_DEFAULTS)
    ck.update(doc.get("checkpoint", {}))
    out["checkpoint"] = {
        "wall_seconds": _positive(ck, "wall_seconds", "checkpoint."),
        "every_samples": _get(ck, "every_samples", "checkpoint.", int),
    }
    # resolve the fields now so descriptor errors surface at parse time
    g = Grid(n, out["grid"]["box_length"])
    build_field(out["forcing"], g, "forcing")
    if out["initial"].get("kind") != "snapshot":
        build_field(out["initial"], g, "initial")
    sim_config(out)
    return out


def grid_of(run: dict) -> Grid:
    return Grid(run["grid"]["n"], run["grid"]["box_length"])


def sim_config(run: dict) -> SimConfig:
    grid = grid_of(run)
    forcing = build_field(run["forcing"], grid, "forcing")
    try:
        return SimConfig(
            nu=run["nu"],
            alpha=run["alpha"],
            forcing=forcing,
            grid=grid,
            dt=run["dt"],
            t_end=run["t_end"],
            integrator=run["integrator"],
            sample_interval=run["sample_interval"],
            seed=run["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def initial_field(run: dict, base_dir: Path | None = None) -> SpectralVectorField:
    return build_field(run["initial"], grid_of(run), "initial", base_dir)


def load_run(path) -> dict:
    return normalize_run(load_document(path))
