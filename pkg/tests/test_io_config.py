import json
import math
import struct

import numpy as np
import pytest

from dampedns.config import (
    ConfigError,
    build_field,
    config_hash,
    initial_field,
    load_document,
    load_run,
    normalize_run,
    sim_config,
)
from dampedns.dynamics import SimConfig, simulate
from dampedns.io import (
    DIAGNOSTICS_HEADER,
    SnapshotFormatError,
    field_from_json,
    field_to_json,
    load_snapshot,
    read_diagnostics_csv,
    save_snapshot,
    write_diagnostics_csv,
    write_json,
)
from dampedns.spectral import Grid, SpectralVectorField, random_field

BASE = {
    "nu": 0.05,
    "alpha": 0.2,
    "dt": 0.02,
    "t_end": 0.4,
    "grid": {"n": 16},
    "forcing": {"kind": "random_band", "k_min": 1, "k_max": 3, "norm": 0.5, "seed": 1},
    "initial": {"kind": "random_band", "k_max": 4, "norm": 1.0, "seed": 2},
}


def doc(**changes):
    d = json.loads(json.dumps(BASE))
    d.update(changes)
    return d


class TestSnapshot:
    def test_round_trip_bit_exact(self, tmp_path, grid32):
        f = random_field(grid32, 3)
        save_snapshot(tmp_path / "a.snap", f)
        g = load_snapshot(tmp_path / "a.snap")
        np.testing.assert_array_equal(f.coefficients, g.coefficients)
        assert g.grid == grid32

    def test_layout(self, tmp_path):
        grid = Grid(8, 3.5)
        f = random_field(grid, 0)
        save_snapshot(tmp_path / "a.snap", f)
        raw = (tmp_path / "a.snap").read_bytes()
        magic, version, n, box = struct.unpack_from("<8sIId", raw)
        assert (magic, version, n, box) == (b"DNSFIELD", 1, 8, 3.5)
        payload = np.frombuffer(raw[24:], dtype="<f8")
        assert payload.size == 2 * 2 * 8 * 8
        assert payload[0] == f.coefficients[0, 0, 0].real and payload[3] == f.coefficients[0, 0, 1].imag

    @pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
    def test_corrupt_files(self, tmp_path, grid16, mutate):
        p = tmp_path / "a.snap"
        save_snapshot(p, random_field(grid16, 0))
        raw = bytearray(p.read_bytes())
        if mutate == "magic":
            raw[0:1] = b"X"
        elif mutate == "version":
            raw[8:12] = struct.pack("<I", 99)
        else:
            raw = raw[:-5]
        p.write_bytes(bytes(raw))
        with pytest.raises(SnapshotFormatError):
            load_snapshot(p)

    def test_json_round_trip(self, grid16):
        f = random_field(grid16, 4)
        back = field_from_json(json.loads(json.dumps(field_to_json(f))))
        np.testing.assert_array_equal(back.coefficients, f.coefficients)

    def test_json_size_limit(self):
        with pytest.raises(ValueError):
            field_to_json(SpectralVectorField.zeros(Grid(128)))

    def test_json_shape_check(self, grid16):
        d = field_to_json(random_field(grid16, 0))
        d["n"] = 32
        with pytest.raises(SnapshotFormatError):
            field_from_json(d)


class TestDiagnosticsCsv:
    def test_round_trip(self, tmp_path, grid16):
        cfg = SimConfig(0.05, 0.1, random_field(grid16, 1, band=3), grid16, 0.05, 0.5)
        recs = simulate(cfg, random_field(grid16, 2)).records
        write_diagnostics_csv(tmp_path / "d.csv", recs)
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",".join(DIAGNOSTICS_HEADER)
        assert read_diagnostics_csv(tmp_path / "d.csv") == recs

    def test_bad_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_diagnostics_csv(tmp_path / "d.csv")

    def test_write_json_sorted(self, tmp_path):
        write_json(tmp_path / "x.json", {"b": 1, "a": [1.5]})
        assert json.loads((tmp_path / "x.json").read_text()) == {"a": [1.5], "b": 1}
        assert (tmp_path / "x.json").read_text().index('"a"') < (tmp_path / "x.json").read_text().index('"b"')


class TestConfig:
    def test_defaults(self):
        run = normalize_run(doc())
        assert run["integrator"] == "exponential_rk4"
        assert run["sample_interval"] == run["dt"] and run["seed"] == 0
        assert run["grid"]["box_length"] == 2 * math.pi
        assert run["lyapunov"]["m"] == 8 and run["checkpoint"]["wall_seconds"] == 60.0

    def test_toml_and_json_agree(self, tmp_path):
        toml = """
nu = 0.05
alpha = 0.2
dt = 0.02
t_end = 0.4
[grid]
n = 16
[forcing]
kind = "random_band"
k_min = 1
k_max = 3
norm = 0.5
seed = 1
[initial]
kind = "random_band"
k_max = 4
norm = 1.0
seed = 2
"""
        (tmp_path / "r.toml").write_text(toml)
        (tmp_path / "r.json").write_text(json.dumps(BASE))
        a, b = load_run(tmp_path / "r.toml"), load_run(tmp_path / "r.json")
        assert a == b and config_hash(a) == config_hash(b)

    def test_hash_sensitivity(self):
        assert config_hash(normalize_run(doc())) != config_hash(normalize_run(doc(nu=0.06)))
        assert config_hash(normalize_run(doc())) == config_hash(normalize_run(doc()))

    @pytest.mark.parametrize(
        "bad",
        [
            {"nu": -1.0},
            {"dt": "fast"},
            {"integrator": "rk45"},
            {"grid": {"n": 12}},
            {"colour": 1},
            {"forcing": {"kind": "magic"}},
            {"forcing": {"kind": "random_band", "k_min": 30, "k_max": 40}},
            {"forcing": {"kind": "modes", "modes": [{"k": [0, 0], "amplitude": 1.0}]}},
            {"lyapunov": {"m": 0}},
            {"lyapunov": {"q": 1}},
            {"sample_interval": 0.03},
            {"checkpoint": {"wall_seconds": 0}},
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            normalize_run(doc(**bad))

    def test_missing_grid_and_key(self):
        d = doc()
        del d["grid"]
        with pytest.raises(ConfigError, match="grid"):
            normalize_run(d)
        d = doc()
        del d["nu"]
        with pytest.raises(ConfigError, match="nu"):
            normalize_run(d)

    def test_unreadable_and_unparsable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_document(tmp_path / "missing.toml")
        (tmp_path / "bad.toml").write_text("nu = = 1")
        with pytest.raises(ConfigError):
            load_document(tmp_path / "bad.toml")

    def test_modes_descriptor(self, grid16):
        f = build_field({"kind": "modes", "modes": [{"k": [1, 0], "amplitude": 2.0}, {"k": [1, 1], "amplitude": [1.0, 0.0]}]}, grid16, "forcing")
        assert f.max_divergence() < 1e-14
        # scalar amplitude along k_perp: (1, 0) -> direction (0, 1)
        assert f.coefficients[1, 1, 0] != 0 and f.coefficients[0, 1, 0] == 0

    def test_snapshot_initial(self, tmp_path, grid16):
        u = random_field(grid16, 9)
        save_snapshot(tmp_path / "u0.snap", u)
        run = normalize_run(doc(initial={"kind": "snapshot", "path": "u0.snap"}))
        np.testing.assert_array_equal(initial_field(run, tmp_path).coefficients, u.coefficients)
        with pytest.raises(ConfigError):
            initial_field(normalize_run(doc(initial={"kind": "snapshot", "path": "nope.snap"})), tmp_path)

    def test_sim_config(self):
        cfg = sim_config(normalize_run(doc(sample_interval=0.1)))
        assert cfg.steps_per_sample == 5 and cfg.grid.n == 16
        assert cfg.forcing.norm() == pytest.approx(0.5)
