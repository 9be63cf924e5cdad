import json
import struct

import numpy as np
import pytest
from conftest import cached_basis

from ellipsoid_euler.dynamics import RunConfig, run
from ellipsoid_euler.storage import (
    ConfigError,
    FormatError,
    basis_bytes,
    checkpoint_bytes,
    format_config,
    load_basis,
    load_checkpoint,
    parse_config,
    read_csv,
    save_basis,
    save_checkpoint,
    sha256_file,
    write_csv,
    write_manifest,
)

SMALL = dict(l_max=10, n_theta=32, n_phi=64)


# -- config --


def test_parse_config():
    cfg = parse_config("# comment\nb = 0.8\nomega=100  # trailing\n\nspectral_filter = yes\ndt = 0.001\ninitial_condition = zonal\n")
    assert cfg.b == 0.8 and cfg.omega == 100.0 and cfg.spectral_filter is True
    assert cfg.dt == 0.001 and cfg.initial_condition == "zonal"
    assert parse_config("dt = auto").dt == "auto"


@pytest.mark.parametrize(
    "text",
    ["nonsense = 1", "b = 0.5\nb = 0.6", "b: 0.5", "l_max = ten", "spectral_filter = maybe", "b = 2.0", "initial_condition = swirl"],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_round_trip():
    cfg = RunConfig(b=0.1 + 0.2, omega=1e3 / 3, spectral_filter=True, dt=1 / 7, seed=42)
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(RunConfig())) == RunConfig()


def test_config_overrides():
    assert parse_config("b = 0.5", {"seed": 9}).seed == 9
    with pytest.raises(ConfigError):
        parse_config("", {"bogus": 1})


# -- CSV --


def test_csv_round_trip(tmp_path):
    rows = [(0.1, 1 / 3, True, 7), (np.pi, -2.5e-300, False, 0)]
    path = write_csv(tmp_path / "t.csv", ("a", "b", "c", "d"), rows)
    cols, data = read_csv(path)
    assert cols == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(data, [[0.1, 1 / 3, 1, 7], [np.pi, -2.5e-300, 0, 0]])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ("a",), [(1, 2)])


# -- basis files --


def test_basis_file_round_trip(tmp_path):
    basis = cached_basis(0.8, l_max=8, n_theta=24, n_phi=48)
    path = save_basis(basis, tmp_path / "b.bin")
    back = load_basis(path)
    assert basis_bytes(back) == path.read_bytes()
    assert back.geometry.b == 0.8 and back.l_max == 8
    np.testing.assert_array_equal(back.eigenvalues, basis.eigenvalues)
    np.testing.assert_array_equal(back.modes, basis.modes)


def test_basis_header_layout(tmp_path):
    basis = cached_basis(0.8, l_max=8, n_theta=24, n_phi=48)
    data = basis_bytes(basis)
    assert data[:8] == b"EEBASIS1"
    assert struct.unpack("<I", data[8:12])[0] == 0x01020304
    assert struct.unpack("<d", data[12:20])[0] == 0.8
    assert struct.unpack("<3q", data[20:44]) == (8, 24, 48)


def test_corrupt_basis_files(tmp_path):
    data = basis_bytes(cached_basis(0.8, l_max=8, n_theta=24, n_phi=48))
    for bad in (b"XXXXXXXX" + data[8:], data[:-8], data + b"\0" * 8, data[:8] + b"\0\0\0\0" + data[12:]):
        p = tmp_path / "bad.bin"
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            load_basis(p)


# -- checkpoints --


def test_checkpoint_round_trip(tmp_path):
    cfg = RunConfig(b=0.9, omega=30.0, T=0.02, **SMALL)
    final, _ = run(cfg)
    path = save_checkpoint(final, tmp_path / "c.bin")
    back = load_checkpoint(path)
    assert back.config == cfg and back.t == final.t and back.step_count == final.step_count and back.dt == final.dt
    np.testing.assert_array_equal(back.zeta.coeffs, final.zeta.coeffs)
    np.testing.assert_array_equal(back.psi_integral.coeffs, final.psi_integral.coeffs)
    assert checkpoint_bytes(back) == path.read_bytes()
    assert not (tmp_path / "c.bin.tmp").exists()


def test_resume_from_file_matches(tmp_path):
    cfg = RunConfig(b=0.9, omega=50.0, T=0.08, **SMALL)
    full, _ = run(cfg)
    path = tmp_path / "mid.bin"
    written = []

    def keep_first(state):
        if not written:
            save_checkpoint(state, path)
            written.append(state.step_count)

    run(cfg, callback=keep_first, callback_every=5)
    resumed, _ = run(cfg, state=load_checkpoint(path))
    assert written[0] < full.step_count
    assert np.max(np.abs(resumed.zeta.coeffs - full.zeta.coeffs)) < 1e-12 * np.max(np.abs(full.zeta.coeffs))


def test_checkpoint_basis_mismatch(tmp_path):
    cfg = RunConfig(b=0.9, T=0.01, **SMALL)
    final, _ = run(cfg)
    path = save_checkpoint(final, tmp_path / "c.bin")
    with pytest.raises(FormatError):
        load_checkpoint(path, basis=cached_basis(0.9))


# -- manifests --


def test_manifest(tmp_path):
    out = write_csv(tmp_path / "x.csv", ("a",), [(1.0,)])
    path = write_manifest(tmp_path / "manifest.json", {"b": np.float64(0.5)}, 3, "start", "end", [out], extra={"command": "t"})
    doc = json.loads(path.read_text())
    assert doc["seed"] == 3 and doc["config"] == {"b": 0.5} and doc["command"] == "t"
    assert doc["outputs"] == [{"path": "x.csv", "sha256": sha256_file(out), "bytes": out.stat().st_size}]
    assert doc["version"] and doc["started"] == "start" and doc["finished"] == "end"
