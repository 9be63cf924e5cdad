"""Configuration files, CSV tables, binary basis/checkpoint files and run manifests.

Config files are flat ``key = value`` text with ``#`` comments; every key
must be a :class:`RunConfig` field.

Binary files start with an 8-byte magic string and the ``uint32`` value
``0x01020304`` written in the file's byte order (files are written
little-endian; either order is read). All arrays follow in C (row-major)
order.

Basis file::

    magic "EEBASIS1", tag, b (f8), l_max, n_theta, n_phi (i8),
    n_galerkin[m] for m = 0..l_max (i8),
    eigenvalues (l_max+1, l_max+1) f8, modes and dmodes (l_max+1, l_max+1, n_theta) f8,
    for each m: Galerkin matrix (n_galerkin[m], n_kept[m]) f8

Checkpoint file::

    magic "EECHKPT1", tag, config length (i8) + UTF-8 config text,
    t (f8), step_count (i8), dt (f8), rows, cols (i8),
    vorticity and stream-integral coefficients for m >= 0, (rows, cols) c16
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import struct
import typing
from pathlib import Path

import numpy as np

from .basis import Basis, SpectralScalar
from .dynamics import RunConfig, SolverState, make_basis
from .geometry import build_geometry

BASIS_MAGIC = b"EEBASIS1"
CHECKPOINT_MAGIC = b"EECHKPT1"
_TAG = 0x01020304


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


class FormatError(ValueError):
    """Binary file does not match the documented layout."""


# -- config --


def _field_types() -> dict:
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # float | str (dt)
        return raw if raw == "auto" else float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key!r}: {raw!r}") from None


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines into a validated :class:`RunConfig`."""
    types = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, types[key])
    for key, val in (overrides or {}).items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = val
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def format_config(config: RunConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in config.as_dict().items())


# -- CSV --


def write_csv(path, columns, rows) -> Path:
    """Comma-separated table; floats with 17 significant digits, booleans as 0/1."""
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    cols = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln], dtype=float)
    return cols, data.reshape(-1, len(cols))


# -- binary helpers --


class _Writer:
    def __init__(self, fh):
        self.fh = fh

    def ints(self, *vals):
        self.fh.write(struct.pack("<%dq" % len(vals), *vals))

    def floats(self, *vals):
        self.fh.write(struct.pack("<%dd" % len(vals), *vals))

    def array(self, arr, dtype):
        self.fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


class _Reader:
    def __init__(self, data: bytes, magic: bytes):
        if data[:8] != magic:
            raise FormatError(f"bad magic {data[:8]!r}, expected {magic!r}")
        (tag,) = struct.unpack("<I", data[8:12])
        if tag == _TAG:
            self.order = "<"
        elif tag == struct.unpack(">I", struct.pack("<I", _TAG))[0]:
            self.order = ">"
        else:
            raise FormatError("unrecognized endianness tag")
        self.data, self.pos = data, 12

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("file truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def ints(self, n: int):
        return struct.unpack(f"{self.order}{n}q", self._take(8 * n))

    def floats(self, n: int):
        return struct.unpack(f"{self.order}{n}d", self._take(8 * n))

    def array(self, shape, dtype):
        dt = np.dtype(dtype).newbyteorder(self.order)
        count = int(np.prod(shape))
        arr = np.frombuffer(self._take(count * dt.itemsize), dtype=dt).reshape(shape)
        return arr.astype(np.dtype(dtype).newbyteorder("="))

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


# -- basis files --


def basis_bytes(basis: Basis) -> bytes:
    if basis.galerkin is None:
        raise ValueError("basis has no Galerkin data to serialize")
    buf = io.BytesIO()
    w = _Writer(buf)
    buf.write(BASIS_MAGIC)
    buf.write(struct.pack("<I", _TAG))
    geo = basis.geometry
    w.floats(geo.b)
    w.ints(basis.l_max, geo.n_theta, geo.n_phi)
    w.ints(*[V.shape[0] for V in basis.galerkin])
    w.array(basis.eigenvalues, "f8")
    w.array(basis.modes, "f8")
    w.array(basis.dmodes, "f8")
    for V in basis.galerkin:
        w.array(V, "f8")
    return buf.getvalue()


def save_basis(basis: Basis, path) -> Path:
    path = Path(path)
    path.write_bytes(basis_bytes(basis))
    return path


def load_basis(path) -> Basis:
    r = _Reader(Path(path).read_bytes(), BASIS_MAGIC)
    (b,) = r.floats(1)
    L, n_theta, n_phi = r.ints(3)
    n_gal = r.ints(L + 1)
    eig = r.array((L + 1, L + 1), "f8")
    modes = r.array((L + 1, L + 1, n_theta), "f8")
    dmodes = r.array((L + 1, L + 1, n_theta), "f8")
    gal = []
    for m in range(L + 1):
        keep = L - m + 1 if m > 0 else L
        gal.append(r.array((n_gal[m], keep), "f8"))
    r.done()
    geo = build_geometry(b, n_theta, n_phi)
    return Basis(geo, L, L, eig, modes, dmodes, tuple(gal))


# -- checkpoints --


def checkpoint_bytes(state: SolverState) -> bytes:
    buf = io.BytesIO()
    w = _Writer(buf)
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", _TAG))
    text = format_config(state.config).encode("utf-8")
    w.ints(len(text))
    buf.write(text)
    w.floats(float(state.t))
    w.ints(int(state.step_count))
    w.floats(float(state.dt))
    zh = state.zeta.half
    w.ints(*zh.shape)
    w.array(zh, "c16")
    w.array(state.psi_integral.half, "c16")
    return buf.getvalue()


def save_checkpoint(state: SolverState, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(state))
    tmp.replace(path)
    return path


def load_checkpoint(path, basis: Basis | None = None) -> SolverState:
    """Restore a solver state; the basis is rebuilt from the stored config unless given."""
    r = _Reader(Path(path).read_bytes(), CHECKPOINT_MAGIC)
    (n,) = r.ints(1)
    config = parse_config(r._take(n).decode("utf-8"))
    (t,) = r.floats(1)
    (steps,) = r.ints(1)
    (dt,) = r.floats(1)
    rows, cols = r.ints(2)
    zh = r.array((rows, cols), "c16")
    ih = r.array((rows, cols), "c16")
    r.done()
    if basis is None:
        basis = make_basis(config)
    if basis.m_max + 1 != rows or basis.l_max + 1 != cols:
        raise FormatError(f"checkpoint shape {(rows, cols)} does not fit the basis")
    return SolverState(
        SpectralScalar.from_half(zh, basis),
        t,
        SpectralScalar.from_half(ih, basis),
        steps,
        config,
        dt if math.isfinite(dt) else float("nan"),
    )


# -- manifests --


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config: dict, seed, started: str, finished: str, outputs, extra: dict | None = None) -> Path:
    """JSON manifest listing every output with its SHA-256."""
    from . import __version__

    path = Path(path)
    files = []
    for out in outputs:
        out = Path(out)
        try:
            name = str(out.relative_to(path.parent))
        except ValueError:
            name = str(out)
        files.append({"path": name, "sha256": sha256_file(out), "bytes": out.stat().st_size})
    doc = {
        "version": __version__,
        "seed": seed,
        "config": {k: (v if not isinstance(v, np.generic) else v.item()) for k, v in config.items()},
        "started": started,
        "finished": finished,
        "outputs": files,
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
