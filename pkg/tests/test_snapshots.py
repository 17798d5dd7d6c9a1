"""Binary snapshot format: bit-exact round trips and corruption handling."""

import numpy as np
import pytest

from paleomag.errors import ConfigError
from paleomag.grid import FieldState, make_grid
from paleomag.kinematics import dev, sym
from paleomag.snapshots import MAGIC, read_snapshot, write_snapshot


def random_state(grid, seed=11):
    rng = np.random.default_rng(seed)
    s = FieldState.zeros(grid)
    s.v[...] = rng.normal(size=s.v.shape)
    s.Ee[...] = sym(rng.normal(size=s.Ee.shape))
    s.Ep[...] = dev(sym(rng.normal(size=s.Ep.shape)))
    s.m[...] = rng.normal(size=s.m.shape)
    s.u[...] = rng.normal(size=s.u.shape)
    s.w[...] = rng.uniform(0.5, 2.0, size=s.w.shape)
    s.t = 3.14159
    return s


@pytest.mark.parametrize("dim,extents,cells", [(0, (), ()), (2, (1.0, 2.0), (6, 4))])
def test_roundtrip_bit_exact(tmp_path, dim, extents, cells):
    grid = make_grid(dim, extents, cells)
    state = random_state(grid)
    path = tmp_path / "snap.bin"
    write_snapshot(path, state, grid)
    back, grid_back = read_snapshot(path)
    assert grid_back == grid
    assert back.t == state.t
    for name in ("v", "Ee", "Ep", "m", "u", "w"):
        a, b = getattr(state, name), getattr(back, name)
        assert a.shape == b.shape
        assert np.array_equal(a, b)  # bit-exact, no tolerance


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTASNAP" + b"\x00" * 64)
    with pytest.raises(ConfigError, match="magic"):
        read_snapshot(path)


def test_truncated_payload(tmp_path, grid0):
    state = FieldState.zeros(grid0, w0=1.0)
    path = tmp_path / "trunc.bin"
    write_snapshot(path, state, grid0)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(ConfigError, match="truncated"):
        read_snapshot(path)


def test_corrupt_header(tmp_path, grid0):
    state = FieldState.zeros(grid0, w0=1.0)
    path = tmp_path / "hdr.bin"
    write_snapshot(path, state, grid0)
    blob = bytearray(path.read_bytes())
    blob[20] ^= 0xFF  # scramble a header byte past the length field
    path.write_bytes(bytes(blob))
    with pytest.raises(ConfigError):
        read_snapshot(path)


def test_magic_constant():
    assert MAGIC == b"PMAGSNP1"
