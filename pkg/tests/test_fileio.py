import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenwave.fileio import (
    FieldFileError,
    read_field,
    write_field,
    write_field_csv,
    write_pgm,
)
from eigenwave.grid import Grid2D, ScalarField


def test_zero_field_round_trip(tmp_path):
    g = Grid2D(nx=3, nz=3, hx=10.0, hz=10.0)
    f = ScalarField(g, np.zeros(9))
    write_field(tmp_path / "f.ewf", f)
    back = read_field(tmp_path / "f.ewf")
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)


def test_pi_is_bit_identical(tmp_path):
    g = Grid2D(nx=3, nz=3, hx=10.0, hz=10.0)
    vals = np.zeros(9)
    vals[4] = np.pi
    write_field(tmp_path / "f.ewf", ScalarField(g, vals))
    back = read_field(tmp_path / "f.ewf")
    assert back.values[4].tobytes() == np.float64(np.pi).tobytes()


def test_payload_size_mismatch(tmp_path):
    path = tmp_path / "bad.ewf"
    payload = np.zeros(8).tobytes()  # header promises 9 values
    path.write_bytes(b"EWF1 3 3 10 10 0 0\n" + payload)
    with pytest.raises(FieldFileError, match="size mismatch"):
        read_field(path)


def test_bad_header(tmp_path):
    path = tmp_path / "bad.ewf"
    path.write_bytes(b"NOPE 3 3 10 10 0 0\n" + np.zeros(9).tobytes())
    with pytest.raises(FieldFileError):
        read_field(path)
    path.write_bytes(b"EWF1 3 3 10 10 0\n" + np.zeros(9).tobytes())
    with pytest.raises(FieldFileError):
        read_field(path)


@given(seed=st.integers(0, 10_000), scale=st.sampled_from([1e-12, 1.0, 1e9]))
@settings(max_examples=20, deadline=None)
def test_round_trip_is_bit_exact(tmp_path_factory, seed, scale):
    rng = np.random.default_rng(seed)
    g = Grid2D(nx=5, nz=4, hx=12.5, hz=7.25, x0=-3.0, z0=11.0)
    vals = scale * rng.standard_normal(20)
    f = ScalarField(g, vals)
    path = tmp_path_factory.mktemp("rt") / "f.ewf"
    write_field(path, f)
    back = read_field(path)
    assert back.grid == g
    assert back.values.tobytes() == f.values.tobytes()


def test_csv_export_is_lossless(tmp_path):
    rng = np.random.default_rng(5)
    g = Grid2D(nx=4, nz=3, hx=2.5, hz=1.5, x0=10.0)
    f = ScalarField(g, rng.standard_normal(12))
    path = tmp_path / "f.csv"
    write_field_csv(path, f)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,z,value"
    assert len(lines) == 13
    # 17 significant digits round-trip float64 exactly
    row = lines[1 + 2 * 4 + 3].split(",")  # node (ix=3, iz=2)
    assert float(row[0]) == g.node_x(3)
    assert float(row[1]) == g.node_z(2)
    assert float(row[2]) == f.values[2 * 4 + 3]


def test_pgm_quicklook(tmp_path):
    g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
    f = ScalarField(g, np.linspace(0.0, 1.0, 12))
    path = tmp_path / "f.pgm"
    write_pgm(path, f)
    raw = path.read_bytes()
    header, data = raw.split(b"255\n", 1)
    assert header == b"P5\n4 3\n"
    assert len(data) == 12
    assert data[0] == 0 and data[-1] == 255


def test_pgm_constant_field(tmp_path):
    g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
    write_pgm(tmp_path / "c.pgm", ScalarField(g, np.full(9, 7.0)))
    data = (tmp_path / "c.pgm").read_bytes().split(b"255\n", 1)[1]
    assert set(data) == {0}
