# tests/test_field_io.py
import numpy as np
import pandas as pd
import pytest

from errors import FieldFormatError
from field_io import decode_field, encode_field, read_pair, sidecar_path, write_field_csv, write_pair


def test_header_layout(small_grid, line_pair):
    buf = encode_field(line_pair.u)
    assert buf[:4] == b"ACF1"
    assert np.frombuffer(buf, dtype="<u4", count=3, offset=4).tolist() == [2, 65, 65]
    assert len(buf) == 4 + 4 * 3 + 8 * 3 + 8 * 65 * 65


def test_pair_file_preserves_values_and_metadata(tmp_path, line_pair):
    path = tmp_path / "line.acf"
    write_pair(path, line_pair)
    assert sidecar_path(path).exists()
    loaded = read_pair(path)
    assert np.array_equal(loaded.u.values, line_pair.u.values)
    assert np.array_equal(loaded.v.values, line_pair.v.values)
    assert loaded.grid == line_pair.grid
    assert loaded.domain_radius == pytest.approx(line_pair.domain_radius)
    assert loaded.report.passed
    assert loaded.meta["kind"] == "line"


def test_pair_without_sidecar_is_revalidated(tmp_path, exact_pair):
    path = tmp_path / "exact.acf"
    write_pair(path, exact_pair)
    sidecar_path(path).unlink()
    loaded = read_pair(path)
    assert loaded.report.passed
    assert loaded.domain_radius is None


def test_bad_magic_and_truncation(line_pair):
    buf = encode_field(line_pair.u)
    with pytest.raises(FieldFormatError):
        decode_field(b"XXXX" + buf[4:])
    with pytest.raises(FieldFormatError):
        decode_field(buf[:-8])
    field, end = decode_field(buf + buf, 0)
    assert end == len(buf)


def test_field_csv(tmp_path, line_pair):
    path = tmp_path / "u.csv"
    write_field_csv(path, line_pair.u)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["x1", "x2", "value"]
    assert len(frame) == 65 * 65
    assert frame["value"].max() == pytest.approx(line_pair.u.max)
