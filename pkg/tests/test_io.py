import numpy as np
import pytest
from hypothesis import given, strategies as st

from entirelab.io import (FormatError, config_hash, fmt, read_csv, read_manifest,
                          read_snapshots, write_csv, write_manifest, write_rows,
                          write_snapshots)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrips_float64(x):
    assert float(fmt(x)) == x


def test_fmt_uses_17_significant_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(3) == "3"


@given(vals=st.lists(st.floats(min_value=-1e300, max_value=1e300), min_size=1,
                     max_size=20), t=st.floats(min_value=-100, max_value=100))
def test_snapshots_roundtrip(tmp_path_factory, vals, t):
    path = tmp_path_factory.mktemp("snap") / "s.bin"
    u = np.array(vals)
    assert write_snapshots(path, [(t, -1.5, 0.25, u), (t + 1, -1.5, 0.25, 2 * u)]) == 2
    recs = read_snapshots(path)
    assert recs[0][0] == t and recs[0][1] == -1.5 and recs[0][2] == 0.25
    assert np.array_equal(recs[0][3], u) and np.array_equal(recs[1][3], 2 * u)


def test_truncated_snapshot_rejected(tmp_path):
    path = tmp_path / "s.bin"
    write_snapshots(path, [(0.0, 0.0, 1.0, np.ones(4))])
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_snapshots(path)


def test_csv_roundtrip_and_header(tmp_path):
    x = np.linspace(0, 1, 7)
    write_csv(tmp_path / "a.csv", {"x": x, "y": x**2}, {"c": 0.3})
    header, cols = read_csv(tmp_path / "a.csv")
    assert float(header["c"]) == 0.3
    assert np.array_equal(cols["x"], x) and np.array_equal(cols["y"], x**2)
    with pytest.raises(FormatError):
        write_csv(tmp_path / "b.csv", {"x": x, "y": x[:3]})


def test_rows_union_of_keys(tmp_path):
    write_rows(tmp_path / "r.csv", [{"a": 1, "b": 0.5}, {"a": 2, "c": "z"}])
    _, cols = read_csv(tmp_path / "r.csv")
    assert list(cols) == ["a", "b", "c"]


def test_manifest_roundtrip(tmp_path):
    entries = {"reaction": "cubic:0.3", "n_list": [10.0, 20.0], "grid": {"dx": 0.05},
               "ok": True, "none": None, "count": 3}
    write_manifest(tmp_path / "m.txt", entries)
    m = read_manifest(tmp_path / "m.txt")
    assert m["reaction"] == "cubic:0.3" and m["n_list"] == [10.0, 20.0]
    assert m["grid.dx"] == 0.05 and m["ok"] is True and m["count"] == 3 and m["none"] == "none"


def test_config_hash_stable():
    assert config_hash("a", 0.1, {"k": 1}) == config_hash("a", 0.1, {"k": 1})
    assert config_hash("a", 0.1) != config_hash("a", 0.2)
