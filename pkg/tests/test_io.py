import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crystalhydro.io import read_csv, read_rle, trajectory_rows, write_rle, write_trajectory_csv


@given(st.lists(st.lists(st.integers(0, 1), min_size=12, max_size=12), min_size=1, max_size=5))
@settings(max_examples=30, deadline=None)
def test_rle_round_trip(tmp_path_factory, snaps):
    path = tmp_path_factory.mktemp("rle") / "s.rle"
    snaps = np.array(snaps, dtype=np.uint8)
    times = np.linspace(0, 1, len(snaps))
    write_rle(path, times, snaps, N=6, n0=2)
    assert path.read_bytes()[:4] == b"CHRL"
    header, t, back = read_rle(path)
    assert header == {"N": 6, "num_vertices": 2, "version": 1}
    np.testing.assert_array_equal(t, times)
    np.testing.assert_array_equal(back, snaps)


def test_rle_bad_magic(tmp_path):
    p = tmp_path / "x.rle"
    p.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError, match="magic"):
        read_rle(p)


def test_trajectory_csv(tmp_path):
    vals = np.array([[0.5, 10.0], [0.25, 10.0]])
    rows = list(trajectory_rows(3, [0.0, 0.1], vals, ["J0", "particle_count"]))
    p = write_trajectory_csv(tmp_path / "t.csv", rows)
    back = read_csv(p)
    assert back[0] == {"replica": "3", "t": "0.0", "observable_id": "J0", "value": "0.5"}
    assert len(back) == 4
