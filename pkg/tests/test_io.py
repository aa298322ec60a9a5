import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from nldeim.errors import DimensionMismatchError, MatrixHeaderError, TruncatedPayloadError
from nldeim.io import load_matrix, load_patchset, save_matrix, save_patchset
from nldeim.simpqr import PatchSet

from conftest import random_patchset


@pytest.mark.parametrize("suffix", [".nldm", ".csv"])
def test_roundtrip_random(tmp_path, suffix):
    m = np.random.default_rng(0).standard_normal((5, 7))
    save_matrix(tmp_path / f"m{suffix}", m)
    back = load_matrix(tmp_path / f"m{suffix}")
    assert back.tobytes() == m.tobytes()


@pytest.mark.parametrize("shape", [(0, 0), (0, 3), (4, 0)])
def test_roundtrip_empty(tmp_path, shape):
    save_matrix(tmp_path / "e.nldm", np.zeros(shape))
    assert load_matrix(tmp_path / "e.nldm").shape == shape


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_roundtrip_property(tmp_path_factory, m):
    d = tmp_path_factory.mktemp("rt")
    for name in ("a.nldm", "a.csv"):
        save_matrix(d / name, m)
        back = load_matrix(d / name)
        assert back.shape == m.shape
        np.testing.assert_array_equal(back, m)


def test_binary_layout(tmp_path):
    save_matrix(tmp_path / "m.nldm", np.array([[1.0, 2.0]]))
    raw = (tmp_path / "m.nldm").read_bytes()
    assert raw == b"NLDM1\n1 2 f8le\n" + np.array([1.0, 2.0], "<f8").tobytes()


def test_corrupt_files(tmp_path):
    p = tmp_path / "m.nldm"
    save_matrix(p, np.ones((3, 3)))
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(TruncatedPayloadError):
        load_matrix(p)
    p.write_bytes(raw + b"\0" * 8)
    with pytest.raises(DimensionMismatchError):
        load_matrix(p)
    p.write_bytes(b"JUNK" + raw)
    with pytest.raises(MatrixHeaderError):
        load_matrix(p)
    p.write_bytes(raw.replace(b"f8le", b"f4le"))
    with pytest.raises(MatrixHeaderError):
        load_matrix(p)
    c = tmp_path / "m.csv"
    c.write_text("# NLDM1 2 2\n1,2\n3\n")
    with pytest.raises(DimensionMismatchError):
        load_matrix(c)
    c.write_text("# NLDM1 3 2\n1,2\n3,4\n")
    with pytest.raises(TruncatedPayloadError):
        load_matrix(c)


def test_patchset_roundtrip(tmp_path):
    ps = random_patchset(np.random.default_rng(1), 5, 2, 4)
    ps = PatchSet(ps.bases, np.arange(20.0).reshape(4, 5))
    save_patchset(tmp_path / "ps", ps, {"note": "x"})
    back = load_patchset(tmp_path / "ps")
    assert back.stacked().tobytes() == ps.stacked().tobytes()
    np.testing.assert_array_equal(back.base_points, ps.base_points)
    man = json.loads((tmp_path / "ps" / "manifest.json").read_text())
    assert man["schema_version"] == 1 and man["K"] == 4 and man["note"] == "x"
    man["K"] = 3
    (tmp_path / "ps" / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(DimensionMismatchError):
        load_patchset(tmp_path / "ps")
