import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajopt.packing import FieldSpec, layout_build, pack, slice_of, unpack


def test_empty_layout():
    assert layout_build([]).total_len == 0


def test_offsets_and_total():
    lay = layout_build([("x", 2, 3), ("u", 1, 4)])
    assert lay.offsets == (0, 6)
    assert lay.total_len == 10


def test_duplicate_name_rejected():
    with pytest.raises(ValueError, match="'a'"):
        layout_build([("a", 1, 1), ("a", 2, 2)])


@pytest.mark.parametrize("rows,cols", [(0, 3), (2, 0)])
def test_zero_size_field_rejected(rows, cols):
    with pytest.raises(ValueError, match="zero size"):
        layout_build([("x", rows, cols)])


def test_empty_name_rejected():
    with pytest.raises(ValueError):
        FieldSpec("", 1, 1)


def test_pack_singleton():
    assert pack(layout_build([("x", 1, 1)]), {"x": [[5.0]]}).tolist() == [5.0]


def test_pack_column_major():
    lay = layout_build([("x", 2, 2)])
    assert pack(lay, {"x": np.array([[1, 3], [2, 4]])}).tolist() == [1, 2, 3, 4]


def test_pack_missing_field():
    lay = layout_build([("x", 1, 1), ("u", 1, 2)])
    with pytest.raises(KeyError, match="'u'"):
        pack(lay, {"x": [[1.0]]})


def test_pack_shape_mismatch_names_field():
    lay = layout_build([("x", 2, 2)])
    with pytest.raises(ValueError, match="'x'"):
        pack(lay, {"x": np.zeros((3, 2))})


def test_unpack_inverse_of_pack_example():
    lay = layout_build([("x", 2, 2)])
    out = unpack(lay, np.array([1.0, 2, 3, 4]))
    np.testing.assert_array_equal(out["x"], [[1, 3], [2, 4]])


def test_unpack_wrong_length_reports_both():
    lay = layout_build([("x", 2, 2)])
    with pytest.raises(ValueError, match="length 3, expected 4"):
        unpack(lay, np.zeros(3))


def test_slice_of():
    lay = layout_build([("x", 2, 3), ("u", 1, 4)])
    assert slice_of(lay, "u") == slice(6, 10)
    assert slice_of(lay, "x").start == 0
    with pytest.raises(KeyError):
        slice_of(lay, "z")


def test_indices_follow_column_major():
    lay = layout_build([("a", 1, 1), ("x", 2, 3)])
    idx = lay.indices("x")
    assert idx.shape == (2, 3)
    assert idx[:, 1].tolist() == [3, 4]


field_lists = st.lists(
    st.tuples(st.integers(1, 4), st.integers(1, 5)), min_size=0, max_size=6
)


@settings(max_examples=50, deadline=None)
@given(field_lists, st.integers(0, 2**31 - 1))
def test_round_trip_and_partition(shapes, seed):
    lay = layout_build([(f"f{i}", r, c) for i, (r, c) in enumerate(shapes)])
    rng = np.random.default_rng(seed)
    values = {f.name: rng.standard_normal(f.shape) for f in lay.fields}
    back = unpack(lay, pack(lay, values))
    for k, v in values.items():
        assert np.array_equal(back[k], v)
    covered = np.zeros(lay.total_len, dtype=int)
    for name in lay.names:
        covered[slice_of(lay, name)] += 1
    assert np.all(covered == 1)
    z = rng.standard_normal(lay.total_len)
    assert np.array_equal(pack(lay, unpack(lay, z)), z)
