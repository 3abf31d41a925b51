import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mfglab import rng
from mfglab.errors import InvalidSpec, RiccatiBlowup
from mfglab.grid import TimeGrid
from mfglab.ode import euler_backward, integrate
from mfglab.tabular import Table, dumps, loads, read_table, write_table


def test_philox_matches_numpy_reference():
    ctr = np.array([5, 7, 1, 0], dtype=np.uint64)
    key = np.array([42, 3], dtype=np.uint64)
    mine = rng.philox4x64(ctr[:, None], key[:, None])[:, 0]
    # numpy's generator advances its counter before the first block
    start = ctr.copy()
    start[0] -= 1
    reference = np.random.Philox(key=key, counter=start).random_raw(4)
    np.testing.assert_array_equal(mine, reference)


def test_streams_are_independent_of_batch_shape():
    whole = rng.stream_normals(3, np.arange(4)[:, None], np.arange(5)[None, :], rng.CHANNEL_NOISE, 9)
    single = rng.stream_normals(3, 2, 4, rng.CHANNEL_NOISE, 9)
    np.testing.assert_array_equal(whole[2, 4], single)
    prefix = rng.stream_normals(3, 2, 4, rng.CHANNEL_NOISE, 6)
    np.testing.assert_array_equal(prefix, single[:6])
    other = rng.stream_normals(3, 2, 4, rng.CHANNEL_INITIAL, 9)
    assert not np.allclose(other, single)


def test_stream_normals_are_standard_normal():
    z = rng.stream_normals(0, np.arange(200)[:, None], np.arange(100)[None, :], rng.CHANNEL_NOISE, 5).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    u = rng.stream_uniforms(1, 0, 0, 0, 10_000)
    assert 0 < u.min() and u.max() < 1
    with pytest.raises(ValueError):
        rng.stream_uniforms(0, -1, 0, 0, 2)


def test_time_grid():
    g = TimeGrid(0.3, 7)
    assert g.times[-1] == 0.3 and len(g) == 8
    assert g.index_of(0.3) == 7 and g.refine(2).n_steps == 14
    with pytest.raises(InvalidSpec):
        TimeGrid(0.0, 5)
    with pytest.raises(InvalidSpec):
        TimeGrid(1.0, 0)


def test_integrate_linear_ode():
    g = TimeGrid(1.0, 10)
    path, _ = integrate(lambda t, y: -2.0 * y, np.array([1.0]), g, backward=False)
    np.testing.assert_allclose(path[:, 0], np.exp(-2 * g.times), rtol=1e-10)
    back, _ = integrate(lambda t, y: y**2, np.array([1.0]), g)
    np.testing.assert_allclose(back[:, 0], 1 / (2 - g.times), rtol=1e-10)


def test_riccati_blowup_is_reported():
    # y' = -y^2 backward from y(T) = 1 blows up at T - 1
    with pytest.raises(RiccatiBlowup):
        integrate(lambda t, y: -(y**2), np.array([1.0]), TimeGrid(2.0, 40))
    with pytest.raises(RiccatiBlowup):
        euler_backward(lambda t, y: -(y**2), np.array([1.0]), TimeGrid(2.0, 40))


def test_table_round_trip_is_exact():
    t = Table({"N": np.array([8, 16]), "x": np.array([0.1, 1 / 3]), "name": np.array(["a", "b,c"], dtype=object)},
              {"kind": "demo", "flag": True, "unit.x": "control^2"})
    text = dumps(t)
    back = loads(text)
    assert back["N"].dtype.kind == "i"
    np.testing.assert_array_equal(back["x"], t["x"])
    assert list(back["name"]) == ["a", "b,c"]
    assert back.meta["flag"] == "true" and back.meta["unit.x"] == "control^2"
    assert dumps(back) == text


def test_table_file_io(tmp_path):
    t = Table({"v": np.array([1.5, -2.0])}, {"kind": "x"})
    p = write_table(tmp_path / "sub" / "t.csv", t)
    np.testing.assert_array_equal(read_table(p)["v"], t["v"])


def test_table_rejects_bad_input():
    with pytest.raises(ValueError):
        Table({"a": [1, 2], "b": [1]})
    with pytest.raises(ValueError):
        loads("a,b\n1,2\n")
    with pytest.raises(ValueError):
        loads("# mfglab-table 99\na\n1\n")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_float_columns_round_trip_bit_exactly(values):
    t = Table({"v": np.array(values, dtype=float)}, {"kind": "p"})
    np.testing.assert_array_equal(loads(dumps(t))["v"], np.array(values, dtype=float))
