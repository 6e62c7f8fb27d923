import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from learnaug.errors import (ConfigError, DimensionError, ParseError, UnprocessableVariableError,
                             ValidationError)
from learnaug.series import (Batch, DatasetManifest, SeriesInstance, batches_from_datasets,
                             cyclic_extend, flatten_variables, load_csv, make_batches, preprocess,
                             read_manifest, write_csv)

from oracles import moving_average


def _write(path, text):
    path.write_text(text)
    return path


def test_load_csv_shape(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((100, 3))
    lines = ["a,b,c"] + [",".join(repr(float(v)) for v in row) for row in data]
    inst = load_csv(_write(tmp_path / "x.csv", "\n".join(lines) + "\n"))
    assert (inst.n, inst.T) == (3, 100)
    assert inst.missing is None
    np.testing.assert_array_equal(inst.values, data.T)


def test_load_csv_blank_cell_is_missing(tmp_path):
    rows = ["a,b,c"] + ["1,2,3"] * 10
    rows[5] = "1,,3"           # file row 6 = timestep 5 (1-based) -> index 4
    inst = load_csv(_write(tmp_path / "x.csv", "\n".join(rows)))
    assert inst.missing[1, 4]
    assert inst.missing.sum() == 1


@pytest.mark.parametrize("token", ["NaN", "nan", "NA", ""])
def test_missing_tokens(tmp_path, token):
    inst = load_csv(_write(tmp_path / "x.csv", f"a\n1\n{token}\n3\n"))
    assert inst.missing[0].tolist() == [False, True, False]


def test_single_row_is_dimension_error(tmp_path):
    with pytest.raises(DimensionError):
        load_csv(_write(tmp_path / "x.csv", "a,b\n1,2\n"))


def test_malformed_cell_reports_location(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path / "x.csv", "a,b\n1,2\n3,oops\n"))
    assert (info.value.row, info.value.column) == (3, 2)


def test_ragged_row_reports_row(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path / "x.csv", "a,b\n1,2\n3\n"))
    assert info.value.row == 3


def test_csv_roundtrip(tmp_path):
    inst = SeriesInstance(np.random.default_rng(1).standard_normal((2, 7)))
    write_csv(inst, tmp_path / "y.csv")
    np.testing.assert_array_equal(load_csv(tmp_path / "y.csv").values, inst.values)


def test_instance_invariants():
    with pytest.raises(DimensionError):
        SeriesInstance(np.zeros((1, 1)))
    with pytest.raises(DimensionError):
        SeriesInstance(np.zeros((0, 5)))


def _inst(values):
    v = np.array([values], dtype=float)
    return SeriesInstance(np.nan_to_num(v), np.isnan(v))


def test_interpolation_interior():
    out = preprocess(_inst([1, np.nan, np.nan, 4]), ma_window=1)
    np.testing.assert_allclose(out.values[0], [1, 2, 3, 4], atol=1e-12)
    assert out.missing is None


def test_interpolation_boundary():
    out = preprocess(_inst([np.nan, 5, 5]), ma_window=1)
    np.testing.assert_array_equal(out.values[0], [5, 5, 5])


def test_clean_instance_untouched():
    x = np.random.default_rng(2).standard_normal((2, 30))
    out = preprocess(SeriesInstance(x), ma_window=10)
    np.testing.assert_array_equal(out.values, x)


def test_smoothing_only_on_repaired_instance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 40))
    miss = np.zeros_like(x, dtype=bool)
    miss[0, 7] = True
    out = preprocess(SeriesInstance(x, miss), ma_window=10)
    filled = x.copy()
    filled[0, 7] = (x[0, 6] + x[0, 8]) / 2
    for i in range(2):
        np.testing.assert_allclose(out.values[i], moving_average(filled[i], 10), atol=1e-12)


def test_all_missing_variable():
    with pytest.raises(UnprocessableVariableError):
        preprocess(_inst([np.nan, np.nan, np.nan]))


def test_bad_window():
    with pytest.raises(ConfigError):
        preprocess(_inst([1, 2, 3]), ma_window=0)


@given(hnp.arrays(float, st.integers(3, 40), elements=st.floats(-50, 50)),
       st.data(), st.integers(1, 12))
def test_preprocess_idempotent(x, data, w):
    mask = data.draw(hnp.arrays(bool, x.shape))
    if mask.all():
        mask[0] = False
    inst = SeriesInstance(x[None], mask[None] if mask.any() else None)
    once = preprocess(inst, w)
    np.testing.assert_array_equal(preprocess(once, w).values, once.values)


@given(st.floats(-10, 10), st.floats(-3, 3), st.integers(5, 60), st.data())
def test_linear_gaps_lie_on_the_line(a, b, T, data):
    t = np.arange(T, dtype=float)
    line = a + b * t
    mask = data.draw(hnp.arrays(bool, T))
    mask[0] = mask[-1] = False
    v = np.where(mask, 0.0, line)
    out = preprocess(SeriesInstance(v[None], mask[None] if mask.any() else None), ma_window=1)
    np.testing.assert_allclose(out.values[0], line, atol=1e-12, rtol=0)


def test_cyclic_extend():
    np.testing.assert_array_equal(cyclic_extend(np.arange(3.0), 7), [0, 1, 2, 0, 1, 2, 0])


def _datasets(sizes, T=16):
    rng = np.random.default_rng(0)
    return [[SeriesInstance(rng.standard_normal((1, T)), None, f"d{d}") for _ in range(n)]
            for d, n in enumerate(sizes)]


def test_partition_sizes():
    batches = batches_from_datasets(_datasets([10, 10]), 4, seed=0)
    sizes = {b.batch_index: len(b) for b in batches}
    assert [sizes[i] for i in range(6)] == [4, 4, 2, 4, 4, 2]


def test_shuffle_determinism_and_permutation():
    ds = _datasets([16, 16])
    a = [b.batch_index for b in batches_from_datasets(ds, 4, seed=5)]
    b = [b.batch_index for b in batches_from_datasets(ds, 4, seed=5)]
    c = [b.batch_index for b in batches_from_datasets(ds, 4, seed=6)]
    assert a == b
    assert sorted(a) == sorted(c) == list(range(8))
    assert a != c


def test_batch_requires_equal_length():
    with pytest.raises(DimensionError):
        Batch([SeriesInstance(np.zeros((1, 4))), SeriesInstance(np.zeros((1, 5)))], 0)


def test_mixed_lengths_equalized_by_repetition():
    ds = [[SeriesInstance(np.arange(4.0)[None]), SeriesInstance(np.arange(6.0)[None])]]
    (batch,) = batches_from_datasets(ds, 2, 0)
    assert batch.T == 6
    np.testing.assert_array_equal(batch.instances[0].values[0], [0, 1, 2, 3, 0, 1])


def test_manifest_roundtrip(tmp_path):
    d = tmp_path / "dom"
    d.mkdir()
    for i in range(3):
        _write(d / f"s{i}.csv", "a\n" + "\n".join(str(v) for v in range(i, i + 5)))
    _write(tmp_path / "one.csv", "x,y\n1,2\n3,4\n")
    man = _write(tmp_path / "m.txt", "# comment\nseed=7\ndom,alpha\none.csv,beta\n")
    m = read_manifest(man)
    assert m.shuffle_seed == 7 and [t for _, t in m.entries] == ["alpha", "beta"]
    batches = make_batches(m, 2)
    assert sum(len(b) for b in batches) == 4
    assert {inst.domain_tag for b in batches for inst in b.instances} == {"alpha", "beta"}


def test_manifest_errors(tmp_path):
    with pytest.raises(ParseError):
        read_manifest(_write(tmp_path / "m.txt", "colour=blue\n"))
    with pytest.raises(ParseError):
        read_manifest(_write(tmp_path / "m2.txt", "seed=x\n"))
    with pytest.raises(ConfigError):
        make_batches(DatasetManifest([]), 4)


def test_flatten_variables_owner():
    insts = [SeriesInstance(np.zeros((2, 5))), SeriesInstance(np.ones((3, 5)))]
    rows, owner = flatten_variables(insts)
    assert rows.shape == (5, 5)
    assert owner.tolist() == [0, 0, 1, 1, 1]


def test_missing_mask_shape_checked():
    with pytest.raises((DimensionError, ValidationError)):
        SeriesInstance(np.zeros((2, 5)), np.zeros((2, 4), dtype=bool))
