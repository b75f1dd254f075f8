import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isodiff.data import (
    DataFormatError,
    Dataset,
    DesignInfo,
    ValidationError,
    drop_incomplete_spectra,
    infer_design,
    load_dataset,
    read_observations,
    save_dataset,
    validate,
)

from conftest import full_rows, make_dataset, make_design


def write(path, text):
    path.write_text(text)
    return path


def test_design_layout_is_flat_and_ordered():
    d = make_design(m=(2, 1, 3), n=((2, 1, 0), (1, 1, 1)))
    assert d.num_samples == 6
    assert d.num_spectra == 6
    assert d.sample_offsets.tolist() == [[0, 2, 3], [3, 4, 5]]
    assert d.sample_coords.tolist() == [[1, 1, 1], [1, 1, 2], [1, 2, 1], [2, 1, 1], [2, 2, 1], [2, 3, 1]]
    assert d.spectrum_coords.tolist() == [[1, 1], [1, 2], [2, 1], [3, 1], [3, 2], [3, 3]]
    assert d.reference_samples.tolist() == [0, 3]
    assert d.sample_id(2, 3, 1) == 5
    assert d.spectrum_id(3, 2) == 4
    with pytest.raises(KeyError):
        d.sample_id(1, 3, 1)
    with pytest.raises(KeyError):
        d.spectrum_id(2, 2)


def test_design_dict_roundtrip():
    d = make_design(m=(2, 1, 3), n=((2, 1, 0), (1, 1, 1)), g_ref=(1, 2))
    assert DesignInfo.from_dict(d.to_dict()) == d


def test_valid_dataset_passes(tiny_dataset):
    report = validate(tiny_dataset)
    assert report.ok, report.violations
    assert len(tiny_dataset) == 4 * 6


def test_counts_and_indices(tiny_dataset):
    d = tiny_dataset.design
    assert tiny_dataset.count_per_sample.tolist() == [6] * 4
    assert tiny_dataset.count_per_spectrum.tolist() == [4] * 6
    # cell (g, j) holds 2 samples times m_j spectra
    assert tiny_dataset.count_per_cell.tolist() == [[4, 6, 2], [4, 6, 2]]
    assert np.all(tiny_dataset.cell_index == tiny_dataset.group * d.num_proteins + tiny_dataset.protein)


def test_arrays_are_read_only(tiny_dataset):
    with pytest.raises(ValueError):
        tiny_dataset.log_intensity[0] = 1.0


@pytest.mark.parametrize(
    "mutate, kind",
    [
        (lambda r: r + [(1, 1, 3, 1, 1, 5.0)], "index out of bounds"),
        (lambda r: r + [(1, 1, 1, 4, 1, 5.0)], "index out of bounds"),
        (lambda r: r + [(1, 2, 1, 3, 2, 5.0)], "index out of bounds"),
        (lambda r: r + [r[0]], "duplicate coordinate"),
        (lambda r: [r[0][:5] + (float("nan"),)] + r[1:], "non-finite intensity"),
    ],
)
def test_validation_catches_row_errors(tiny_design, mutate, kind):
    rows = mutate(full_rows(tiny_design, lambda *c: 1.0))
    report = validate(Dataset.from_observations(tiny_design, rows))
    assert kind in report.kinds()
    assert all(v.row is not None for v in report.violations)


def test_validation_catches_design_errors():
    bad_tags = DesignInfo(1, 2, 1, (1,), ((2, 2),), (1,), 5)
    assert "tag count mismatch" in validate(Dataset.from_observations(bad_tags, [])).kinds()
    no_ref = DesignInfo(1, 2, 1, (1,), ((0, 2),), (1,), 2)
    assert "missing reference sample" in validate(Dataset.from_observations(no_ref, [])).kinds()
    empty = DesignInfo(1, 2, 2, (1, 0), ((1, 1),), (1,), 2)
    assert "empty protein" in validate(Dataset.from_observations(empty, [])).kinds()
    wrong_shape = DesignInfo(2, 2, 1, (1,), ((1, 1),), (1, 1), 2)
    assert "bad design" in validate(Dataset.from_observations(wrong_shape, [])).kinds()


def test_duplicate_reports_later_row_only(tiny_design):
    rows = full_rows(tiny_design, lambda *c: 1.0)
    rows.insert(3, rows[10])
    report = validate(Dataset.from_observations(tiny_design, rows))
    dups = [v for v in report.violations if v.kind == "duplicate coordinate"]
    assert len(dups) == 1
    assert dups[0].row in (3, 11)


def test_infer_design_from_maxima(tiny_design, tiny_dataset):
    rows = [tuple(o) for o in tiny_dataset.observations()]
    assert infer_design(rows, (1,)) == tiny_design
    with pytest.raises(ValueError):
        infer_design(rows, (1, 1))


def test_save_load_roundtrip_exact(tmp_path, two_exp_dataset):
    path = tmp_path / "data.csv"
    save_dataset(two_exp_dataset, path)
    loaded = load_dataset(path, two_exp_dataset.design)
    a = sorted(two_exp_dataset.observations())
    b = sorted(loaded.observations())
    assert a == b
    # inferred design coincides because every index is present
    assert load_dataset(path, reference_group=(1, 1)).design == two_exp_dataset.design


def test_save_is_canonical(tmp_path, tiny_dataset):
    perm = np.random.default_rng(1).permutation(len(tiny_dataset))
    shuffled = tiny_dataset.subset(perm)
    save_dataset(tiny_dataset, tmp_path / "a.csv")
    save_dataset(shuffled, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


HEAD = "experiment,group,sample,protein,spectrum,log_intensity\n"


def test_reader_reports_line_numbers(tmp_path):
    p = write(tmp_path / "d.csv", "# comment\n" + HEAD + "1,1,1,1,1,2.0\n1,1,1,1,x,2.0\n")
    with pytest.raises(DataFormatError) as err:
        read_observations(p)
    assert err.value.line == 4
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1,1,abc\n")
    with pytest.raises(DataFormatError, match="line 2"):
        read_observations(p)
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1\n")
    with pytest.raises(DataFormatError, match="expected 6 fields"):
        read_observations(p)
    p = write(tmp_path / "d.csv", "a,b,c\n")
    with pytest.raises(DataFormatError, match="header"):
        read_observations(p)
    p = write(tmp_path / "d.csv", HEAD + "0,1,1,1,1,2.0\n")
    with pytest.raises(DataFormatError, match="1-based"):
        read_observations(p)
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1,1,inf\n")
    with pytest.raises(DataFormatError, match="non-finite"):
        read_observations(p)
    p = write(tmp_path / "d.csv", "")
    with pytest.raises(DataFormatError, match="missing header"):
        read_observations(p)


def test_log_transform(tmp_path):
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1,1,100.0\n")
    rows, _ = read_observations(p, log_transform=True)
    assert rows[0][5] == pytest.approx(np.log(100.0))
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1,1,0\n")
    with pytest.raises(DataFormatError, match="log-transform"):
        read_observations(p, log_transform=True)


def test_load_maps_violation_to_file_line(tmp_path, tiny_design):
    rows = full_rows(tiny_design, lambda *c: 1.0)
    body = "".join(",".join(map(str, r)) + "\n" for r in rows)
    p = write(tmp_path / "d.csv", HEAD + body + "\n# note\n1,1,1,9,1,1.0\n")
    with pytest.raises(DataFormatError) as err:
        load_dataset(p, tiny_design)
    assert err.value.line == len(rows) + 4
    assert "out of bounds" in str(err.value)


def test_load_design_violation_raises_validation_error(tmp_path):
    bad = DesignInfo(1, 2, 1, (1,), ((1, 1),), (1,), 3)
    p = write(tmp_path / "d.csv", HEAD + "1,1,1,1,1,1.0\n")
    with pytest.raises(ValidationError, match="tag count"):
        load_dataset(p, bad)
    with pytest.raises(ValueError, match="g_ref"):
        load_dataset(p)


def test_ragged_data_and_complete_filter(tiny_dataset):
    d = tiny_dataset.design
    drop = (tiny_dataset.sample_index == 1) & (tiny_dataset.spectrum_index == 2)
    ragged = tiny_dataset.subset(~drop)
    assert validate(ragged).ok
    assert ragged.count_per_spectrum[2] == 3
    complete = drop_incomplete_spectra(ragged)
    assert len(complete) == len(tiny_dataset) - d.tags_per_experiment
    assert 2 not in set(complete.spectrum_index.tolist())


@settings(max_examples=40, deadline=None)
@given(
    m=st.lists(st.integers(1, 4), min_size=1, max_size=4),
    n=st.lists(st.lists(st.integers(0, 3), min_size=2, max_size=2), min_size=1, max_size=3),
    drop=st.floats(0, 0.5),
    seed=st.integers(0, 10_000),
)
def test_random_designs_validate_and_index_consistently(m, n, drop, seed):
    n = [[max(r[0], 1), r[1]] for r in n]
    width = max(sum(r) for r in n)
    n = [[r[0] + width - sum(r), r[1]] for r in n]
    design = make_design(m=tuple(m), n=tuple(map(tuple, n)))
    ds = make_dataset(design, seed)
    keep = np.random.default_rng(seed).random(len(ds)) >= drop
    ds = ds.subset(keep)
    assert validate(ds).ok
    coords = design.sample_coords[ds.sample_index]
    assert np.array_equal(coords - 1, np.column_stack([ds.experiment, ds.group, ds.sample]))
    jk = design.spectrum_coords[ds.spectrum_index]
    assert np.array_equal(jk - 1, np.column_stack([ds.protein, ds.spectrum]))
    assert ds.count_per_sample.sum() == len(ds)
    assert ds.count_per_cell.sum() == len(ds)
