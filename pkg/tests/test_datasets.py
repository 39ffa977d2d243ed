import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jkoflow.datasets import (
    BOX, DEFAULT_PARAMS, SYNTHETIC_KINDS, DatasetSpec, SampleMatrix, load_samples, load_tabular, read_csv, sample,
    save_samples, write_csv,
)
from jkoflow.metrics import mmd2_noise_floor, mmd2_unbiased

BOXED = [k for k in SYNTHETIC_KINDS if k != "gaussian"]


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        DatasetSpec("donut")
    with pytest.raises(ValueError):
        DatasetSpec("tabular")
    with pytest.raises(ValueError):
        sample(DatasetSpec("tabular", path="x.csv"), 10, 0)


def test_eight_gaussians_centered():
    X = sample(DatasetSpec("eight_gaussians"), 8000, 0).data
    assert np.all(np.abs(X.mean(axis=0)) <= 0.05)


def test_checkerboard_cells():
    X = sample(DatasetSpec("checkerboard"), 10_000, 0).data
    assert np.all(np.abs(X) <= 4)
    cells = np.floor(X / 2).astype(int)
    assert np.all((cells.sum(axis=1) % 2) == 0)
    assert len({tuple(c) for c in cells}) == 8


@pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
def test_generators_are_seed_deterministic(kind):
    a, b = sample(DatasetSpec(kind), 500, 3), sample(DatasetSpec(kind), 500, 3)
    assert a.data.tobytes() == b.data.tobytes() and a.data.shape == (500, 2)
    assert not np.array_equal(a.data, sample(DatasetSpec(kind), 500, 4).data)


@pytest.mark.parametrize("kind", BOXED)
def test_generators_stay_in_box(kind):
    assert np.max(np.abs(sample(DatasetSpec(kind), 3000, 0).data)) <= BOX


@pytest.mark.parametrize("kind", SYNTHETIC_KINDS)
def test_independent_seeds_at_noise_floor(kind):
    a, b = sample(DatasetSpec(kind), 600, 10).data, sample(DatasetSpec(kind), 600, 11).data
    floor = mmd2_noise_floor(sample(DatasetSpec(kind), 1200, 12).data, 100, seed=0, q=99)
    assert mmd2_unbiased(a, b).value <= floor


def test_provenance_echoes_constants():
    sm = sample(DatasetSpec("moons", params={"noise": 0.2}), 10, 5)
    params = sm.provenance["dataset"]["params"]
    assert params["noise"] == 0.2 and params["scale"] == DEFAULT_PARAMS["moons"]["scale"]
    assert sm.provenance["seed"] == 5


def test_gaussian_kind_parameters():
    X = sample(DatasetSpec("gaussian", params={"mean": [3.0, 0.0]}), 20_000, 0).data
    np.testing.assert_allclose(X.mean(axis=0), [3, 0], atol=0.03)
    np.testing.assert_allclose(X.std(axis=0), [1, 1], atol=0.03)


def test_sample_matrix_validation():
    with pytest.raises(ValueError):
        SampleMatrix(np.array([[np.nan, 0.0]]))
    sm = SampleMatrix([[1.0, 2.0], [3.0, 4.0]])
    assert (sm.n, sm.d, len(sm)) == (2, 2, 2)
    assert np.asarray(sm).dtype == np.float64


def write_table(path, rows, header=None):
    lines = ([header] if header else []) + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def test_tabular_split_sizes(tmp_path):
    write_table(tmp_path / "t.csv", [[1, 2], [3, 5], [4, 4], [7, 1]])
    train, val, test = load_tabular(tmp_path / "t.csv", standardize=False, split=(0.5, 0.25, 0.25))
    assert (train.n, val.n, test.n) == (2, 1, 1)


def test_tabular_standardization(tmp_path):
    rng = np.random.default_rng(0)
    write_csv(tmp_path / "t.csv", rng.standard_normal((200, 4)) * [1, 10, 0.1, 3] + [5, -2, 0, 1])
    train, _, _ = load_tabular(tmp_path / "t.csv")
    assert np.all(np.abs(train.data.mean(axis=0)) <= 1e-12)
    assert np.all(np.abs(train.data.std(axis=0) - 1) <= 1e-12)


def test_tabular_header_detection(tmp_path):
    X = np.random.default_rng(1).standard_normal((10, 3))
    write_csv(tmp_path / "h.csv", X, header=["a", "b", "c"])
    assert read_csv(tmp_path / "h.csv").tobytes() == X.tobytes()


def test_tabular_bad_lines_reported(tmp_path):
    write_table(tmp_path / "b.csv", [[1, 2], [3, "x"], [4, 4]])
    with pytest.raises(ValueError, match=r"\[2\]"):
        read_csv(tmp_path / "b.csv")
    write_table(tmp_path / "r.csv", [[1, 2], [3, 4, 5], [4, 4]])
    with pytest.raises(ValueError, match=r"\[2\]"):
        read_csv(tmp_path / "r.csv")


def test_tabular_zero_variance_rejected(tmp_path):
    write_table(tmp_path / "z.csv", [[1, 7], [2, 7], [3, 7], [4, 7]])
    with pytest.raises(ValueError, match="zero-variance"):
        load_tabular(tmp_path / "z.csv")


def test_tabular_split_deterministic(tmp_path):
    write_csv(tmp_path / "t.csv", np.arange(40.0).reshape(20, 2))
    a, b = load_tabular(tmp_path / "t.csv", seed=3), load_tabular(tmp_path / "t.csv", seed=3)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=2, max_size=12))
def test_csv_round_trip_is_bit_exact(values):
    import tempfile
    from pathlib import Path

    X = np.array(values[: len(values) // 2 * 2]).reshape(-1, 2)
    with tempfile.TemporaryDirectory() as d:
        write_csv(Path(d) / "x.csv", X)
        assert read_csv(Path(d) / "x.csv").tobytes() == X.tobytes()


def test_sample_file_with_provenance(tmp_path):
    sm = sample(DatasetSpec("pinwheel"), 50, 9)
    sidecar = save_samples(tmp_path / "s.csv", sm)
    assert sidecar.name == "s.provenance.json"
    back = load_samples(tmp_path / "s.csv")
    assert back.data.tobytes() == sm.data.tobytes()
    assert back.provenance["dataset"]["kind"] == "pinwheel"
