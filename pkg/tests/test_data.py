import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scforest.data import (
    CategoricalDataset,
    DataError,
    SequenceDataset,
    TwoSliceGenerator,
    add_noise_features,
    drop_missing,
    kfold_split,
    load_csv,
    load_sequences_csv,
    parse_rows,
    random_scf_generator,
    synth_dbn_sequences,
    synth_weak_features,
    to_transitions,
    write_sequences_csv,
)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestCategoricalDataset:
    def test_out_of_range_value_names_row(self):
        with pytest.raises(DataError, match="row 1"):
            CategoricalDataset(["a"], [2], [[0], [2]])

    def test_rejects_bad_shape_and_duplicates(self):
        with pytest.raises(DataError):
            CategoricalDataset(["a", "b"], [2, 2], [[0], [1]])
        with pytest.raises(DataError):
            CategoricalDataset(["a", "a"], [2, 2], [[0, 0]])

    def test_data_is_read_only(self):
        ds = CategoricalDataset(["a"], [2], [[0], [1]])
        with pytest.raises(ValueError):
            ds.data[0, 0] = 1

    def test_take_select_concat(self):
        ds = CategoricalDataset(["a", "b"], [2, 3], [[0, 2], [1, 0], [1, 1]])
        assert ds.take([2, 0]).data.tolist() == [[1, 1], [0, 2]]
        assert ds.select([1]).names == ("b",)
        assert ds.concat_rows(ds).n_rows == 6

    def test_decode_round_trip(self):
        ds = CategoricalDataset(["a"], [2], [[1], [0]], categories=[["no", "yes"]])
        assert ds.decode() == [["yes"], ["no"]]


class TestCsv:
    def test_lexicographic_categories(self, tmp_path):
        t = load_csv(_write(tmp_path, "door\nshut\nopen\nshut\n"))
        col = t.column("door")
        assert col.categories == ("open", "shut")
        assert col.values.tolist() == [1, 0, 1]

    def test_numeric_column_is_continuous(self, tmp_path):
        t = load_csv(_write(tmp_path, "x,c\n1.5,a\n2,b\n"))
        assert t.column("x").continuous
        assert t.continuous_names == ("x",)

    def test_ragged_row_names_line(self, tmp_path):
        with pytest.raises(DataError, match="line 3"):
            load_csv(_write(tmp_path, "a,b,c\n1,2,3\n1,2\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(_write(tmp_path, ""))

    def test_schema_override(self, tmp_path):
        t = load_csv(_write(tmp_path, "x\n1\n2\n"), schema={"x": "categorical"})
        assert t.column("x").categories == ("1", "2")


class TestDropMissing:
    def test_one_missing_row(self):
        t = parse_rows([["a", "b"], ["x", "1"], ["?", "2"], ["y", "3"], ["x", "4"], ["y", "?"]])
        kept, removed = drop_missing(t)
        assert (kept.n_rows, removed) == (3, 2)

    def test_five_rows_one_missing(self):
        rows = [["a"], ["x"], ["y"], ["?"], ["x"], ["y"]]
        kept, removed = drop_missing(parse_rows(rows))
        assert (kept.n_rows, removed) == (4, 1)

    def test_no_sentinel_is_identity(self):
        t = parse_rows([["a"], ["x"], ["y"]])
        kept, removed = drop_missing(t)
        assert removed == 0 and kept is t

    def test_all_missing_is_error(self):
        with pytest.raises(DataError):
            drop_missing(parse_rows([["a"], ["?"], ["?"]]))


class TestSequences:
    def test_transitions_stay_inside_sequences(self):
        s = SequenceDataset(["a"], [3], [[[0], [1], [2]], [[2], [0]]])
        prev, nxt = to_transitions(s)
        assert prev.data.ravel().tolist() == [0, 1, 2]
        assert nxt.data.ravel().tolist() == [1, 2, 0]
        assert s.n_transitions == 3

    def test_short_sequence_rejected(self):
        with pytest.raises(DataError):
            SequenceDataset(["a"], [2], [[[0]]])

    def test_csv_round_trip(self, tmp_path):
        gen = random_scf_generator(3, k=1, seed=1)
        seqs = synth_dbn_sequences(gen, 20, seed=2, n_sequences=3)
        path = tmp_path / "s.csv"
        write_sequences_csv(path, seqs)
        back = load_sequences_csv(path)
        assert back.n_transitions == seqs.n_transitions
        for a, b in zip(seqs.sequences, back.sequences):
            # category labels are sorted strings of the codes, so codes survive
            assert np.array_equal(a, b)


class TestFolds:
    @given(n=st.integers(2, 200), f=st.integers(2, 12), seed=st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_partition(self, n, f, seed):
        if f > n:
            with pytest.raises(ValueError):
                kfold_split(n, f, seed)
            return
        split = kfold_split(n, f, seed)
        tests = np.concatenate([te for _, te in split])
        assert sorted(tests.tolist()) == list(range(n))
        sizes = [len(te) for _, te in split]
        assert max(sizes) - min(sizes) <= 1

    def test_seeded(self):
        assert np.array_equal(kfold_split(50, 5, 3).folds, kfold_split(50, 5, 3).folds)


class TestGenerators:
    def test_copy_features_when_p_is_one(self):
        ds = synth_weak_features(4, 0, 1.0, 50, seed=0)
        assert np.all(ds.data[:, 1:] == ds.data[:, :1])

    def test_weak_feature_agreement_rate(self):
        ds = synth_weak_features(10, 0, 0.6, 5000, seed=1)
        rate = np.mean(ds.data[:, 1:] == ds.data[:, :1])
        # binomial SE for 50000 draws is about 0.0022
        assert abs(rate - 0.6) < 0.01

    def test_noise_names_and_untouched_columns(self):
        ds = synth_weak_features(2, 1, 0.6, 30, seed=0)
        out = add_noise_features(ds, 3, seed=4)
        assert out.names[-3:] == ("noise_1", "noise_2", "noise_3")
        assert np.array_equal(out.data[:, :ds.n_vars], ds.data)

    def test_generator_validates_cpts(self):
        with pytest.raises(ValueError):
            TwoSliceGenerator(("a",), (2,), ((),), (np.array([[0.5, 0.6]]),), ((0,),),
                              (np.full((2, 2), 0.5),))

    def test_sequences_respect_cardinality(self):
        gen = random_scf_generator(4, k=2, cardinality=3, seed=3)
        seqs = synth_dbn_sequences(gen, 50, seed=0)
        assert seqs.sequences[0].shape == (50, 4)
        assert seqs.sequences[0].max() < 3

    def test_too_few_timesteps(self):
        with pytest.raises(DataError):
            synth_dbn_sequences(random_scf_generator(2, seed=0), 1)
