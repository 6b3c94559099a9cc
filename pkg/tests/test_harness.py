"""Tests for synthetic generation, file ingestion, trial runs and CSV I/O."""

from pathlib import Path

import numpy as np
import pytest
from conftest import make_gen, random_rank_k

from sketchlr import (
    ExperimentConfig,
    ParseError,
    RandomStream,
    SparseMatrix,
    TrialRecord,
    emit_csv,
    generate_synthetic,
    load_matrix,
    read_summary_csv,
    read_trials_csv,
    run_experiment,
    summarize,
    write_matrix_market,
)

DATA = Path(__file__).parent / "data"


class TestGenerateSynthetic:
    def test_full_density(self):
        mat = generate_synthetic(12, 9, 1.0, RandomStream(1))
        dense = mat.to_dense()
        assert mat.nnz == 12 * 9
        assert dense.min() > 0.0 and dense.max() <= 1.0

    def test_zero_density_rejected(self):
        with pytest.raises(ValueError):
            generate_synthetic(5, 5, 0.0, RandomStream(1))

    def test_nnz_within_binomial_band(self):
        n = m = 300
        density = 0.05
        mat = generate_synthetic(m, n, density, RandomStream(7))
        mean = m * n * density
        band = 3.0 * np.sqrt(m * n * density * (1 - density))
        assert abs(mat.nnz - mean) <= band

    def test_reproducible(self):
        a = generate_synthetic(20, 15, 0.3, RandomStream(11))
        b = generate_synthetic(20, 15, 0.3, RandomStream(11))
        np.testing.assert_array_equal(a.to_dense(), b.to_dense())

    def test_matrix_seed_gives_identical_matrix(self):
        # the harness derives the matrix from its own split of the run seed,
        # so every algorithm in a run sees the bit-identical matrix
        def draw(seed):
            matrix_stream, _ = RandomStream(seed).split(2)
            mat = generate_synthetic(30, 25, 0.2, matrix_stream)
            return hash(mat.triplets()[2].tobytes())

        assert draw(123) == draw(123)
        assert draw(123) != draw(124)


class TestLoadMatrixMarket:
    def test_single_entry(self):
        mat = load_matrix(DATA / "tiny.mtx")
        assert mat.shape == (1, 1)
        rows, cols, vals = mat.triplets()
        np.testing.assert_array_equal(rows, [0])
        np.testing.assert_array_equal(cols, [0])
        np.testing.assert_array_equal(vals, [2.5])

    def test_write_read_round_trip(self, tmp_path):
        gen = make_gen(3)
        mat = SparseMatrix.from_dense(
            np.where(gen.random((7, 5)) < 0.4, gen.standard_normal((7, 5)), 0.0)
        )
        path = tmp_path / "rt.mtx"
        write_matrix_market(path, mat)
        back = load_matrix(path)
        np.testing.assert_array_equal(back.to_dense(), mat.to_dense())

    def test_out_of_range_index_reports_line(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n"
        )
        with pytest.raises(ParseError, match=r"bad\.mtx:3"):
            load_matrix(path)

    def test_malformed_value_reports_line(self, tmp_path):
        path = tmp_path / "bad2.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n"
        )
        with pytest.raises(ParseError, match="bad2.mtx:3"):
            load_matrix(path)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "dup.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "2 2 2\n1 1 1.0\n1 1 2.0\n"
        )
        with pytest.raises(ParseError, match="duplicate"):
            load_matrix(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "hdr.mtx"
        path.write_text("%%MatrixMarket matrix array real general\n2 2\n1.0\n")
        with pytest.raises(ParseError, match="unsupported layout"):
            load_matrix(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "cnt.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n"
        )
        with pytest.raises(ParseError, match="declared 3"):
            load_matrix(path)

    def test_integer_field_accepted(self, tmp_path):
        path = tmp_path / "int.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate integer general\n2 2 1\n2 1 7\n"
        )
        mat = load_matrix(path)
        assert mat.to_dense()[1, 0] == 7.0


class TestLoadBagOfWords:
    def test_fixture_exact_triplets(self):
        # 3 docs x 4 words transposes to 4x3 so the tall orientation holds
        mat = load_matrix(DATA / "tiny_bow.txt", "bag_of_words_triplets")
        assert mat.shape == (4, 3)
        rows, cols, vals = mat.triplets()
        np.testing.assert_array_equal(rows, [0, 0, 1, 2, 3])
        np.testing.assert_array_equal(cols, [0, 2, 1, 0, 2])
        np.testing.assert_array_equal(vals, [2.0, 1.0, 5.0, 1.0, 3.0])

    def test_tall_input_not_transposed(self, tmp_path):
        path = tmp_path / "bow.txt"
        path.write_text("4\n2\n2\n1 1 3\n4 2 1\n")
        mat = load_matrix(path, "bag_of_words_triplets")
        assert mat.shape == (4, 2)

    def test_out_of_range_doc(self, tmp_path):
        path = tmp_path / "bow_bad.txt"
        path.write_text("2\n2\n1\n3 1 1\n")
        with pytest.raises(ParseError, match="bow_bad.txt:4"):
            load_matrix(path, "bag_of_words_triplets")

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bow_short.txt"
        path.write_text("2\n2\n")
        with pytest.raises(ParseError, match="header"):
            load_matrix(path, "bag_of_words_triplets")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError, match="format"):
            load_matrix(DATA / "tiny.mtx", "hdf5")


class TestRunExperiment:
    def _config(self, **kw):
        base = dict(
            k_list=[2],
            p=1.0,
            eps=0.5,
            trials=2,
            seed=123,
            mode="simplified_experiment",
            oracle=True,
            nrows=40,
            ncols=30,
            density=0.3,
        )
        base.update(kw)
        return ExperimentConfig(**base)

    def test_deterministic_records(self):
        # everything except measured wall time must be bit-identical
        r1, s1 = run_experiment(self._config())
        r2, s2 = run_experiment(self._config())
        strip = [(r.k, r.trial_index, r.algo, r.rel_error, r.seed, r.fallback_used) for r in r1]
        strip2 = [(r.k, r.trial_index, r.algo, r.rel_error, r.seed, r.fallback_used) for r in r2]
        assert strip == strip2
        assert [(x.k, x.algo, x.median_rel_error, x.n_trials) for x in s1] == [
            (x.k, x.algo, x.median_rel_error, x.n_trials) for x in s2
        ]

    def test_exact_rank_k_input(self, tmp_path):
        gen = make_gen(5)
        dense = random_rank_k(gen, 30, 20, 2)
        path = tmp_path / "rank2.mtx"
        write_matrix_market(path, SparseMatrix.from_dense(dense))
        cfg = self._config(
            nrows=None, ncols=None, density=None, input_path=str(path), trials=3
        )
        records, summary = run_experiment(cfg)
        assert all(rec.rel_error <= 1e-6 for rec in records)
        assert {row.algo for row in summary} == {"schatten_p", "frobenius_baseline"}

    def test_summary_shape(self):
        cfg = self._config(k_list=[2, 3])
        records, summary = run_experiment(cfg)
        assert len(records) == 2 * 2 * 2  # k x algo x trials
        assert [(r.k, r.algo) for r in summary] == [
            (2, "frobenius_baseline"),
            (2, "schatten_p"),
            (3, "frobenius_baseline"),
            (3, "schatten_p"),
        ]
        assert all(r.n_trials == 2 for r in summary)

    def test_no_oracle_leaves_errors_empty(self):
        cfg = self._config(oracle=False)
        records, summary = run_experiment(cfg)
        assert all(rec.rel_error is None for rec in records)
        assert all(row.median_rel_error is None for row in summary)

    def test_oracle_guard_guidance(self):
        cfg = self._config(nrows=5001, ncols=5001, density=0.0001, k_list=[2])
        with pytest.raises(ValueError, match="oracle flag"):
            run_experiment(cfg)

    def test_k_validation(self):
        cfg = self._config(k_list=[40])
        with pytest.raises(ValueError, match="below min"):
            run_experiment(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="k_list"):
            ExperimentConfig(k_list=[]).validate()
        with pytest.raises(ValueError, match="source"):
            ExperimentConfig(k_list=[2]).validate()
        with pytest.raises(ValueError, match="density"):
            ExperimentConfig(k_list=[2], nrows=5, ncols=5, density=1.5).validate()


def _independent_median(values):
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else 0.5 * (ordered[mid - 1] + ordered[mid])


class TestCsvEmission:
    def test_empty_records_header_only(self, tmp_path):
        base = tmp_path / "empty"
        emit_csv([], [], base)
        assert (tmp_path / "empty.trials.csv").read_text().strip() == (
            "k,trial,algo,rel_error,wall_ms,seed,fallback"
        )
        assert read_trials_csv(tmp_path / "empty.trials.csv") == []

    def test_single_record_two_lines(self, tmp_path):
        rec = TrialRecord(2, 0, "schatten_p", 0.125, 3.5, 42, False)
        emit_csv([rec], summarize([rec]), tmp_path / "one")
        lines = (tmp_path / "one.trials.csv").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_round_trip_to_serialized_precision(self, tmp_path):
        cfg = ExperimentConfig(
            k_list=[2],
            trials=3,
            seed=9,
            oracle=True,
            nrows=25,
            ncols=20,
            density=0.4,
        )
        records, summary = run_experiment(cfg)
        emit_csv(records, summary, tmp_path / "run")
        back = read_trials_csv(tmp_path / "run.trials.csv")
        assert len(back) == len(records)
        by_key = {(r.k, r.algo, r.trial_index): r for r in records}
        for rec in back:
            orig = by_key[(rec.k, rec.algo, rec.trial_index)]
            assert rec.seed == orig.seed
            assert rec.fallback_used == orig.fallback_used
            assert rec.rel_error == pytest.approx(orig.rel_error, rel=1e-5, abs=1e-11)
            assert rec.wall_ms == pytest.approx(orig.wall_ms, rel=1e-5)
        back_summary = read_summary_csv(tmp_path / "run.summary.csv")
        assert [(r.k, r.algo, r.n_trials) for r in back_summary] == [
            (r.k, r.algo, r.n_trials) for r in summary
        ]

    def test_median_matches_independent_oracle(self):
        gen = make_gen(31)
        for n in (1, 2, 5, 8, 50):
            vals = gen.random(n).tolist()
            records = [
                TrialRecord(1, i, "schatten_p", v, 1.0, 0, False)
                for i, v in enumerate(vals)
            ]
            row = summarize(records)[0]
            assert row.median_rel_error == pytest.approx(
                _independent_median(vals), rel=1e-12
            )

    def test_deterministic_row_order(self, tmp_path):
        recs = [
            TrialRecord(3, 1, "schatten_p", 0.1, 1.0, 1, False),
            TrialRecord(2, 0, "schatten_p", 0.1, 1.0, 2, False),
            TrialRecord(2, 0, "frobenius_baseline", 0.1, 1.0, 3, True),
            TrialRecord(2, 1, "schatten_p", 0.1, 1.0, 4, False),
        ]
        emit_csv(recs, summarize(recs), tmp_path / "ord")
        rows = (tmp_path / "ord.trials.csv").read_text().strip().splitlines()[1:]
        keys = [tuple(r.split(",")[:3]) for r in rows]
        assert keys == sorted(keys, key=lambda t: (int(t[0]), t[2], int(t[1])))

    def test_write_failure_has_path_context(self):
        with pytest.raises(OSError, match="no/such/dir"):
            emit_csv([], [], "/no/such/dir/base")
