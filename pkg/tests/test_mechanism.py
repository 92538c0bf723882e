import numpy as np
import pytest

from csdp import (
    ModelError,
    SequenceDatabase,
    StateSpace,
    age_data,
    builtin_queries,
    laplace_sample,
    release,
)

SPACE = StateSpace(2, 2)


def alternating_db(T=8):
    col0 = [(t % 2) for t in range(T)]
    col1 = [1 - (t % 2) for t in range(T)]
    return SequenceDatabase(SPACE, np.column_stack([col0, col1]))


class TestAgeData:
    def test_age_zero_is_current(self):
        db = alternating_db()
        assert age_data(db, 4, (0, 0)) == tuple(db.snapshots[3])

    def test_index_arithmetic(self):
        db = alternating_db()
        snap = age_data(db, 4, (2, 0))
        assert snap == (int(db.snapshots[1, 0]), int(db.snapshots[3, 1]))

    def test_rejection_names_sequence(self):
        db = alternating_db()
        with pytest.raises(ModelError, match="sequence 0"):
            age_data(db, 3, (5, 5))

    def test_bad_time_index(self):
        db = alternating_db(4)
        with pytest.raises(ModelError, match="horizon"):
            age_data(db, 9, (0, 0))


class TestLaplaceSample:
    def test_moments(self):
        draws = laplace_sample(1.0, 10**5, seed=42)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 2.0) < 0.05

    def test_determinism(self):
        a = laplace_sample(0.5, 100, seed=9)
        b = laplace_sample(0.5, 100, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_bad_scale(self):
        with pytest.raises(ModelError, match="scale"):
            laplace_sample(0.0, 10, seed=1)


class TestRelease:
    def test_reproducible_value_and_scale(self):
        db = SequenceDatabase(SPACE, np.array([[1, 0]]))
        query = builtin_queries(SPACE)["mean"]
        out1 = release(db, 1, (0, 0), query, 1.0, seed=77)
        out2 = release(db, 1, (0, 0), query, 1.0, seed=77)
        assert out1 == out2
        assert out1.aged_snapshot == (1, 0)
        assert out1.noise_scale == pytest.approx(0.5)
        noise = laplace_sample(0.5, 1, seed=77)[0]
        assert out1.value == pytest.approx(0.5 + noise)

    def test_high_budget_concentrates(self):
        db = SequenceDatabase(SPACE, np.array([[1, 1]]))
        query = builtin_queries(SPACE)["mean"]
        hits = sum(
            abs(release(db, 1, (0, 0), query, 1e6, seed=s).value - 1.0) < 1e-4
            for s in range(1000)
        )
        assert hits > 999 * 0.999 - 5  # Laplace tail at 200 scales

    def test_bad_eps(self):
        db = alternating_db()
        query = builtin_queries(SPACE)["mean"]
        with pytest.raises(ModelError, match="eps_c"):
            release(db, 2, (0, 0), query, 0.0, seed=1)


class TestDatabaseIO:
    def test_csv_roundtrip(self, tmp_path):
        db = alternating_db()
        path = tmp_path / "db.csv"
        db.to_csv(path)
        loaded = SequenceDatabase.from_csv(path, SPACE)
        np.testing.assert_array_equal(loaded.snapshots, db.snapshots)

    def test_out_of_range_state(self):
        with pytest.raises(ModelError, match="state values"):
            SequenceDatabase(SPACE, np.array([[0, 3]]))

    def test_column_mismatch(self, tmp_path):
        path = tmp_path / "db.csv"
        path.write_text("seq0\n0\n1\n")
        with pytest.raises(ModelError, match="columns"):
            SequenceDatabase.from_csv(path, SPACE)
