import math

import numpy as np
import pytest

from asyncdp.data import (
    IngestError,
    PcaDictionary,
    RankError,
    TableSchema,
    apply_pca,
    export_csv,
    fit_pca,
    gen_synthetic,
    gen_synthetic_with_truth,
    gen_two_cluster,
    ingest_csv,
    load_codes,
    save_codes,
)
from asyncdp.model import FitnessSpec
from asyncdp.oracle import solve_exact

SCHEMA = TableSchema(target="rate", numeric=("amount",), categorical=("grade",), drop=("id",))


def write_csv_text(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestIngest:
    def test_first_appearance_category_codes(self, tmp_path):
        path = write_csv_text(
            tmp_path,
            "id,amount,grade,rate\n1,10.0,A,1.5\n2,20.0,B,2.5\n3,30.0,A,3.5\n",
        )
        table, codes = ingest_csv(path, SCHEMA)
        assert codes["grade"] == {"A": 1, "B": 2}
        assert np.array_equal(table.values[:, 1], [1.0, 2.0, 1.0])
        assert table.columns == ["amount", "grade"]

    def test_missing_target_rows_dropped_and_counted(self, tmp_path):
        path = write_csv_text(
            tmp_path,
            "id,amount,grade,rate\n1,10.0,A,1.5\n2,20.0,B,\n3,30.0,A,3.5\n",
        )
        table, _ = ingest_csv(path, SCHEMA)
        assert table.dropped_rows == 1
        assert table.n_rows == 2

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = write_csv_text(
            tmp_path,
            "id,amount,grade,rate\n1,10.0,A,1.5\n2,oops,B,2.5\n",
        )
        with pytest.raises(IngestError, match="row 3"):
            ingest_csv(path, SCHEMA)

    def test_wrong_field_count_reports_line_number(self, tmp_path):
        path = write_csv_text(
            tmp_path,
            "id,amount,grade,rate\n1,10.0,A,1.5\n2,20.0,2.5\n",
        )
        with pytest.raises(IngestError, match="row 3"):
            ingest_csv(path, SCHEMA)

    def test_missing_column_rejected(self, tmp_path):
        path = write_csv_text(tmp_path, "id,amount,rate\n1,10.0,1.5\n")
        with pytest.raises(IngestError, match="grade"):
            ingest_csv(path, SCHEMA)

    def test_unknown_category_maps_to_reserved_code(self, tmp_path):
        fit_path = write_csv_text(tmp_path, "id,amount,grade,rate\n1,10.0,A,1.5\n", "fit.csv")
        _, codes = ingest_csv(fit_path, SCHEMA)
        apply_path = write_csv_text(
            tmp_path, "id,amount,grade,rate\n9,5.0,Z,0.5\n8,6.0,A,0.6\n", "apply.csv"
        )
        table, applied = ingest_csv(apply_path, SCHEMA, codes=codes)
        assert np.array_equal(table.values[:, 1], [0.0, 1.0])
        assert applied == codes

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = "\n".join(
            f"{i},{rng.uniform(-1e6, 1e6)!r},A,{rng.standard_normal()!r}" for i in range(20)
        )
        path = write_csv_text(tmp_path, "id,amount,grade,rate\n" + rows + "\n")
        table, _ = ingest_csv(path, SCHEMA)
        out = tmp_path / "export.csv"
        export_csv(table, out)
        table2, _ = ingest_csv(
            out, TableSchema(target="rate", numeric=("amount", "grade"))
        )
        assert np.array_equal(table.values[:, 0], table2.values[:, 0])
        assert np.array_equal(table.target, table2.target)

    def test_codes_persist_round_trip(self, tmp_path):
        codes = {"grade": {"A": 1, "B": 2}, "state": {"NY": 1}}
        path = tmp_path / "codes.json"
        save_codes(codes, path)
        assert load_codes(path) == codes


class TestPca:
    def test_line_data_first_component(self):
        rng = np.random.default_rng(1)
        direction = np.array([3.0, 4.0]) / 5.0
        data = np.outer(rng.standard_normal(500), direction)
        data += 1e-4 * rng.standard_normal(data.shape)
        fitted = fit_pca(data, k=1, sample_size=500)
        cosine = abs(float(fitted.components[0] @ direction))
        assert cosine >= 1.0 - 1e-6

    def test_eigenvalues_match_dense_solver(self):
        rng = np.random.default_rng(2)
        for dim in (3, 8, 20):
            data = rng.standard_normal((300, dim)) @ rng.standard_normal((dim, dim))
            k = min(dim, 5)
            fitted = fit_pca(data, k=k, sample_size=300)
            sample = data[-300:]
            centered = sample - sample.mean(axis=0)
            covariance = centered.T @ centered / (300 - 1)
            dense = np.sort(np.linalg.eigvalsh(covariance))[::-1][:k]
            assert np.allclose(fitted.eigenvalues, dense, rtol=1e-7, atol=1e-9)

    def test_scores_match_dense_solver(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((200, 6)) * np.array([5.0, 3.0, 2.0, 1.0, 0.5, 0.2])
        fitted = fit_pca(data, k=3, sample_size=200)
        centered = data - data.mean(axis=0)
        covariance = centered.T @ centered / (200 - 1)
        _, vectors = np.linalg.eigh(covariance)
        dense = vectors[:, ::-1][:, :3].T
        # Align oracle component signs before comparing scores.
        for j in range(3):
            if float(dense[j] @ fitted.components[j]) < 0:
                dense[j] = -dense[j]
        assert np.allclose(apply_pca(fitted, data), centered @ dense.T, atol=1e-6)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((150, 7))
        fitted = fit_pca(data, k=5, sample_size=100)
        gram = fitted.components @ fitted.components.T
        assert np.allclose(gram, np.eye(5), atol=1e-8)

    def test_explained_variance_nonincreasing(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((300, 10)) @ rng.standard_normal((10, 10))
        fitted = fit_pca(data, k=6, sample_size=300)
        diffs = np.diff(fitted.eigenvalues)
        assert np.all(diffs <= 1e-9 * max(1.0, fitted.eigenvalues[0]))

    def test_uses_only_tail_sample(self):
        rng = np.random.default_rng(6)
        tail = rng.standard_normal((50, 3))
        data = np.vstack([rng.standard_normal((100, 3)) * 100.0, tail])
        fitted = fit_pca(data, k=2, sample_size=50)
        assert np.allclose(fitted.mean, tail.mean(axis=0))

    def test_rank_deficiency_rejected(self):
        rng = np.random.default_rng(7)
        rank_two = np.outer(rng.standard_normal(100), [1.0, 0.0, 0.0])
        rank_two += np.outer(rng.standard_normal(100), [0.0, 1.0, 0.0])
        with pytest.raises(RankError):
            fit_pca(rank_two, k=3, sample_size=100)

    def test_mean_row_maps_to_zero(self):
        rng = np.random.default_rng(8)
        data = rng.standard_normal((60, 4))
        fitted = fit_pca(data, k=2, sample_size=60)
        scores = apply_pca(fitted, fitted.mean[np.newaxis, :])
        assert np.allclose(scores, 0.0, atol=1e-12)

    def test_span_projection_is_isometric(self):
        rng = np.random.default_rng(9)
        data = rng.standard_normal((120, 5))
        fitted = fit_pca(data, k=5, sample_size=120)
        vec = rng.standard_normal(5)
        in_span = fitted.components.T @ (fitted.components @ vec)
        scores = apply_pca(fitted, (fitted.mean + in_span)[np.newaxis, :])
        assert np.linalg.norm(scores) == pytest.approx(np.linalg.norm(in_span), rel=1e-6)

    def test_apply_deterministic(self):
        rng = np.random.default_rng(10)
        data = rng.standard_normal((80, 4))
        fitted = fit_pca(data, k=2, sample_size=80)
        assert np.array_equal(apply_pca(fitted, data), apply_pca(fitted, data))

    def test_dictionary_persistence_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        data = rng.standard_normal((80, 4))
        fitted = fit_pca(data, k=2, sample_size=80)
        path = tmp_path / "pca.json"
        fitted.save(path)
        loaded = PcaDictionary.load(path)
        assert np.array_equal(loaded.components, fitted.components)
        assert np.array_equal(apply_pca(loaded, data), apply_pca(fitted, data))

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        fitted = fit_pca(rng.standard_normal((30, 3)), k=2, sample_size=30)
        with pytest.raises(ValueError):
            apply_pca(fitted, rng.standard_normal((5, 4)))


class TestSynthetic:
    def test_noiseless_truth_identifiable(self):
        datasets, truth = gen_synthetic_with_truth(4, 200, [100, 100], 0.0, seed=13)
        spec = FitnessSpec(reg_coeff=1e-12, clip_bound=1.0, reg_grad_bound=1.0)
        solution = solve_exact(datasets, spec)
        assert np.allclose(solution.params.theta, truth, atol=1e-6)

    def test_deterministic(self):
        a = gen_synthetic(3, 60, [20, 40], 0.5, seed=14)
        b = gen_synthetic(3, 60, [20, 40], 0.5, seed=14)
        for da, db in zip(a, b):
            assert np.array_equal(da.features, db.features)
            assert np.array_equal(da.targets, db.targets)

    def test_partition_sizes_and_ids(self):
        datasets = gen_synthetic(2, 70, [10, 25, 35], 1.0, seed=15)
        assert [d.n_records for d in datasets] == [10, 25, 35]
        assert [d.owner_id for d in datasets] == [1, 2, 3]

    def test_sizes_must_sum(self):
        with pytest.raises(ValueError):
            gen_synthetic(2, 100, [10, 25], 1.0, seed=0)

    def test_per_owner_epsilons(self):
        datasets = gen_synthetic(2, 20, [10, 10], 1.0, seed=16, epsilons=(0.5, 2.0))
        assert [d.epsilon for d in datasets] == [0.5, 2.0]

    def test_default_epsilon_is_infinite(self):
        datasets = gen_synthetic(2, 10, [10], 1.0, seed=17)
        assert math.isinf(datasets[0].epsilon)


class TestTwoCluster:
    def test_solo_owner_records_stable_as_owners_grow(self):
        small = gen_two_cluster(3, [50, 50], 0.5, seed=18)
        large = gen_two_cluster(3, [50, 50, 50, 50], 0.5, seed=18)
        assert np.array_equal(small[0].features, large[0].features)
        assert np.array_equal(small[0].targets, large[0].targets)
        assert np.array_equal(small[1].features, large[1].features)

    def test_distinct_relations(self):
        datasets = gen_two_cluster(3, [200, 200], 0.0, seed=19)
        spec = FitnessSpec(reg_coeff=1e-10, clip_bound=1.0, reg_grad_bound=1.0)
        solo_a = solve_exact([datasets[0]], spec)
        solo_b = solve_exact([datasets[1]], spec)
        assert np.max(np.abs(solo_a.params.theta - solo_b.params.theta)) > 0.05

    def test_solo_owner_index_validated(self):
        with pytest.raises(ValueError):
            gen_two_cluster(2, [10, 10], 0.5, seed=20, solo_owner=3)
