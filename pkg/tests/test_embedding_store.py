import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cglab import (
    DumpFormatError,
    EmbeddingSet,
    fit_span_projector,
    make_space,
    project,
    read_dump,
    whiten_apply,
    whiten_fit,
    write_dump,
)
from cglab.embedding_store import MANIFEST_NAME


def random_set(rng, rows=20, d=6, cards=(2, 3)):
    space = make_space(cards)
    labels = np.column_stack([rng.integers(0, n, size=rows) for n in cards])
    data = rng.standard_normal((rows, d)).astype(np.float32)
    return EmbeddingSet(space, data, labels, meta={"origin": "test"})


class TestEmbeddingSet:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            EmbeddingSet(make_space([2, 2]), np.zeros((0, 3)),
                         np.zeros((0, 2), dtype=int))

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            EmbeddingSet(make_space([2, 2]), np.zeros((1, 3)),
                         np.array([[0, 2]]))

    def test_rows_for(self):
        rng = np.random.default_rng(0)
        eset = random_set(rng)
        t = tuple(eset.labels[0])
        rows = eset.rows_for(t)
        assert (eset.labels[rows] == np.asarray(t)).all()


class TestDumpRoundTrip:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_bit_exact_roundtrip(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        eset = random_set(rng, rows=50, d=16)
        path = tmp_path_factory.mktemp("dump")
        write_dump(eset, path)
        back = read_dump(path)
        assert back.data.astype(np.float32).tobytes() == \
            eset.data.astype(np.float32).tobytes()
        assert (back.labels == eset.labels).all()
        assert back.meta["origin"] == "test"
        assert back.space == eset.space

    def test_all_finite_f32_bit_patterns_survive(self, tmp_path):
        # arbitrary finite f32 values, exponents spanning the full range
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2**32, size=4096, dtype=np.uint64)
        values = bits.astype(np.uint32).view(np.float32)
        values = values[np.isfinite(values)][:4000]
        data = values.reshape(-1, 4)
        labels = np.zeros((data.shape[0], 2), dtype=np.int64)
        eset = EmbeddingSet(make_space([2, 2]), data, labels)
        write_dump(eset, tmp_path)
        back = read_dump(tmp_path)
        assert back.data.astype(np.float32).tobytes() == values.tobytes()

    def test_large_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        eset = random_set(rng, rows=1000, d=64)
        write_dump(eset, tmp_path)
        back = read_dump(tmp_path)
        assert back.data.astype(np.float32).tobytes() == \
            eset.data.astype(np.float32).tobytes()


class TestDumpErrors:
    def test_dimension_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(2)
        eset = random_set(rng, rows=8, d=511)
        write_dump(eset, tmp_path)
        manifest = (tmp_path / MANIFEST_NAME).read_text()
        (tmp_path / MANIFEST_NAME).write_text(manifest.replace("d=511",
                                                               "d=512"))
        with pytest.raises(DumpFormatError):
            read_dump(tmp_path)

    def test_bad_magic(self, tmp_path):
        rng = np.random.default_rng(2)
        write_dump(random_set(rng), tmp_path)
        manifest = (tmp_path / MANIFEST_NAME).read_text()
        (tmp_path / MANIFEST_NAME).write_text(manifest.replace("CGLAB1",
                                                               "NOPE"))
        with pytest.raises(DumpFormatError):
            read_dump(tmp_path)

    def test_label_out_of_range(self, tmp_path):
        rng = np.random.default_rng(2)
        write_dump(random_set(rng, cards=(2, 2)), tmp_path)
        raw = np.fromfile(tmp_path / "labels.bin", dtype="<u2")
        raw[0] = 9
        raw.tofile(tmp_path / "labels.bin")
        with pytest.raises(DumpFormatError):
            read_dump(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DumpFormatError):
            read_dump(tmp_path)


class TestWhitening:
    def test_isotropic_gaussian_unit_covariance(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((10_000, 8))
        transform = whiten_fit(data)
        out = whiten_apply(transform, data)
        cov = out.T @ out / (out.shape[0] - 1)
        assert np.abs(np.diag(cov) - 1.0).max() < 1e-6
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 0.05
        assert np.abs(out.mean(axis=0)).max() < 1e-8

    def test_already_whitened_reapplication(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((5000, 5))
        once = whiten_apply(whiten_fit(data), data)
        again = whiten_apply(whiten_fit(once), once)
        var = again.var(axis=0, ddof=1)
        assert np.abs(var - 1.0).max() < 1e-6

    def test_rank_one_data_keeps_one_component(self):
        rng = np.random.default_rng(2)
        direction = np.array([1.0, 2.0, -1.0])
        data = rng.standard_normal((100, 1)) * direction
        transform = whiten_fit(data)
        assert transform.basis.shape == (3, 1)

    def test_all_zero_matrix_rejected(self):
        with pytest.raises(ValueError):
            whiten_fit(np.zeros((10, 3)))

    def test_rel_tol_bounds(self):
        data = np.random.default_rng(0).standard_normal((10, 2))
        with pytest.raises(ValueError):
            whiten_fit(data, rel_tol=0.0)
        with pytest.raises(ValueError):
            whiten_fit(data, rel_tol=1.0)

    def test_basis_orthonormal(self):
        rng = np.random.default_rng(3)
        transform = whiten_fit(rng.standard_normal((200, 7)))
        gram = transform.basis.T @ transform.basis
        assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-10


class TestSpanProjector:
    def test_standard_basis_zeroes_third_coordinate(self):
        projector = fit_span_projector(np.eye(3)[:2])
        out = project(projector, np.array([[1.0, 2.0, 3.0]]))
        assert np.allclose(out, [[1.0, 2.0, 0.0]])

    def test_duplicated_rows_true_rank(self):
        rng = np.random.default_rng(0)
        rows = rng.standard_normal((3, 8))
        stacked = np.vstack([rows, rows, rows[:1]])
        assert fit_span_projector(stacked).rank == 3

    def test_full_rank_probes_identity(self):
        rng = np.random.default_rng(1)
        projector = fit_span_projector(rng.standard_normal((6, 6)))
        assert np.abs(projector.matrix() - np.eye(6)).max() < 1e-8

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        projector = fit_span_projector(rng.standard_normal((4, 10)))
        P = projector.matrix()
        assert np.abs(P @ P - P).max() <= 1e-10

    def test_projects_probe_rows_to_themselves(self):
        rng = np.random.default_rng(3)
        weights = rng.standard_normal((5, 12))
        projector = fit_span_projector(weights)
        assert np.abs(project(projector, weights) - weights).max() < 1e-8

    def test_zero_probe_matrix_rejected(self):
        with pytest.raises(ValueError):
            fit_span_projector(np.zeros((2, 4)))
