"""Core type validation and similarity-matrix construction."""

import numpy as np
import pytest

from coprimax import (
    DimensionMismatch,
    EmptyModelSet,
    NonBinaryEntry,
    StudyConfig,
    Threshold,
    build_similarity,
    validate_similarity,
)


class TestValidateSimilarity:
    def test_well_formed(self):
        q = validate_similarity([[1, 0], [1, 1]], "diseased")
        assert q.entries.shape == (2, 2)
        assert q.class_label == "diseased"
        assert q.n == 2 and q.n_models == 2

    def test_non_binary_entry(self):
        with pytest.raises(NonBinaryEntry):
            validate_similarity([[2, 0]])

    def test_zero_columns(self):
        with pytest.raises(EmptyModelSet):
            validate_similarity(np.empty((3, 0)))

    def test_zero_rows_allowed(self):
        q = validate_similarity(np.empty((0, 2)))
        assert q.n == 0 and q.n_models == 2

    def test_entries_read_only(self):
        q = validate_similarity([[1, 0]])
        with pytest.raises(ValueError):
            q.entries[0, 0] = 0


class TestBuildSimilarity:
    def test_direct_definition(self):
        q_se, q_sp = build_similarity([[1], [0], [0]], [1, 0, 1])
        assert q_se.entries.tolist() == [[1], [0]]
        assert q_sp.entries.tolist() == [[1]]

    def test_perfect_classifier(self):
        preds = np.array([[1, 1], [0, 0], [1, 1]])
        q_se, q_sp = build_similarity(preds, [1, 0, 1])
        assert q_se.entries.all() and q_sp.entries.all()

    def test_single_healthy_subject(self):
        q_se, q_sp = build_similarity([[1, 0]], [0])
        assert q_se.n == 0
        assert q_sp.entries.tolist() == [[0, 1]]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_similarity([[1], [0]], [1, 0, 1])

    def test_column_means_equal_empirical_sensitivity(self):
        rng = np.random.default_rng(3)
        preds = (rng.random((200, 5)) < 0.7).astype(int)
        labels = (rng.random(200) < 0.4).astype(int)
        q_se, q_sp = build_similarity(preds, labels)
        for m in range(5):
            emp = preds[labels == 1, m].mean()
            assert q_se.entries[:, m].mean() == emp
        assert q_se.n + q_sp.n == 200


class TestConfigTypes:
    def test_threshold_delta(self):
        thr = Threshold(se0=0.85, sp0=0.8)
        assert thr.delta0 == pytest.approx(0.05)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            Threshold(se0=1.0, sp0=0.8)

    def test_config_defaults(self):
        cfg = StudyConfig(threshold=Threshold(0.8, 0.8))
        assert cfg.alpha == 0.025

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            StudyConfig(threshold=Threshold(0.8, 0.8), alpha=0.7)
