"""Interval IoU and recall-at-rank fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from ssrn.errors import ValidationError
from ssrn.metrics import MetricsReport, iou, recall_at


class TestIou:
    def test_basic_cases(self):
        assert iou((0, 10), (0, 10)) == 1.0
        assert iou((0, 10), (5, 15)) == pytest.approx(1.0 / 3.0)
        assert iou((0, 10), (20, 30)) == 0.0
        assert iou((0, 10), (2, 8)) == pytest.approx(0.6)
        assert iou((0, 8), (0, 10)) == pytest.approx(0.8)

    def test_touching_intervals(self):
        assert iou((0, 5), (5, 10)) == 0.0

    def test_degenerate_points(self):
        assert iou((3, 3), (3, 3)) == 1.0
        assert iou((3, 3), (4, 4)) == 0.0
        # a point against a proper interval: zero overlap mass
        assert iou((3, 3), (0, 10)) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(90)
        for _ in range(100):
            a = sorted(rng.uniform(0, 100, 2))
            b = sorted(rng.uniform(0, 100, 2))
            assert iou(tuple(a), tuple(b)) == pytest.approx(iou(tuple(b), tuple(a)))

    def test_validation(self):
        with pytest.raises(ValidationError):
            iou((5, 3), (0, 10))
        with pytest.raises(ValidationError):
            iou((0, 10), (5, 3))


class TestRecallAt:
    def test_hand_case(self):
        preds = [
            [(0.0, 10.0)],                      # exact: hit everywhere
            [(20.0, 30.0), (0.0, 10.0)],        # rank 2 exact: only R@2+
            [(0.0, 5.0)],                       # IoU 0.5 against (0, 10)
        ]
        truths = [(0.0, 10.0), (0.0, 10.0), (0.0, 10.0)]
        assert recall_at(preds, truths, 1, 0.5) == pytest.approx(100.0 * 2 / 3)
        assert recall_at(preds, truths, 5, 0.5) == pytest.approx(100.0)
        assert recall_at(preds, truths, 1, 0.7) == pytest.approx(100.0 / 3)

    def test_threshold_boundary_is_inclusive(self):
        # IoU exactly 0.7 counts as a hit
        preds = [[(2.0, 9.0)]]
        truths = [(0.0, 10.0)]
        assert iou(preds[0][0], truths[0]) == pytest.approx(0.7)
        assert recall_at(preds, truths, 1, 0.7) == 100.0

    def test_short_lists_allowed(self):
        assert recall_at([[]], [(0.0, 1.0)], 5, 0.5) == 0.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            recall_at([], [], 1, 0.5)
        with pytest.raises(ValidationError):
            recall_at([[(0, 1)]], [(0, 1)], 0, 0.5)
        with pytest.raises(ValidationError):
            recall_at([[(0, 1)]], [(0, 1)], 1, 1.5)
        with pytest.raises(ValidationError):
            recall_at([[(0, 1)], [(0, 1)]], [(0, 1)], 1, 0.5)


class TestReportTable:
    def test_rows_cover_all_metrics(self):
        report = MetricsReport(
            count=4,
            recalls={(n, m): 50.0 for n in (1, 5) for m in (0.3, 0.5, 0.7)},
            mean_iou=0.5,
            mean_iou_hard=0.4,
            boundary_error=1.0,
            boundary_error_hard=2.0,
        )
        names = [n for n, _ in report.table_rows()]
        for n in (1, 5):
            for m in (0.3, 0.5, 0.7):
                assert f"R@{n},IoU={m:g}" in names
        assert "mIoU" in names and "boundary_error" in names
