#!/usr/bin/env python3
"""
评估模块测试
"""

import pytest
import numpy as np
import pandas as pd

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from ijvtrack.core_io import Mask
from ijvtrack.evaluation import EvaluationError, dice, pearson, summarize, save_summary
from ijvtrack.geometry import polygon_area, trace_boundary
from ijvtrack.phantom import PhantomSpec, generate
from ijvtrack.region_grow import Seed
from ijvtrack.tracker import FrameResult, FrameStatus, TrackingRecord


def block_mask(x0: int, y0: int, w: int, h: int, size: int = 40) -> Mask:
    bits = np.zeros((size, size), dtype=bool)
    bits[y0:y0 + h, x0:x0 + w] = True
    return Mask(bits)


def failed_result(index: int, csa: float) -> FrameResult:
    return FrameResult(index, Seed(0, 0), None, csa, 0, FrameStatus.FAILED)


class TestDice:
    """DICE 系数测试类"""

    def test_identical(self):
        """测试相同掩码得到 1.0"""
        mask = block_mask(5, 5, 25, 20)
        assert mask.count == 500
        assert dice(mask, mask) == 1.0

    def test_disjoint(self):
        """测试不相交掩码得到 0.0"""
        assert dice(block_mask(0, 0, 5, 5), block_mask(20, 20, 5, 5)) == 0.0

    def test_partial_overlap(self):
        """测试 |a| = |m| = 100、重叠 80 得到 0.8"""
        a = block_mask(0, 0, 10, 10)
        m = block_mask(0, 2, 10, 10)
        assert dice(a, m) == pytest.approx(0.8)

    def test_dimension_mismatch(self):
        """测试尺寸不一致报错"""
        with pytest.raises(EvaluationError) as exc_info:
            dice(Mask.empty(4, 4), Mask.empty(5, 4))
        assert exc_info.value.error_code == "DIMENSION_MISMATCH"

    def test_both_empty(self):
        """测试两个空掩码报错"""
        with pytest.raises(EvaluationError) as exc_info:
            dice(Mask.empty(4, 4), Mask.empty(4, 4))
        assert exc_info.value.error_code == "BOTH_EMPTY"

    def test_axioms(self):
        """测试对称性、自反性与取值范围 (200 对随机掩码)"""
        rng = np.random.default_rng(9)
        for _ in range(200):
            a = Mask(rng.random((16, 16)) < rng.uniform(0.05, 0.9))
            m = Mask(rng.random((16, 16)) < rng.uniform(0.05, 0.9))
            value = dice(a, m)
            assert value == dice(m, a)
            assert 0.0 <= value <= 1.0
            if a.count:
                assert dice(a, a) == 1.0


    def test_translation_invariant(self):
        """测试两个掩码同时平移后 DICE 不变"""
        rng = np.random.default_rng(10)
        for _ in range(50):
            a = np.zeros((40, 40), dtype=bool)
            m = np.zeros((40, 40), dtype=bool)
            a[8:24, 8:24] = rng.random((16, 16)) < 0.6
            m[8:24, 8:24] = rng.random((16, 16)) < 0.6
            dx, dy = (int(v) for v in rng.integers(-8, 9, 2))
            moved_a = np.roll(a, (dy, dx), axis=(0, 1))
            moved_m = np.roll(m, (dy, dx), axis=(0, 1))
            assert dice(Mask(moved_a), Mask(moved_m)) == dice(Mask(a), Mask(m))


class TestPearson:
    """Pearson 相关测试类"""

    def test_perfect_correlation(self):
        """测试线性相关序列"""
        r, defined = pearson([1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0])
        assert defined and r == pytest.approx(1.0)

    def test_zero_variance(self):
        """测试常数序列返回 0 并标记"""
        assert pearson([5.0, 5.0, 5.0], [1.0, 2.0, 3.0]) == (0.0, False)


class TestSummarize:
    """评估汇总测试类"""

    @pytest.fixture
    def phantom(self):
        """大椭圆体模，保证边界像素占比小"""
        spec = PhantomSpec(n_frames=5, width=160, height=160, base_semi_axes=(60.0, 40.0))
        return generate(spec)

    def test_truth_contours_self_comparison(self, phantom):
        """测试真值掩码转换为轮廓后平均 DICE ≥ 0.98"""
        results = []
        for t, mask in enumerate(phantom.masks):
            contour = trace_boundary(mask)
            results.append(FrameResult(t, Seed(80, 80), contour, polygon_area(contour), 0, FrameStatus.OK))
        summary = summarize(TrackingRecord(results), phantom.masks, phantom.csa)
        assert summary.frames_evaluated == 5
        assert summary.mean_dice >= 0.98
        assert summary.pearson_defined
        assert summary.pearson_r > 0.95

    def test_constant_prediction(self):
        """测试常数 CSA 预测时 Pearson 记为 0 并标记"""
        truth = [block_mask(5, 5, 10, 10), block_mask(5, 5, 12, 12), block_mask(5, 5, 14, 14)]
        record = TrackingRecord([failed_result(t, 100.0) for t in range(3)])
        summary = summarize(record, truth, [100.0, 144.0, 196.0])
        assert summary.pearson_r == 0.0
        assert not summary.pearson_defined
        # 失败帧的预测掩码为空
        assert summary.per_frame_dice == [0.0, 0.0, 0.0]

    def test_both_empty_counts_as_one(self):
        """测试预测与真值面积都低于阈值时 DICE 记为 1.0"""
        record = TrackingRecord([failed_result(0, 0.0), failed_result(1, 2.0)])
        truth = [Mask.empty(40, 40), block_mask(0, 0, 2, 2)]
        summary = summarize(record, truth, [0.0, 4.0])
        assert summary.per_frame_dice == [1.0, 1.0]
        assert summary.mean_dice == 1.0

    def test_bias_and_relative_error(self):
        """测试 CSA 偏差与平均相对误差"""
        truth = [block_mask(5, 5, 10, 10), block_mask(5, 5, 10, 10)]
        record = TrackingRecord([failed_result(0, 50.0), failed_result(1, 100.0)])
        summary = summarize(record, truth, [100.0, 100.0])
        assert summary.csa_bias == pytest.approx(-25.0)
        assert summary.mean_relative_csa_error == pytest.approx(0.25)

    def test_length_mismatch(self):
        """测试帧数不一致报错"""
        record = TrackingRecord([failed_result(0, 1.0)])
        with pytest.raises(EvaluationError) as exc_info:
            summarize(record, [], [])
        assert exc_info.value.error_code == "LENGTH_MISMATCH"

    def test_save_summary(self, tmp_path):
        """测试 eval.csv 与 summary.txt 的内容"""
        truth = [block_mask(5, 5, 10, 10), block_mask(5, 5, 12, 12), block_mask(5, 5, 14, 14)]
        results = [failed_result(0, 90.0), failed_result(1, 150.0), failed_result(2, 190.0)]
        summary = summarize(TrackingRecord(results), truth, [100.0, 144.0, 196.0])
        save_summary(summary, str(tmp_path))

        df = pd.read_csv(tmp_path / "eval.csv")
        assert list(df.columns) == ['frame', 'dice', 'csa_pred', 'csa_truth']
        assert len(df) == 3
        assert df['csa_pred'].tolist() == [90.0, 150.0, 190.0]
        assert df['dice'].mean() == summary.mean_dice

        lines = (tmp_path / "summary.txt").read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("mean_dice=")
        assert "pearson_r=" in lines[0]
