#!/usr/bin/env python3
"""
评估模块
DICE 系数与 CSA 序列比较 (Pearson 相关、偏差)
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

try:
    from .config import config
    from .core_io import Mask, rasterize_contour
    from .tracker import TrackingRecord
    from .utils import VesselTrackError, timing_decorator
except ImportError:
    from config import config
    from core_io import Mask, rasterize_contour
    from tracker import TrackingRecord
    from utils import VesselTrackError, timing_decorator

logger = logging.getLogger(__name__)

EVAL_COLUMNS = ['frame', 'dice', 'csa_pred', 'csa_truth']


class EvaluationError(VesselTrackError):
    """评估专用异常"""
    def __init__(self, message: str, error_code: str = "EVALUATION_ERROR", details: dict = None):
        super().__init__(message, error_code, details)


@dataclass
class EvalSummary:
    """评估结果汇总"""
    per_frame_dice: List[float] = field(default_factory=list)
    mean_dice: float = 0.0
    csa_pred: List[float] = field(default_factory=list)
    csa_truth: List[float] = field(default_factory=list)
    pearson_r: float = 0.0
    pearson_defined: bool = True
    frames_evaluated: int = 0
    # 平均 (预测 − 真值) CSA，负值表示低估
    csa_bias: float = 0.0
    mean_relative_csa_error: float = 0.0

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            'frame': np.arange(self.frames_evaluated),
            'dice': self.per_frame_dice,
            'csa_pred': self.csa_pred,
            'csa_truth': self.csa_truth,
        }, columns=EVAL_COLUMNS)

    def summary_line(self) -> str:
        r = f"{self.pearson_r:.6f}" if self.pearson_defined else f"{self.pearson_r:.6f} (undefined: zero variance)"
        return (f"mean_dice={self.mean_dice:.6f} pearson_r={r} frames={self.frames_evaluated} "
                f"csa_bias={self.csa_bias:.6f} mean_relative_csa_error={self.mean_relative_csa_error:.6f}")


def dice(a: Mask, m: Mask) -> float:
    """
    DICE = 2|a∩m| / (|a| + |m|)

    Raises:
        EvaluationError: 尺寸不一致，或两个掩码都为空
    """
    if a.bits.shape != m.bits.shape:
        raise EvaluationError(f"掩码尺寸不一致: {a.width}x{a.height} vs {m.width}x{m.height}",
                              "DIMENSION_MISMATCH")
    total = a.count + m.count
    if total == 0:
        raise EvaluationError("两个掩码都为空，DICE 无定义", "BOTH_EMPTY")
    overlap = int(np.count_nonzero(a.bits & m.bits))
    return 2.0 * overlap / total


def pearson(pred: Sequence[float], truth: Sequence[float]) -> tuple:
    """Pearson 相关系数；任一序列方差为零时返回 (0.0, False)"""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) < 2 or np.ptp(pred) == 0 or np.ptp(truth) == 0:
        return 0.0, False
    r = stats.pearsonr(pred, truth)[0]
    return float(np.clip(r, -1.0, 1.0)), True


def predicted_mask(result, width: int, height: int) -> Mask:
    """把单帧结果栅格化为预测掩码；没有有效轮廓时为空掩码"""
    if result.contour is None or len(result.contour) < 3 or not result.status.usable:
        return Mask.empty(width, height)
    return rasterize_contour(result.contour, width, height)


@timing_decorator
def summarize(record: TrackingRecord, truth_masks: Sequence[Mask],
              truth_csa: Sequence[float]) -> EvalSummary:
    """
    逐帧 DICE + CSA 序列比较

    预测与真值面积都低于 EMPTY_AREA 时该帧 DICE 记为 1.0 (正确识别了塌陷)。

    Raises:
        EvaluationError: 帧数不一致
    """
    n = len(record)
    if len(truth_masks) != n or len(truth_csa) != n:
        raise EvaluationError(
            f"帧数不一致: 记录 {n}，真值掩码 {len(truth_masks)}，真值 CSA {len(truth_csa)}",
            "LENGTH_MISMATCH")

    empty_area = config.evaluation.EMPTY_AREA
    per_frame, pred_series, truth_series = [], [], []

    for result, truth, truth_area in zip(record.results, truth_masks, truth_csa):
        pred_area = float(result.csa)
        if pred_area < empty_area and truth_area < empty_area:
            score = 1.0
        else:
            pred = predicted_mask(result, truth.width, truth.height)
            try:
                score = dice(pred, truth)
            except EvaluationError as e:
                if e.error_code != "BOTH_EMPTY":
                    raise
                score = 1.0
        per_frame.append(score)
        pred_series.append(pred_area)
        truth_series.append(float(truth_area))

    r, defined = pearson(pred_series, truth_series)
    if not defined:
        logger.warning("CSA 序列方差为零，Pearson r 记为 0")

    pred_arr, truth_arr = np.array(pred_series), np.array(truth_series)
    nonzero = truth_arr > 0
    relative = np.abs(pred_arr[nonzero] - truth_arr[nonzero]) / truth_arr[nonzero]

    summary = EvalSummary(
        per_frame_dice=per_frame,
        mean_dice=float(np.mean(per_frame)) if per_frame else 0.0,
        csa_pred=pred_series,
        csa_truth=truth_series,
        pearson_r=r,
        pearson_defined=defined,
        frames_evaluated=n,
        csa_bias=float(np.mean(pred_arr - truth_arr)) if n else 0.0,
        mean_relative_csa_error=float(np.mean(relative)) if relative.size else 0.0,
    )
    logger.info(f"评估完成: {summary.summary_line()}")
    return summary


def save_summary(summary: EvalSummary, out_dir: str) -> None:
    """写出 eval.csv 与单行 summary.txt"""
    os.makedirs(out_dir, exist_ok=True)
    summary.to_dataframe().to_csv(os.path.join(out_dir, config.evaluation.EVAL_FILE),
                                  index=False, lineterminator="\n")
    with open(os.path.join(out_dir, config.evaluation.SUMMARY_FILE), "w", encoding="utf-8") as f:
        f.write(summary.summary_line() + "\n")


__all__ = [
    'EvalSummary',
    'EvaluationError',
    'dice',
    'pearson',
    'predicted_mask',
    'summarize',
    'save_summary'
]
