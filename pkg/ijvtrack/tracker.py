#!/usr/bin/env python3
"""
视频跟踪模块
逐帧执行 预处理 → 区域生长 → 边界跟踪 → 重采样 → snake，
并以上一帧轮廓质心作为下一帧的种子
"""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

try:
    from .config import config
    from .core_io import Contour, Frame, load_contour_csv, save_contour_csv
    from .filters import FilterParams, preprocess
    from .geometry import (GeometryError, ResampleParams, centroid, is_simple,
                           polygon_area, resample_closed_contour, trace_boundary)
    from .region_grow import RegionLeakError, Seed, compute_threshold, grow
    from .snake import SnakeDiagnostics, SnakeParams, run_snake
    from .utils import VesselTrackError, clamp, round_half_away, timing_decorator
except ImportError:
    from config import config
    from core_io import Contour, Frame, load_contour_csv, save_contour_csv
    from filters import FilterParams, preprocess
    from geometry import (GeometryError, ResampleParams, centroid, is_simple,
                          polygon_area, resample_closed_contour, trace_boundary)
    from region_grow import RegionLeakError, Seed, compute_threshold, grow
    from snake import SnakeDiagnostics, SnakeParams, run_snake
    from utils import VesselTrackError, clamp, round_half_away, timing_decorator

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ['frame', 'seed_x', 'seed_y', 'csa_px2', 'iterations', 'status']


class TrackingError(VesselTrackError):
    """跟踪专用异常"""
    def __init__(self, message: str, error_code: str = "TRACKING_ERROR", details: dict = None):
        super().__init__(message, error_code, details)


class FrameStatus(Enum):
    """单帧处理状态"""
    OK = "ok"
    COLLAPSED = "collapsed"
    LEAKED = "leaked"
    FAILED = "failed"

    @property
    def usable(self) -> bool:
        """该帧的轮廓能否用于种子传播"""
        return self in (FrameStatus.OK, FrameStatus.COLLAPSED)


class GrowParams(BaseModel):
    """区域生长参数"""
    model_config = ConfigDict(frozen=True)

    max_fraction: float = Field(config.region_grow.MAX_FRACTION, gt=0, le=1, description="区域面积上限 (帧面积比例)")
    threshold_fraction: float = Field(config.region_grow.THRESHOLD_FRACTION, ge=0, description="阈值系数 T = k·(Imax − Imin)")


class TrackerParams(BaseModel):
    """跟踪流水线的全部参数"""
    model_config = ConfigDict(frozen=True)

    filters: FilterParams = Field(default_factory=FilterParams)
    growth: GrowParams = Field(default_factory=GrowParams)
    resample: ResampleParams = Field(default_factory=ResampleParams)
    snake: SnakeParams = Field(default_factory=SnakeParams)


@dataclass(eq=False)
class FrameResult:
    """单帧跟踪结果"""
    frame_index: int
    seed: Seed
    contour: Optional[Contour]
    csa: float
    iterations: int
    status: FrameStatus
    grown_area: float = 0.0
    initial_contour: Optional[Contour] = None
    diagnostics: Optional[SnakeDiagnostics] = None
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        """转换为记录 CSV 的一行"""
        return {
            'frame': self.frame_index,
            'seed_x': self.seed.x,
            'seed_y': self.seed.y,
            'csa_px2': self.csa,
            'iterations': self.iterations,
            'status': self.status.value,
        }


@dataclass(eq=False)
class TrackingRecord:
    """整段视频的跟踪记录"""
    results: List[FrameResult] = field(default_factory=list)
    params: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.results)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.results], columns=RECORD_COLUMNS)

    def status_counts(self) -> Dict[str, int]:
        counts = {status.value: 0 for status in FrameStatus}
        for result in self.results:
            counts[result.status.value] += 1
        return counts

    def save(self, out_dir: str) -> None:
        """写出 record.csv 与 contours/contour_%04d.csv"""
        contours_dir = os.path.join(out_dir, "contours")
        os.makedirs(contours_dir, exist_ok=True)
        self.to_dataframe().to_csv(os.path.join(out_dir, config.tracker.RECORD_FILE),
                                   index=False, lineterminator="\n")
        for result in self.results:
            if result.contour is not None:
                save_contour_csv(result.contour, os.path.join(
                    contours_dir, config.tracker.CONTOUR_PATTERN % result.frame_index))

    @classmethod
    def load(cls, pred_dir: str) -> "TrackingRecord":
        """从 segment 输出目录读回记录 (不含诊断信息)"""
        record_path = os.path.join(pred_dir, config.tracker.RECORD_FILE)
        if not os.path.isfile(record_path):
            raise TrackingError(f"记录文件不存在: {record_path}", "FILE_NOT_FOUND", {'path': record_path})

        df = pd.read_csv(record_path)
        missing = set(RECORD_COLUMNS) - set(df.columns)
        if missing:
            raise TrackingError(f"记录文件缺少字段 {sorted(missing)}", "MALFORMED_CSV", {'path': record_path})

        results = []
        for row in df.sort_values('frame').itertuples(index=False):
            contour_path = os.path.join(pred_dir, "contours", config.tracker.CONTOUR_PATTERN % row.frame)
            contour = load_contour_csv(contour_path) if os.path.isfile(contour_path) else None
            results.append(FrameResult(
                frame_index=int(row.frame),
                seed=Seed(int(row.seed_x), int(row.seed_y)),
                contour=contour,
                csa=float(row.csa_px2),
                iterations=int(row.iterations),
                status=FrameStatus(row.status),
            ))
        return cls(results=results)


def _collapsed_result(index: int, seed: Seed, contour: Contour, initial: Contour,
                      grown_area: float, message: str,
                      diagnostics: Optional[SnakeDiagnostics] = None) -> FrameResult:
    csa = polygon_area(contour) if len(contour) >= 3 else 0.0
    iterations = diagnostics.iterations_run if diagnostics else 0
    return FrameResult(index, seed, contour, csa, iterations, FrameStatus.COLLAPSED,
                       grown_area=grown_area, initial_contour=initial,
                       diagnostics=diagnostics, message=message)


@timing_decorator
def segment_frame(frame: Frame, seed: Seed, params: TrackerParams = None,
                  frame_index: int = 0) -> FrameResult:
    """
    分割单帧

    算法失败以状态返回 (leaked / collapsed / failed)，不抛出异常，
    保证跟踪可以越过坏帧继续进行。

    Raises:
        TrackingError: 帧尺寸小于下限，或种子越界
    """
    params = params or TrackerParams()
    minimum = config.tracker.MIN_FRAME_SIZE
    if frame.width < minimum or frame.height < minimum:
        raise TrackingError(f"帧尺寸 {frame.width}x{frame.height} 小于下限 {minimum}", "FRAME_TOO_SMALL")
    if not seed.in_bounds(frame.width, frame.height):
        raise TrackingError(f"种子 ({seed.x}, {seed.y}) 超出帧范围", "SEED_OUT_OF_BOUNDS")

    filtered = preprocess(frame, params.filters)
    threshold = compute_threshold(filtered, params.growth.threshold_fraction)

    try:
        growth = grow(filtered, seed, threshold, params.growth.max_fraction)
    except RegionLeakError as e:
        logger.warning(f"第 {frame_index} 帧区域生长泄漏: {e.message}")
        return FrameResult(frame_index, seed, None, 0.0, 0, FrameStatus.LEAKED, message=e.message)

    try:
        traced = trace_boundary(growth.mask)
    except GeometryError as e:
        logger.warning(f"第 {frame_index} 帧边界跟踪失败: {e.message}")
        return FrameResult(frame_index, seed, None, 0.0, 0, FrameStatus.FAILED,
                           grown_area=float(growth.pixel_count), message=e.message)

    try:
        initial = resample_closed_contour(traced, params.resample)
    except GeometryError as e:
        # 区域只剩几个像素: 管腔塌陷
        logger.info(f"第 {frame_index} 帧区域过小 ({growth.pixel_count} 像素)，判定为塌陷")
        return _collapsed_result(frame_index, seed, traced, traced, float(growth.pixel_count), e.message)

    contour, diagnostics = run_snake(initial, filtered, params.snake)
    csa = polygon_area(contour)

    if diagnostics.collapsed:
        logger.info(f"第 {frame_index} 帧 snake 塌陷，面积 {csa:.2f} 像素²")
        return _collapsed_result(frame_index, seed, contour, initial, float(growth.pixel_count),
                                 "snake collapsed", diagnostics)

    if not is_simple(contour):
        logger.warning(f"第 {frame_index} 帧最终轮廓存在自交")

    return FrameResult(frame_index, seed, contour, csa, diagnostics.iterations_run, FrameStatus.OK,
                       grown_area=float(growth.pixel_count), initial_contour=initial,
                       diagnostics=diagnostics)


def propagate_seed(previous: FrameResult, width: int = None, height: int = None) -> Seed:
    """
    上一帧轮廓质心四舍五入 (.5 远离零) 后作为新种子，并限制在帧范围内

    Raises:
        TrackingError: 上一帧状态为 leaked / failed
    """
    if not previous.status.usable or previous.contour is None:
        raise TrackingError(f"第 {previous.frame_index} 帧状态为 {previous.status.value}，无法传播种子",
                            "UNUSABLE_FRAME", {'status': previous.status.value})

    points = previous.contour.points
    if len(points) >= 3:
        cx, cy = centroid(previous.contour)
    else:
        cx, cy = (float(v) for v in points.mean(axis=0))

    x, y = round_half_away(cx), round_half_away(cy)
    if width is not None:
        x = int(clamp(x, 0, width - 1))
    if height is not None:
        y = int(clamp(y, 0, height - 1))
    return Seed(x, y)


@timing_decorator
def track_video(frames: Sequence[Frame], initial_seed: Seed,
                params: TrackerParams = None) -> TrackingRecord:
    """
    逐帧跟踪整段视频

    第 0 帧使用 initial_seed；之后使用最近一个可用帧 (ok / collapsed) 的轮廓质心。

    Raises:
        TrackingError: 帧列表为空，或初始种子越界
    """
    params = params or TrackerParams()
    if not frames:
        raise TrackingError("帧列表为空", "EMPTY_VIDEO")
    if not initial_seed.in_bounds(frames[0].width, frames[0].height):
        raise TrackingError(f"初始种子 ({initial_seed.x}, {initial_seed.y}) 超出帧范围", "SEED_OUT_OF_BOUNDS")

    record = TrackingRecord(params=params.model_dump())
    seed = initial_seed

    for index, frame in enumerate(frames):
        result = segment_frame(frame, seed, params, frame_index=index)
        record.results.append(result)
        logger.debug(f"第 {index} 帧: 状态={result.status.value}, CSA={result.csa:.1f}, 迭代={result.iterations}")

        if result.status.usable:
            seed = propagate_seed(result, frame.width, frame.height)
        else:
            logger.warning(f"第 {index} 帧不可用，下一帧沿用种子 ({seed.x}, {seed.y})")

    counts = record.status_counts()
    logger.info(f"跟踪完成: {len(record)} 帧, 状态统计 {counts}")
    return record


__all__ = [
    'FrameStatus',
    'FrameResult',
    'TrackingRecord',
    'TrackingError',
    'GrowParams',
    'TrackerParams',
    'segment_frame',
    'propagate_seed',
    'track_video'
]
