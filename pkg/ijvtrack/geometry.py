#!/usr/bin/env python3
"""
轮廓几何模块
边界跟踪、闭合三次样条等弧长重采样、质心、多边形面积及面积梯度
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import CubicSpline

try:
    from .config import config
    from .core_io import Contour, Mask
    from .utils import VesselTrackError
except ImportError:
    from config import config
    from core_io import Contour, Mask
    from utils import VesselTrackError

logger = logging.getLogger(__name__)

# Moore 邻域，按屏幕坐标 (y 向下) 顺时针排列，从西侧开始
MOORE_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (-1, 0), (-1, -1), (0, -1), (1, -1),
    (1, 0), (1, 1), (0, 1), (-1, 1),
)

ZERO_AREA_EPS = 1e-12


class GeometryError(VesselTrackError):
    """几何计算专用异常"""
    def __init__(self, message: str, error_code: str, details: dict = None):
        super().__init__(message, error_code, details)


class ResampleParams(BaseModel):
    """轮廓重采样参数"""
    model_config = ConfigDict(frozen=True)

    n_points: int = Field(config.resample.N_POINTS, ge=8, description="输出轮廓点数")
    dense_samples: int = Field(config.resample.DENSE_SAMPLES, ge=128, description="弧长计算的稠密采样数")

    @model_validator(mode='after')
    def _dense_enough(self) -> "ResampleParams":
        if self.dense_samples < 16 * self.n_points:
            raise ValueError(
                f"dense_samples ({self.dense_samples}) 必须 ≥ 16 × n_points ({16 * self.n_points})")
        return self


def _require_points(contour: Contour, minimum: int = 3) -> None:
    if len(contour) < minimum:
        raise GeometryError(f"轮廓至少需要 {minimum} 个点，当前 {len(contour)} 个",
                            "TOO_FEW_POINTS", {'n_points': len(contour)})

# ==================== 边界跟踪 ====================

def trace_boundary(mask: Mask) -> Contour:
    """
    Moore 邻域边界跟踪 (Jacob 停止准则)

    从最上方、其次最左侧的置位像素开始，返回边界像素中心的有序闭合序列，
    方向归一化为正的有向面积。

    Raises:
        GeometryError: 掩码为空，或置位像素接触帧边界
    """
    bits = mask.bits
    if not bits.any():
        raise GeometryError("掩码为空，无法跟踪边界", "EMPTY_MASK")
    if bits[0, :].any() or bits[-1, :].any() or bits[:, 0].any() or bits[:, -1].any():
        raise GeometryError("掩码接触帧边界，请先在四周填充背景后再跟踪", "MASK_TOUCHES_BORDER")

    rows, cols = np.nonzero(bits)
    start = (int(cols[0]), int(rows[0]))
    # 行优先扫描到的第一个像素，其西侧必为背景
    start_back = (start[0] - 1, start[1])

    current, back = start, start_back
    boundary = [start]
    first_state = None
    max_steps = 8 * int(rows.size) + 8

    for _ in range(max_steps):
        k = MOORE_OFFSETS.index((back[0] - current[0], back[1] - current[1]))
        found = None
        for i in range(1, 9):
            dx, dy = MOORE_OFFSETS[(k + i) % 8]
            candidate = (current[0] + dx, current[1] + dy)
            if bits[candidate[1], candidate[0]]:
                pdx, pdy = MOORE_OFFSETS[(k + i - 1) % 8]
                found = candidate
                back = (current[0] + pdx, current[1] + pdy)
                break

        if found is None:
            # 孤立像素
            break
        current = found
        # Jacob 准则: 以与第一次相同的方式再次离开起点时结束
        if first_state is None:
            first_state = (current, back)
        elif (current, back) == first_state:
            break
        boundary.append(current)
    else:
        logger.warning(f"边界跟踪达到步数上限 {max_steps}，轮廓可能不完整")

    if len(boundary) > 1 and boundary[-1] == start:
        boundary.pop()

    contour = Contour(np.array(boundary, dtype=np.float64))
    if len(contour) >= 3 and signed_area(contour) < 0:
        # 反向后起点仍排在第一位
        contour = Contour(np.roll(contour.points[::-1], 1, axis=0))
    return contour

# ==================== 重采样 ====================

def _distinct_closed_points(points: np.ndarray) -> np.ndarray:
    """去掉相邻重复点 (包括首尾重复)"""
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0, axis=1)
    points = points[keep]
    while len(points) > 1 and np.array_equal(points[0], points[-1]):
        points = points[:-1]
    return points


def resample_closed_contour(contour: Contour, params: ResampleParams = None) -> Contour:
    """
    周期三次样条 + 等弧长重采样

    以累计弦长为参数拟合周期三次样条，稠密采样后按弧长等间隔取 n_points 个点，
    第一个输出点即输入的第一个点。

    Raises:
        GeometryError: 不同的点少于 4 个，或轮廓长度为零
    """
    params = params or ResampleParams()
    points = _distinct_closed_points(contour.points)
    if len(points) < 4:
        if len(points) <= 1:
            raise GeometryError("轮廓长度为零 (所有点重合)", "ZERO_LENGTH")
        raise GeometryError(f"重采样至少需要 4 个不同的点，当前 {len(points)} 个",
                            "TOO_FEW_POINTS", {'n_points': len(points)})

    closed = np.vstack([points, points[:1]])
    chords = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    knots = np.concatenate([[0.0], np.cumsum(chords)])
    spline = CubicSpline(knots, closed, bc_type='periodic')

    s = np.linspace(0.0, knots[-1], params.dense_samples + 1)
    dense = spline(s)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))])
    if arc[-1] <= 0:
        raise GeometryError("轮廓长度为零 (所有点重合)", "ZERO_LENGTH")

    targets = np.arange(params.n_points) * (arc[-1] / params.n_points)
    return Contour(spline(np.interp(targets, arc, s)))

# ==================== 质心与面积 ====================

def centroid(contour: Contour) -> Tuple[float, float]:
    """轮廓点坐标的算术平均"""
    _require_points(contour)
    return float(np.mean(contour.x)), float(np.mean(contour.y))


def signed_area(contour: Contour) -> float:
    """有向鞋带面积 ½ Σ xₙ (yₙ₊₁ − yₙ₋₁)"""
    _require_points(contour)
    x, y = contour.x, contour.y
    return 0.5 * float(np.sum(x * (np.roll(y, -1) - np.roll(y, 1))))


def polygon_area(contour: Contour) -> float:
    """多边形面积 (像素²)"""
    return abs(signed_area(contour))


def area_gradient(contour: Contour) -> np.ndarray:
    """
    |有向面积| 对每个点坐标的梯度，返回形状 (n, 2)，每行为 (dA/dx, dA/dy)

    Raises:
        GeometryError: 面积为零，梯度方向无定义
    """
    area = signed_area(contour)
    if abs(area) < ZERO_AREA_EPS:
        raise GeometryError("轮廓面积为零，面积梯度无定义", "ZERO_AREA")
    sign = np.sign(area)
    x, y = contour.x, contour.y
    d_dx = sign * (np.roll(y, -1) - np.roll(y, 1)) / 2.0
    d_dy = sign * (np.roll(x, 1) - np.roll(x, -1)) / 2.0
    return np.column_stack([d_dx, d_dy])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0
            and orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def is_simple(contour: Contour) -> bool:
    """检查闭合多边形是否无自交 (只用于诊断，不做修复)"""
    points = contour.points
    n = len(points)
    for i in range(n):
        a1, a2 = points[i], points[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(a1, a2, points[j], points[(j + 1) % n]):
                return False
    return True


__all__ = [
    'ResampleParams',
    'GeometryError',
    'trace_boundary',
    'resample_closed_contour',
    'centroid',
    'signed_area',
    'polygon_area',
    'area_gradient',
    'is_simple'
]
