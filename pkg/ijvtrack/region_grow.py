#!/usr/bin/env python3
"""
区域生长模块
从种子像素出发，按与区域当前均值的亮度差生长 8 连通区域
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Tuple

import numpy as np

try:
    from .config import config
    from .core_io import Frame, Mask
    from .utils import VesselTrackError
except ImportError:
    from config import config
    from core_io import Frame, Mask
    from utils import VesselTrackError

logger = logging.getLogger(__name__)

# 邻域扫描顺序固定: NW, N, NE, W, E, SW, S, SE
NEIGHBOR_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (-1, -1), (0, -1), (1, -1),
    (-1, 0), (1, 0),
    (-1, 1), (0, 1), (1, 1),
)


class RegionGrowError(VesselTrackError):
    """区域生长专用异常"""
    def __init__(self, message: str, error_code: str = "REGION_GROW_ERROR", details: dict = None):
        super().__init__(message, error_code, details)


class RegionLeakError(RegionGrowError):
    """区域超出面积上限，说明种子逃出了管腔"""
    def __init__(self, message: str, pixel_count: int, limit: int):
        super().__init__(message, "REGION_LEAK", {
            'pixel_count': pixel_count,
            'limit': limit
        })


@dataclass(frozen=True)
class Seed:
    """种子像素 (整数列 x, 整数行 y)"""
    x: int
    y: int

    def in_bounds(self, width: int, height: int) -> bool:
        return 0 <= self.x < width and 0 <= self.y < height


@dataclass(frozen=True, eq=False)
class GrowthResult:
    """区域生长结果"""
    mask: Mask
    mean_intensity: float
    pixel_count: int
    threshold_used: float
    # 按接纳顺序排列的像素 (x, y)
    acceptance_order: np.ndarray


def compute_threshold(frame: Frame, fraction: float = None) -> float:
    """T = 0.05 × (Imax − Imin)"""
    fraction = config.region_grow.THRESHOLD_FRACTION if fraction is None else fraction
    return float(fraction * (int(frame.data.max()) - int(frame.data.min())))


def grow(frame: Frame, seed: Seed, threshold: float, max_fraction: float = None) -> GrowthResult:
    """
    从种子开始的广度优先区域生长

    候选像素当且仅当 |I(候选) − 区域当前均值| < threshold 时被接纳，
    每次接纳后增量更新均值。被拒绝的像素在之后有新的相邻区域像素时会被重新比较。

    Args:
        frame: 预处理后的帧
        seed: 种子像素
        threshold: 接纳阈值 T
        max_fraction: 区域面积上限 (占帧面积的比例)

    Returns:
        GrowthResult: 生长结果

    Raises:
        RegionGrowError: 种子越界或参数无效
        RegionLeakError: 区域面积超过上限
    """
    max_fraction = config.region_grow.MAX_FRACTION if max_fraction is None else max_fraction
    width, height = frame.width, frame.height

    if not seed.in_bounds(width, height):
        raise RegionGrowError(f"种子 ({seed.x}, {seed.y}) 超出帧范围 {width}x{height}",
                              "SEED_OUT_OF_BOUNDS", {'seed': (seed.x, seed.y)})
    if threshold < 0:
        raise RegionGrowError(f"阈值不能为负: {threshold}", "INVALID_THRESHOLD")
    if not (0 < max_fraction <= 1):
        raise RegionGrowError(f"max_fraction 不在 (0, 1] 范围内: {max_fraction}", "INVALID_FRACTION")

    limit = int(max_fraction * width * height)
    pixels = frame.data.tolist()
    inside = [[False] * width for _ in range(height)]

    inside[seed.y][seed.x] = True
    order = [(seed.x, seed.y)]
    total = float(pixels[seed.y][seed.x])
    count = 1
    queue = deque(order)

    while queue:
        cx, cy = queue.popleft()
        for dx, dy in NEIGHBOR_OFFSETS:
            nx, ny = cx + dx, cy + dy
            if nx < 0 or ny < 0 or nx >= width or ny >= height or inside[ny][nx]:
                continue
            value = pixels[ny][nx]
            if abs(value - total / count) < threshold:
                inside[ny][nx] = True
                total += value
                count += 1
                order.append((nx, ny))
                queue.append((nx, ny))
                if count > limit:
                    raise RegionLeakError(
                        f"区域面积超过上限 {limit} 像素，种子 ({seed.x}, {seed.y}) 可能逃出管腔",
                        count, limit)

    logger.debug(f"区域生长完成: 种子=({seed.x}, {seed.y}), 像素数={count}, 均值={total / count:.2f}")

    return GrowthResult(
        mask=Mask(np.array(inside, dtype=bool)),
        mean_intensity=total / count,
        pixel_count=count,
        threshold_used=float(threshold),
        acceptance_order=np.array(order, dtype=np.int64),
    )


def replay_acceptance(frame: Frame, result: GrowthResult) -> bool:
    """按接纳顺序重放，检查每个像素在插入时都满足接纳不等式"""
    order = result.acceptance_order
    values = frame.data[order[:, 1], order[:, 0]].astype(np.float64)
    running_mean = np.cumsum(values)[:-1] / np.arange(1, len(values))
    return bool(np.all(np.abs(values[1:] - running_mean) < result.threshold_used))


__all__ = [
    'Seed',
    'GrowthResult',
    'RegionGrowError',
    'RegionLeakError',
    'NEIGHBOR_OFFSETS',
    'compute_threshold',
    'grow',
    'replay_acceptance'
]
