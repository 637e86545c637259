#!/usr/bin/env python3
"""
预处理滤波模块
每帧先做 7×7 中值滤波，再做高斯滤波；边界均采用复制填充
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

try:
    from .config import config
    from .core_io import Frame
    from .utils import VesselTrackError
except ImportError:
    from config import config
    from core_io import Frame
    from utils import VesselTrackError

logger = logging.getLogger(__name__)


class FilterError(VesselTrackError):
    """滤波参数错误"""
    def __init__(self, message: str, parameter: str = None, value=None):
        super().__init__(message, "FILTER_ERROR", {
            'parameter': parameter,
            'value': value
        })


class FilterParams(BaseModel):
    """预处理滤波参数"""
    model_config = ConfigDict(frozen=True)

    median_window: int = Field(config.filters.MEDIAN_WINDOW, ge=3, description="中值滤波窗口 (奇数)")
    gaussian_sigma: float = Field(config.filters.GAUSSIAN_SIGMA, gt=0, description="高斯标准差 (像素)")
    gaussian_radius: int = Field(config.filters.GAUSSIAN_RADIUS, ge=1, description="高斯核半径 (像素)")

    @field_validator('median_window')
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"中值滤波窗口必须为奇数: {value}")
        return value


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """离散采样并归一化的一维高斯核，长度 2*radius+1"""
    if sigma <= 0:
        raise FilterError(f"高斯 sigma 必须为正数: {sigma}", "sigma", sigma)
    if radius < 1:
        raise FilterError(f"高斯核半径必须 ≥ 1: {radius}", "radius", radius)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def median_filter(frame: Frame, window: int) -> Frame:
    """窗口为 window×window 的中值滤波，复制填充边界"""
    if window < 1 or window % 2 == 0:
        raise FilterError(f"中值滤波窗口必须为奇数: {window}", "window", window)
    if window > min(frame.width, frame.height):
        raise FilterError(
            f"中值滤波窗口 {window} 大于帧尺寸 {frame.width}x{frame.height}", "window", window)

    filtered = ndimage.median_filter(frame.data, size=window, mode='nearest')
    return Frame(filtered)


def gaussian_filter(frame: Frame, sigma: float, radius: int) -> Frame:
    """可分离高斯卷积，复制填充边界，结果四舍五入到 [0, 255]"""
    kernel = gaussian_kernel(sigma, radius)
    smoothed = frame.as_float()
    # 对称核，相关与卷积等价
    smoothed = ndimage.correlate1d(smoothed, kernel, axis=1, mode='nearest')
    smoothed = ndimage.correlate1d(smoothed, kernel, axis=0, mode='nearest')
    return Frame(np.clip(np.rint(smoothed), 0, 255).astype(np.uint8))


def preprocess(frame: Frame, params: FilterParams = None) -> Frame:
    """中值滤波后接高斯滤波，顺序固定"""
    params = params or FilterParams()
    median = median_filter(frame, params.median_window)
    return gaussian_filter(median, params.gaussian_sigma, params.gaussian_radius)


__all__ = [
    'FilterParams',
    'FilterError',
    'gaussian_kernel',
    'median_filter',
    'gaussian_filter',
    'preprocess'
]
