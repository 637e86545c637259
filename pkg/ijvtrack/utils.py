#!/usr/bin/env python3
"""
通用工具函数模块
提供异常基类、计时装饰器和数值辅助函数
"""

import functools
import logging
import math
import time
from typing import Callable, Dict

logger = logging.getLogger(__name__)

# ==================== 装饰器 ====================

def timing_decorator(func: Callable) -> Callable:
    """计时装饰器"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            execution_time = (time.perf_counter() - start_time) * 1000  # 毫秒
            logger.debug(f"{func.__name__} 执行时间: {execution_time:.2f}ms")

    return wrapper

# ==================== 数值工具 ====================

def round_half_away(value: float) -> int:
    """四舍五入到整数，.5 远离零方向取整 (120.5 -> 121, -0.5 -> -1)"""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))

def clamp(value: float, low: float, high: float) -> float:
    """将数值限制在 [low, high] 内"""
    return max(low, min(high, value))

def parse_pair(text: str, cast: Callable = int, sep: str = ",") -> tuple:
    """解析 "X,Y" 形式的坐标对"""
    parts = text.split(sep)
    if len(parts) != 2:
        raise ValueError(f"坐标格式无效: {text!r}")
    return cast(parts[0].strip()), cast(parts[1].strip())

# ==================== 错误处理工具 ====================

class VesselTrackError(Exception):
    """基础异常类"""
    def __init__(self, message: str, error_code: str = None, details: Dict = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or "UNKNOWN_ERROR"
        self.details = details or {}

# ==================== 导出 ====================

__all__ = [
    'timing_decorator',
    'round_half_away',
    'clamp',
    'parse_pair',
    'VesselTrackError'
]
