"""
ijvtrack 配置管理

所有算法默认值的唯一来源。参数模型 (FilterParams、SnakeParams 等) 的默认值
都从这里读取，命令行 --help 中显示的默认值也来自这里。
"""

from dataclasses import dataclass
from typing import List, Tuple


@dataclass
class FilterConfig:
    """预处理滤波配置 (中值滤波 + 高斯滤波)"""
    MEDIAN_WINDOW: int = 7
    GAUSSIAN_SIGMA: float = 1.5
    GAUSSIAN_RADIUS: int = 3


@dataclass
class RegionGrowConfig:
    """区域生长配置"""
    # T = 0.05 * (Imax - Imin)
    THRESHOLD_FRACTION: float = 0.05
    # 区域超过帧面积的该比例即视为泄漏
    MAX_FRACTION: float = 0.25


@dataclass
class ResampleConfig:
    """轮廓重采样配置"""
    N_POINTS: int = 32
    DENSE_SAMPLES: int = 4096


@dataclass
class SnakeConfig:
    """主动轮廓 (snake) 配置"""
    ALPHA: float = 2.0
    BETA: float = 2.0
    GAMMA: float = 2000.0
    KAPPA_BASE: float = 0.98
    KAPPA_CAP: float = 20.0
    KAPPA_MODE: str = "growing"
    LUMEN_REFERENCE: float = 50.0
    W_SCALE: float = 2.0
    MAX_ITERATIONS: int = 300
    TOL: float = 0.05
    # 面积低于该值 (像素²) 视为血管塌陷
    COLLAPSE_AREA: float = 3.0

    def get_kappa_modes(self) -> List[str]:
        """获取支持的 kappa 模式"""
        return ["growing", "decaying"]


@dataclass
class TrackerConfig:
    """视频跟踪配置"""
    MIN_FRAME_SIZE: int = 16
    FRAME_PATTERN: str = "frame_%04d.pgm"
    CONTOUR_PATTERN: str = "contour_%04d.csv"
    TRACE_PATTERN: str = "trace_%04d.csv"
    OVERLAY_PATTERN: str = "overlay_%04d.pgm"
    RECORD_FILE: str = "record.csv"
    DIAGNOSTICS_FILE: str = "diagnostics.csv"
    CONTOUR_DECIMALS: int = 6


@dataclass
class PhantomConfig:
    """合成超声体模配置"""
    N_FRAMES: int = 450
    WIDTH: int = 256
    HEIGHT: int = 256
    FPS: float = 30.0
    RNG_SEED: int = 1
    LUMEN_INTENSITY: float = 20.0
    BACKGROUND_INTENSITY: float = 140.0
    SPECKLE_STRENGTH: float = 0.3
    BASE_SEMI_AXES: Tuple[float, float] = (32.0, 22.0)
    PULSE_AMPLITUDE: float = 0.15
    PULSE_HZ: float = 1.2
    COLLAPSE_DEPTH: float = 0.95
    COLLAPSE_HZ: float = 0.25
    EDGE_RAMP: float = 2.0
    MASK_PATTERN: str = "mask_%04d.pgm"
    CSA_FILE: str = "csa.csv"

    def get_presets(self) -> List[str]:
        """获取支持的体模预设"""
        return ["distended", "collapsing"]


@dataclass
class EvalConfig:
    """评估配置"""
    # 预测与真值面积都低于该值时，DICE 记为 1.0
    EMPTY_AREA: float = 5.0
    EVAL_FILE: str = "eval.csv"
    SUMMARY_FILE: str = "summary.txt"


@dataclass
class LoggingConfig:
    """日志配置"""
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Config:
    """主配置类"""

    def __init__(self):
        self.filters = FilterConfig()
        self.region_grow = RegionGrowConfig()
        self.resample = ResampleConfig()
        self.snake = SnakeConfig()
        self.tracker = TrackerConfig()
        self.phantom = PhantomConfig()
        self.evaluation = EvalConfig()
        self.logging = LoggingConfig()

    def validate(self) -> list:
        """验证配置的有效性"""
        errors = []

        if self.filters.MEDIAN_WINDOW < 3 or self.filters.MEDIAN_WINDOW % 2 == 0:
            errors.append(f"中值滤波窗口必须为 ≥3 的奇数: {self.filters.MEDIAN_WINDOW}")
        if self.filters.GAUSSIAN_SIGMA <= 0:
            errors.append(f"高斯 sigma 必须为正数: {self.filters.GAUSSIAN_SIGMA}")

        if not (0 < self.region_grow.MAX_FRACTION <= 1):
            errors.append(f"MAX_FRACTION 不在 (0, 1] 范围内: {self.region_grow.MAX_FRACTION}")

        if self.resample.N_POINTS < 8:
            errors.append(f"N_POINTS 必须 ≥ 8: {self.resample.N_POINTS}")
        if self.resample.DENSE_SAMPLES < 16 * self.resample.N_POINTS:
            errors.append("DENSE_SAMPLES 必须 ≥ 16 × N_POINTS")

        if not (0 < self.snake.KAPPA_BASE < 1):
            errors.append(f"KAPPA_BASE 不在 (0, 1) 范围内: {self.snake.KAPPA_BASE}")
        if self.snake.GAMMA <= 0:
            errors.append(f"GAMMA 必须为正数: {self.snake.GAMMA}")
        if self.snake.KAPPA_MODE not in self.snake.get_kappa_modes():
            errors.append(f"不支持的 kappa 模式: {self.snake.KAPPA_MODE}")

        if not (0 <= self.phantom.LUMEN_INTENSITY < self.phantom.BACKGROUND_INTENSITY <= 255):
            errors.append("体模管腔亮度必须低于背景亮度且位于 [0, 255]")

        return errors


# 全局配置实例
config = Config()

__all__ = [
    'config',
    'Config',
    'FilterConfig',
    'RegionGrowConfig',
    'ResampleConfig',
    'SnakeConfig',
    'TrackerConfig',
    'PhantomConfig',
    'EvalConfig',
    'LoggingConfig'
]
