#!/usr/bin/env python3
"""
合成超声体模模块
生成带真值 (掩码 + 解析 CSA) 的椭圆管腔视频，用于无临床数据时的评估
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

try:
    from .config import config
    from .core_io import Frame, Mask, PGMFormatError, load_mask, save_frame, save_mask
    from .utils import VesselTrackError, timing_decorator
except ImportError:
    from config import config
    from core_io import Frame, Mask, PGMFormatError, load_mask, save_frame, save_mask
    from utils import VesselTrackError, timing_decorator

logger = logging.getLogger(__name__)

# u ~ U(0, 1) 时 E[u²] = 1/3，乘性散斑因子均值为 1
SPECKLE_MEAN = 1.0 / 3.0


class PhantomError(VesselTrackError):
    """体模生成专用异常"""
    def __init__(self, message: str, error_code: str = "PHANTOM_ERROR", details: dict = None):
        super().__init__(message, error_code, details)


class PhantomSpec(BaseModel):
    """体模参数"""
    model_config = ConfigDict(frozen=True)

    preset: str = Field("distended", description="distended 或 collapsing")
    n_frames: int = Field(config.phantom.N_FRAMES, ge=1, description="帧数")
    width: int = Field(config.phantom.WIDTH, ge=16, description="帧宽 (像素)")
    height: int = Field(config.phantom.HEIGHT, ge=16, description="帧高 (像素)")
    fps: float = Field(config.phantom.FPS, gt=0, description="帧率")
    rng_seed: int = Field(config.phantom.RNG_SEED, ge=0, description="散斑随机种子")
    lumen_intensity: float = Field(config.phantom.LUMEN_INTENSITY, ge=0, le=255, description="管腔亮度")
    background_intensity: float = Field(config.phantom.BACKGROUND_INTENSITY, ge=0, le=255, description="背景亮度")
    speckle_strength: float = Field(config.phantom.SPECKLE_STRENGTH, ge=0, le=1, description="散斑强度")
    center: Optional[Tuple[float, float]] = Field(None, description="椭圆中心 (默认帧中心)")
    base_semi_axes: Tuple[float, float] = Field(config.phantom.BASE_SEMI_AXES, description="基础半轴 (a₀, b₀)")
    pulse_amplitude: float = Field(config.phantom.PULSE_AMPLITUDE, ge=0, lt=1, description="搏动幅度 (比例)")
    pulse_hz: float = Field(config.phantom.PULSE_HZ, ge=0, description="搏动频率")
    collapse_depth: float = Field(config.phantom.COLLAPSE_DEPTH, ge=0, le=1, description="塌陷深度 (比例)")
    collapse_hz: float = Field(config.phantom.COLLAPSE_HZ, ge=0, description="呼吸塌陷频率")
    edge_ramp: float = Field(config.phantom.EDGE_RAMP, gt=0, description="边缘过渡宽度 (像素)")

    @model_validator(mode='after')
    def _check(self) -> "PhantomSpec":
        if self.preset not in config.phantom.get_presets():
            raise ValueError(f"不支持的体模预设: {self.preset}")
        if min(self.base_semi_axes) <= 0:
            raise ValueError(f"半轴必须为正数: {self.base_semi_axes}")
        if self.lumen_intensity >= self.background_intensity:
            raise ValueError("管腔亮度必须低于背景亮度")
        return self

    @classmethod
    def for_preset(cls, preset: str, **overrides) -> "PhantomSpec":
        """按预设名构造，其余参数可覆盖"""
        return cls(preset=preset, **overrides)

    @property
    def center_point(self) -> Tuple[float, float]:
        if self.center is not None:
            return self.center
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0


@dataclass(frozen=True, eq=False)
class PhantomVideo:
    """生成的视频及其真值"""
    spec: PhantomSpec
    frames: List[Frame]
    masks: List[Mask]
    csa: np.ndarray


def semi_axes(spec: PhantomSpec, t: int) -> Tuple[float, float]:
    """第 t 帧的椭圆半轴 (a(t), b(t))"""
    a0, b0 = spec.base_semi_axes
    pulse = 1.0 + spec.pulse_amplitude * math.sin(2 * math.pi * spec.pulse_hz * t / spec.fps)
    a, b = a0 * pulse, b0 * pulse
    if spec.preset == "collapsing":
        squeeze = max(0.0, math.sin(2 * math.pi * spec.collapse_hz * t / spec.fps))
        b *= 1.0 - spec.collapse_depth * squeeze
    return a, b


def true_csa(spec: PhantomSpec, t: int) -> float:
    """第 t 帧的解析截面积 π·a(t)·b(t)"""
    if not (0 <= t < spec.n_frames):
        raise PhantomError(f"帧序号 {t} 超出范围 [0, {spec.n_frames})", "FRAME_OUT_OF_RANGE", {'t': t})
    a, b = semi_axes(spec, t)
    return math.pi * a * b


def _check_fits(spec: PhantomSpec) -> None:
    cx, cy = spec.center_point
    a0, b0 = spec.base_semi_axes
    margin = spec.edge_ramp + 1.0
    a_max = a0 * (1 + spec.pulse_amplitude) + margin
    b_max = b0 * (1 + spec.pulse_amplitude) + margin
    if cx - a_max < 0 or cx + a_max > spec.width - 1 or cy - b_max < 0 or cy + b_max > spec.height - 1:
        raise PhantomError(
            f"椭圆超出帧范围: 中心 ({cx:.1f}, {cy:.1f}), 最大半轴 ({a_max:.1f}, {b_max:.1f}), "
            f"帧 {spec.width}x{spec.height}", "ELLIPSE_OUT_OF_BOUNDS")


def _grid(spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray]:
    cx, cy = spec.center_point
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    return xs - cx, ys - cy


def _speckle(spec: PhantomSpec, t: int) -> np.ndarray:
    """计数器型随机数: 第 t 帧的散斑只取决于 (rng_seed, t)"""
    # 帧号放在计数器最高位，低位随取数递增，各帧的流互不重叠
    generator = np.random.Generator(np.random.Philox(key=spec.rng_seed, counter=[0, 0, 0, t]))
    u = generator.random((spec.height, spec.width))
    return 1.0 + spec.speckle_strength * (u ** 2 - SPECKLE_MEAN)


def truth_mask(spec: PhantomSpec, t: int) -> Mask:
    """像素中心落在椭圆内的真值掩码"""
    a, b = semi_axes(spec, t)
    if a <= 0 or b <= 0:
        return Mask.empty(spec.width, spec.height)
    dx, dy = _grid(spec)
    return Mask((dx / a) ** 2 + (dy / b) ** 2 <= 1.0)


def render_frame(spec: PhantomSpec, t: int) -> Frame:
    """渲染第 t 帧: 管腔/背景两级亮度，边缘线性过渡，再乘以散斑因子"""
    a, b = semi_axes(spec, t)
    dx, dy = _grid(spec)

    if a <= 0 or b <= 0:
        clean = np.full((spec.height, spec.width), spec.background_intensity)
    else:
        radius = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
        grad = np.sqrt((dx / a ** 2) ** 2 + (dy / b ** 2) ** 2)
        # 到椭圆边界的一阶距离近似 (外正内负)
        with np.errstate(divide='ignore', invalid='ignore'):
            distance = np.where(radius > 0, (radius - 1.0) * radius / grad, -min(a, b))
        blend = np.clip(distance / spec.edge_ramp + 0.5, 0.0, 1.0)
        clean = spec.lumen_intensity + (spec.background_intensity - spec.lumen_intensity) * blend

    noisy = clean * _speckle(spec, t)
    return Frame(np.clip(np.rint(noisy), 0, 255).astype(np.uint8))


@timing_decorator
def generate(spec: PhantomSpec) -> PhantomVideo:
    """
    生成体模视频

    Returns:
        PhantomVideo: 帧、真值掩码和真值 CSA 序列

    Raises:
        PhantomError: 椭圆 (含边缘过渡) 超出帧范围
    """
    _check_fits(spec)
    frames = [render_frame(spec, t) for t in range(spec.n_frames)]
    masks = [truth_mask(spec, t) for t in range(spec.n_frames)]
    csa = np.array([true_csa(spec, t) for t in range(spec.n_frames)])
    logger.info(f"体模生成完成: 预设={spec.preset}, 帧数={spec.n_frames}, "
                f"尺寸={spec.width}x{spec.height}, 种子={spec.rng_seed}")
    return PhantomVideo(spec=spec, frames=frames, masks=masks, csa=csa)

# ==================== 目录读写 ====================

def save_video(video: PhantomVideo, out_dir: str) -> None:
    """写出 frames/frame_%04d.pgm、truth/mask_%04d.pgm 和 truth/csa.csv"""
    frames_dir = os.path.join(out_dir, "frames")
    truth_dir = os.path.join(out_dir, "truth")
    os.makedirs(frames_dir, exist_ok=True)
    os.makedirs(truth_dir, exist_ok=True)

    for t, (frame, mask) in enumerate(zip(video.frames, video.masks)):
        save_frame(frame, os.path.join(frames_dir, config.tracker.FRAME_PATTERN % t))
        save_mask(mask, os.path.join(truth_dir, config.phantom.MASK_PATTERN % t))

    save_truth_csa(video.csa, os.path.join(truth_dir, config.phantom.CSA_FILE))


def save_truth_csa(csa: np.ndarray, path: str) -> None:
    pd.DataFrame({'frame': np.arange(len(csa)), 'csa_px2': csa}).to_csv(
        path, index=False, lineterminator="\n")


def load_truth(truth_dir: str) -> Tuple[List[Mask], np.ndarray]:
    """读取真值目录中的掩码序列与 CSA 序列"""
    csa_path = os.path.join(truth_dir, config.phantom.CSA_FILE)
    if not os.path.isfile(csa_path):
        raise PGMFormatError(f"文件不存在: {csa_path}", "FILE_NOT_FOUND", csa_path)
    df = pd.read_csv(csa_path).sort_values('frame')
    masks = [load_mask(os.path.join(truth_dir, config.phantom.MASK_PATTERN % int(t)))
             for t in df['frame']]
    return masks, df['csa_px2'].to_numpy(dtype=np.float64)


__all__ = [
    'PhantomSpec',
    'PhantomVideo',
    'PhantomError',
    'semi_axes',
    'true_csa',
    'truth_mask',
    'render_frame',
    'generate',
    'save_video',
    'save_truth_csa',
    'load_truth'
]
