#!/usr/bin/env python3
"""
核心数据类型与文件读写
定义 Frame / Mask / Contour，读写 8 位二进制 PGM (P5)，以及轮廓栅格化

坐标约定: 像素 (列 i, 行 j) 的中心位于 (x=i, y=j)。
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

try:
    from .config import config
    from .utils import VesselTrackError
except ImportError:
    from config import config
    from utils import VesselTrackError

logger = logging.getLogger(__name__)

PGM_MAGIC = b"P5"
PGM_MAXVAL = 255


class PGMFormatError(VesselTrackError):
    """PGM 读写专用异常"""
    def __init__(self, message: str, error_code: str, path: str = None):
        super().__init__(message, error_code, {'path': path})


class GeometryInputError(VesselTrackError):
    """轮廓输入无效"""
    def __init__(self, message: str, error_code: str = "TOO_FEW_POINTS", n_points: int = None):
        super().__init__(message, error_code, {'n_points': n_points})


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Frame:
    """单帧灰度图像，data 形状为 (height, width)，dtype uint8"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.size == 0:
            raise VesselTrackError(f"帧数据必须是非空二维数组，实际形状 {data.shape}", "INVALID_FRAME")
        if data.dtype != np.uint8:
            values = data.astype(np.float64)
            if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 255):
                raise VesselTrackError("帧像素值必须位于 [0, 255]", "INVALID_FRAME")
            # 浮点输入四舍五入到最近整数，不截断
            data = np.rint(values).astype(np.uint8)
        object.__setattr__(self, 'data', _readonly(data))

    @classmethod
    def from_values(cls, width: int, height: int, values: Sequence[int]) -> "Frame":
        """按行优先顺序从像素列表构造"""
        values = np.asarray(values)
        if values.size != width * height:
            raise VesselTrackError(
                f"像素数量 {values.size} 与尺寸 {width}x{height} 不符", "INVALID_FRAME")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def __eq__(self, other) -> bool:
        return isinstance(other, Frame) and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mask:
    """二值像素集合，bits 形状为 (height, width)，dtype bool"""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise VesselTrackError(f"掩码必须是二维数组，实际形状 {bits.shape}", "INVALID_MASK")
        object.__setattr__(self, 'bits', _readonly(bits.astype(bool)))

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def to_frame(self) -> Frame:
        """转换为 {0, 255} 的帧，便于以 PGM 保存"""
        return Frame(np.where(self.bits, 255, 0).astype(np.uint8))

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Contour:
    """有序闭合轮廓，points 形状为 (n, 2)，每行为 (x, y)"""
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) == 0:
            raise GeometryInputError(f"轮廓点数组形状无效: {points.shape}")
        if not np.all(np.isfinite(points)):
            raise GeometryInputError("轮廓包含非有限坐标", "NON_FINITE")
        object.__setattr__(self, 'points', _readonly(points))

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self) -> int:
        return len(self.points)

    def reversed(self) -> "Contour":
        return Contour(self.points[::-1])

    def translated(self, dx: float, dy: float) -> "Contour":
        return Contour(self.points + np.array([dx, dy]))

    def clamped(self, width: int, height: int) -> "Contour":
        """将所有点限制在 [0, width-1] × [0, height-1] 内"""
        points = np.column_stack([
            np.clip(self.x, 0, width - 1),
            np.clip(self.y, 0, height - 1),
        ])
        return Contour(points)

    def __eq__(self, other) -> bool:
        return isinstance(other, Contour) and np.array_equal(self.points, other.points)

    __hash__ = None

# ==================== PGM 读写 ====================

def _read_header_tokens(payload: bytes, path: str) -> Tuple[List[bytes], int]:
    """读取魔数、宽、高、最大值四个头部字段，返回字段及像素数据起始偏移"""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(payload) and payload[pos:pos + 1].isspace():
            pos += 1
        if pos < len(payload) and payload[pos:pos + 1] == b"#":
            end = payload.find(b"\n", pos)
            pos = len(payload) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PGMFormatError(f"PGM 头部不完整: {path}", "MALFORMED_HEADER", path)
        tokens.append(payload[start:pos])
        if len(tokens) == 1 and tokens[0] != PGM_MAGIC:
            raise PGMFormatError(
                f"unsupported PGM variant: {tokens[0][:2].decode('latin-1')!r} ({path})",
                "UNSUPPORTED_VARIANT", path)
    # 最大值之后恰好一个空白字符
    return tokens, pos + 1


def load_frame(path: str) -> Frame:
    """读取二进制 PGM (P5, maxval 255) 文件"""
    if not os.path.isfile(path):
        raise PGMFormatError(f"文件不存在: {path}", "FILE_NOT_FOUND", path)

    with open(path, "rb") as f:
        payload = f.read()

    if not payload.startswith(PGM_MAGIC):
        raise PGMFormatError(
            f"unsupported PGM variant: {payload[:2].decode('latin-1')!r} ({path})",
            "UNSUPPORTED_VARIANT", path)

    tokens, offset = _read_header_tokens(payload, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMFormatError(f"PGM 头部数值无效: {path}", "MALFORMED_HEADER", path)

    if maxval != PGM_MAXVAL:
        raise PGMFormatError(f"不支持的最大值 {maxval} (仅支持 255): {path}", "UNSUPPORTED_MAXVAL", path)
    if width <= 0 or height <= 0:
        raise PGMFormatError(f"PGM 尺寸无效 {width}x{height}: {path}", "MALFORMED_HEADER", path)

    expected = width * height
    pixels = payload[offset:offset + expected]
    if len(pixels) < expected:
        raise PGMFormatError(
            f"像素数据被截断: 需要 {expected} 字节，实际 {len(pixels)} 字节 ({path})",
            "TRUNCATED_PAYLOAD", path)

    data = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    return Frame(data)


def save_frame(frame: Frame, path: str) -> None:
    """写入二进制 PGM (P5, maxval 255, 无注释行)，已存在的文件会被覆盖"""
    header = f"P5\n{frame.width} {frame.height}\n{PGM_MAXVAL}\n".encode("ascii")
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(frame.data).tobytes())
    except OSError as e:
        raise PGMFormatError(f"无法写入文件 {path}: {e}", "WRITE_FAILED", path)


def load_mask(path: str) -> Mask:
    """读取 {0, 255} 掩码 PGM，>= 128 视为内部"""
    return Mask(load_frame(path).data >= 128)


def save_mask(mask: Mask, path: str) -> None:
    """以 {0, 255} PGM 保存掩码"""
    save_frame(mask.to_frame(), path)


def load_video(directory: str) -> List[Frame]:
    """按 frame_%04d.pgm 顺序读取目录中的所有帧，索引从 0 开始且必须连续"""
    pattern = config.tracker.FRAME_PATTERN
    frames = []
    index = 0
    while True:
        path = os.path.join(directory, pattern % index)
        if not os.path.isfile(path):
            break
        frames.append(load_frame(path))
        index += 1

    if not frames:
        raise PGMFormatError(f"目录中没有找到帧文件: {directory}", "FILE_NOT_FOUND", directory)

    logger.info(f"已读取 {len(frames)} 帧: {directory}")
    return frames

# ==================== 轮廓栅格化 ====================

def rasterize_contour(contour: Contour, width: int, height: int) -> Mask:
    """
    将闭合多边形栅格化为掩码

    像素中心位于多边形内部 (奇偶规则) 的像素置位。扫描线采用半开约定:
    每条边只覆盖 [y_min, y_max) 的行，每个交点区间只覆盖 [x_left, x_right) 的列。

    Raises:
        GeometryInputError: 轮廓少于 3 个点
    """
    if len(contour) < 3:
        raise GeometryInputError(f"栅格化至少需要 3 个点，当前 {len(contour)} 个", n_points=len(contour))

    bits = np.zeros((height, width), dtype=bool)
    x0, y0 = contour.x, contour.y
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)

    # 仅在轮廓外接矩形内计算
    row_lo = max(0, int(np.ceil(y0.min())))
    row_hi = min(height - 1, int(np.floor(y0.max())))
    col_lo = max(0, int(np.ceil(x0.min())))
    col_hi = min(width - 1, int(np.floor(x0.max())))
    if row_lo > row_hi or col_lo > col_hi:
        return Mask(bits)

    # 每条边从 y 较小的端点算起，交点与轮廓方向无关
    swap = y1 < y0
    xa, ya = np.where(swap, x1, x0), np.where(swap, y1, y0)
    xb, yb = np.where(swap, x0, x1), np.where(swap, y0, y1)

    rows = np.arange(row_lo, row_hi + 1, dtype=np.float64)[:, None]
    crosses = (ya <= rows) & (rows < yb)
    dy = np.where(yb == ya, 1.0, yb - ya)
    xs = np.where(crosses, xa + (rows - ya) / dy * (xb - xa), np.inf)

    cols = np.arange(col_lo, col_hi + 1, dtype=np.float64)
    n_left = np.sum(xs[:, None, :] <= cols[None, :, None], axis=2)
    bits[row_lo:row_hi + 1, col_lo:col_hi + 1] = (n_left % 2) == 1
    return Mask(bits)


def burn_contour(frame: Frame, contour: Contour, value: int = 255) -> Frame:
    """在帧上以给定亮度画出闭合轮廓 (用于叠加图)，超出帧的部分被裁掉"""
    data = np.array(frame.data, copy=True)
    if len(contour) == 0:
        return Frame(data)
    start = contour.points
    end = np.roll(start, -1, axis=0)
    for p, q in zip(start, end):
        steps = max(1, int(np.ceil(np.abs(q - p).max())))
        s = np.linspace(0.0, 1.0, steps + 1)[:, None]
        cols, rows = np.rint(p + s * (q - p)).astype(int).T
        inside = (cols >= 0) & (cols < frame.width) & (rows >= 0) & (rows < frame.height)
        data[rows[inside], cols[inside]] = value
    return Frame(data)

# ==================== 轮廓 CSV ====================

def save_contour_csv(contour: Contour, path: str, decimals: int = None) -> None:
    """以 n,x,y 三列保存轮廓，坐标保留 6 位小数"""
    decimals = config.tracker.CONTOUR_DECIMALS if decimals is None else decimals
    df = pd.DataFrame({
        'n': np.arange(len(contour)),
        'x': contour.x,
        'y': contour.y,
    })
    df.to_csv(path, index=False, float_format=f"%.{decimals}f", lineterminator="\n")


def load_contour_csv(path: str) -> Contour:
    """读取 n,x,y 三列的轮廓 CSV"""
    if not os.path.isfile(path):
        raise PGMFormatError(f"文件不存在: {path}", "FILE_NOT_FOUND", path)
    df = pd.read_csv(path)
    missing = {'n', 'x', 'y'} - set(df.columns)
    if missing:
        raise VesselTrackError(f"轮廓文件缺少字段 {sorted(missing)}: {path}", "MALFORMED_CSV", {'path': path})
    df = df.sort_values('n')
    return Contour(df[['x', 'y']].to_numpy(dtype=np.float64))


__all__ = [
    'Frame',
    'Mask',
    'Contour',
    'PGMFormatError',
    'GeometryInputError',
    'load_frame',
    'save_frame',
    'load_mask',
    'save_mask',
    'load_video',
    'rasterize_contour',
    'burn_contour',
    'save_contour_csv',
    'load_contour_csv'
]
