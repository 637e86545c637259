#!/usr/bin/env python3
"""
主动轮廓 (snake) 模块

能量 E(C) = Σ E_image + Σ E_internal + E_const，其中
    E_image    = −|∇I|²
    E_internal = α|C′|² + β|C″|²
    E_const    = w_c · A(C),  w_c = w_scale × (内部平均亮度 − lumen_reference)

半隐式迭代:
    x_t = (B + γI)⁻¹ (γ x_{t−1} − κ_t f_x(x_{t−1}, y_{t−1}) − w_c A_x(C_{t−1}))
y 方向同理。B 为循环五对角内部能量矩阵。
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import linalg, ndimage

try:
    from .config import config
    from .core_io import Contour, Frame, rasterize_contour
    from .geometry import GeometryError, area_gradient, polygon_area
    from .utils import VesselTrackError
except ImportError:
    from config import config
    from core_io import Contour, Frame, rasterize_contour
    from geometry import GeometryError, area_gradient, polygon_area
    from utils import VesselTrackError

logger = logging.getLogger(__name__)

BAND = 2
BOUNDS_EPS = 1e-9


class SnakeError(VesselTrackError):
    """主动轮廓专用异常"""
    def __init__(self, message: str, error_code: str = "SNAKE_ERROR", details: dict = None):
        super().__init__(message, error_code, details)


class SingularSystemError(SnakeError):
    """阻尼线性系统奇异或残差过大"""
    def __init__(self, message: str, n: int = None, gamma: float = None):
        super().__init__(message, "SINGULAR_SYSTEM", {'n': n, 'gamma': gamma})


class SnakeParams(BaseModel):
    """主动轮廓参数"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(config.snake.ALPHA, ge=0, description="一阶导数 (弹性) 权重")
    beta: float = Field(config.snake.BETA, ge=0, description="二阶导数 (刚性) 权重")
    gamma: float = Field(config.snake.GAMMA, gt=0, description="步长阻尼")
    kappa_base: float = Field(config.snake.KAPPA_BASE, gt=0, lt=1, description="κ_t 的底数")
    kappa_cap: float = Field(config.snake.KAPPA_CAP, ge=1, description="κ_t 上限")
    kappa_mode: str = Field(config.snake.KAPPA_MODE, description="growing: base^(−t); decaying: base^t")
    lumen_reference: float = Field(config.snake.LUMEN_REFERENCE, description="约束项中的参考亮度")
    w_scale: float = Field(config.snake.W_SCALE, description="约束项系数")
    max_iterations: int = Field(config.snake.MAX_ITERATIONS, ge=1, description="最大迭代次数")
    tol: float = Field(config.snake.TOL, gt=0, description="收敛阈值 (平均每点位移, 像素)")
    collapse_area: float = Field(config.snake.COLLAPSE_AREA, ge=0, description="塌陷面积阈值 (像素²)")

    @field_validator('kappa_mode')
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in config.snake.get_kappa_modes():
            raise ValueError(f"不支持的 kappa 模式: {value}")
        return value


@dataclass(frozen=True, eq=False)
class ForceField:
    """外部力场: (fx, fy) 为 E_image 的梯度，edge_map 为 |∇I|²"""
    fx: np.ndarray
    fy: np.ndarray
    edge_map: np.ndarray

    @property
    def width(self) -> int:
        return self.fx.shape[1]

    @property
    def height(self) -> int:
        return self.fx.shape[0]


@dataclass
class SnakeDiagnostics:
    """迭代诊断信息"""
    iterations_run: int = 0
    final_mean_displacement: float = float('nan')
    energy_trace: List[float] = field(default_factory=list)
    displacement_trace: List[float] = field(default_factory=list)
    converged: bool = False
    collapsed: bool = False

    def to_dict(self) -> Dict:
        return {
            'iterations_run': self.iterations_run,
            'final_mean_displacement': self.final_mean_displacement,
            'converged': self.converged,
            'collapsed': self.collapsed,
        }

# ==================== 外部力场 ====================

def _central_gradient(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """中心差分梯度，边界复制填充；返回 (d/dx, d/dy)"""
    padded = np.pad(values, 1, mode='edge')
    d_dx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    d_dy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return d_dx, d_dy


def external_force_field(frame: Frame) -> ForceField:
    """由预处理后的帧计算 E_image = −|∇I|² 的梯度场"""
    grad_x, grad_y = _central_gradient(frame.as_float())
    edge_map = grad_x ** 2 + grad_y ** 2
    fx, fy = _central_gradient(-edge_map)
    return ForceField(fx=fx, fy=fy, edge_map=edge_map)


def _check_in_bounds(points: np.ndarray, width: int, height: int) -> None:
    x, y = points[:, 0], points[:, 1]
    if (np.any(x < -BOUNDS_EPS) or np.any(x > width - 1 + BOUNDS_EPS)
            or np.any(y < -BOUNDS_EPS) or np.any(y > height - 1 + BOUNDS_EPS)):
        raise SnakeError(f"采样点超出力场范围 {width}x{height}", "OUT_OF_BOUNDS")


def _bilinear(grid: np.ndarray, points: np.ndarray) -> np.ndarray:
    coords = np.vstack([points[:, 1], points[:, 0]])
    return ndimage.map_coordinates(grid, coords, order=1, mode='nearest')


def sample_forces(force_field: ForceField, points: np.ndarray) -> np.ndarray:
    """在多个亚像素点处双线性插值力场，返回形状 (n, 2)"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    _check_in_bounds(points, force_field.width, force_field.height)
    return np.column_stack([_bilinear(force_field.fx, points), _bilinear(force_field.fy, points)])


def sample_force(force_field: ForceField, point: Tuple[float, float]) -> Tuple[float, float]:
    """在单个亚像素点 (x, y) 处双线性插值力场"""
    fx, fy = sample_forces(force_field, np.array([point], dtype=np.float64))[0]
    return float(fx), float(fy)

# ==================== 内部能量矩阵与求解 ====================

def build_internal_matrix(n: int, alpha: float, beta: float) -> np.ndarray:
    """
    循环五对角矩阵 B，行模板 [β, −(α+4β), 2α+6β, −(α+4β), β]

    Raises:
        SnakeError: n < 5
    """
    if n < 5:
        raise SnakeError(f"内部能量矩阵至少需要 5 个点，当前 {n} 个", "TOO_FEW_POINTS", {'n': n})
    matrix = np.zeros((n, n), dtype=np.float64)
    rows = np.arange(n)
    matrix[rows, rows] = 2 * alpha + 6 * beta
    for offset, value in ((1, -(alpha + 4 * beta)), (2, beta)):
        matrix[rows, (rows + offset) % n] = value
        matrix[rows, (rows - offset) % n] = value
    return matrix


class DampedSystemSolver:
    """
    求解 (B + γI) v = rhs

    带状部分 (上下各 2 条对角线) 用 solve_banded 分解，循环角元素
    通过 Woodbury 恒等式修正；一次构造，多次求解。
    """

    def __init__(self, matrix: np.ndarray, gamma: float):
        matrix = np.asarray(matrix, dtype=np.float64)
        n = matrix.shape[0]
        self.n = n
        self.gamma = float(gamma)
        self.system = matrix + self.gamma * np.eye(n)
        self._dense = None

        try:
            self._factor_banded()
        except (linalg.LinAlgError, ValueError) as e:
            logger.debug(f"带状分解失败，改用稠密 LU 分解: {e}")
            self._factor_dense()

    def _factor_banded(self) -> None:
        n = self.n
        if n <= 2 * BAND:
            raise ValueError("矩阵太小，无法使用带状存储")

        banded = np.zeros((2 * BAND + 1, n))
        band_only = np.zeros_like(self.system)
        for offset in range(-BAND, BAND + 1):
            diagonal = np.diagonal(self.system, offset=offset)
            if offset >= 0:
                banded[BAND - offset, offset:] = diagonal
            else:
                banded[BAND - offset, :n + offset] = diagonal
            band_only += np.diag(diagonal, k=offset)

        corners = self.system - band_only
        index = np.array([0, 1, n - 2, n - 1])
        corner_block = corners[np.ix_(index, index)]
        rebuilt = np.zeros_like(corners)
        rebuilt[np.ix_(index, index)] = corner_block
        if not np.array_equal(rebuilt, corners):
            raise ValueError("矩阵不是循环带状结构")

        selector = np.eye(n)[:, index]
        self._banded = banded
        self._index = index
        self._corner_block = corner_block
        self._basis = linalg.solve_banded((BAND, BAND), banded, selector)
        capacitance = np.eye(len(index)) + corner_block @ self._basis[index]
        self._capacitance = linalg.lu_factor(capacitance, check_finite=True)
        if np.any(np.diag(self._capacitance[0]) == 0):
            raise linalg.LinAlgError("Woodbury 修正矩阵奇异")

    def _factor_dense(self) -> None:
        lu, piv = linalg.lu_factor(self.system)
        if np.any(np.diag(lu) == 0):
            raise SingularSystemError(f"阻尼系统奇异 (n={self.n}, γ={self.gamma})", self.n, self.gamma)
        self._dense = (lu, piv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """rhs 形状为 (n,) 或 (n, k)"""
        rhs = np.asarray(rhs, dtype=np.float64)
        if self._dense is not None:
            solution = linalg.lu_solve(self._dense, rhs)
        else:
            partial = linalg.solve_banded((BAND, BAND), self._banded, rhs)
            correction = linalg.lu_solve(self._capacitance, self._corner_block @ partial[self._index])
            solution = partial - self._basis @ correction

        residual = np.max(np.abs(self.system @ solution - rhs)) if rhs.size else 0.0
        if not np.isfinite(residual) or residual > 1e-8 * (1.0 + np.max(np.abs(rhs))):
            raise SingularSystemError(
                f"阻尼系统求解残差过大: {residual:.3e} (n={self.n}, γ={self.gamma})", self.n, self.gamma)
        return solution


@functools.lru_cache(maxsize=32)
def cached_solver(n: int, alpha: float, beta: float, gamma: float) -> DampedSystemSolver:
    """按 (n, α, β, γ) 缓存的求解器"""
    return DampedSystemSolver(build_internal_matrix(n, alpha, beta), gamma)


def solve_damped_system(matrix: np.ndarray, gamma: float, rhs: np.ndarray) -> np.ndarray:
    """返回满足 (B + γI) v = rhs 的 v"""
    if gamma <= 0:
        raise SnakeError(f"γ 必须为正数: {gamma}", "INVALID_GAMMA", {'gamma': gamma})
    return DampedSystemSolver(matrix, gamma).solve(rhs)

# ==================== 步长与约束 ====================

def kappa(t: int, params: SnakeParams) -> float:
    """κ_t = min(kappa_base^(−t), kappa_cap)；decaying 模式为 kappa_base^t"""
    if t < 0:
        raise SnakeError(f"迭代序号不能为负: {t}", "INVALID_ITERATION", {'t': t})
    if params.kappa_mode == "decaying":
        return float(params.kappa_base ** t)
    if -t * math.log(params.kappa_base) >= math.log(params.kappa_cap):
        return float(params.kappa_cap)
    return float(min(params.kappa_base ** (-t), params.kappa_cap))


def interior_mean(frame: Frame, contour: Contour) -> float:
    """轮廓栅格化内部的平均亮度"""
    inside = rasterize_contour(contour, frame.width, frame.height).bits
    if not inside.any():
        raise SnakeError("轮廓内部没有像素", "EMPTY_INTERIOR")
    return float(frame.data[inside].mean())


def constraint_weight(frame: Frame, contour: Contour, params: SnakeParams) -> float:
    """w_c = w_scale × (内部平均亮度 − lumen_reference)"""
    return params.w_scale * (interior_mean(frame, contour) - params.lumen_reference)


def snake_step(contour: Contour, force_field: ForceField, frame: Frame, matrix: np.ndarray,
               t: int, params: SnakeParams,
               solver: Optional[DampedSystemSolver] = None) -> Contour:
    """
    一次完整的半隐式迭代，结果限制在帧范围内

    w_scale 为 0 时约束项整体关闭，不再计算内部均值和面积梯度。
    """
    points = contour.points
    if solver is None:
        solver = DampedSystemSolver(matrix, params.gamma)

    forces = sample_forces(force_field, points)
    rhs = params.gamma * points - kappa(t, params) * forces

    if params.w_scale != 0:
        w_c = constraint_weight(frame, contour, params)
        if w_c != 0:
            rhs = rhs - w_c * area_gradient(contour)

    updated = solver.solve(rhs)
    return Contour(updated).clamped(frame.width, frame.height)

# ==================== 能量 ====================

def internal_energy(contour: Contour, alpha: float, beta: float) -> Tuple[float, float]:
    """返回 (α Σ|Cₙ₊₁ − Cₙ|², β Σ|Cₙ₊₁ − 2Cₙ + Cₙ₋₁|²)"""
    points = contour.points
    first = np.roll(points, -1, axis=0) - points
    second = np.roll(points, -1, axis=0) - 2 * points + np.roll(points, 1, axis=0)
    return alpha * float(np.sum(first ** 2)), beta * float(np.sum(second ** 2))


def energy_terms(contour: Contour, frame: Frame, params: SnakeParams,
                 force_field: Optional[ForceField] = None) -> Dict[str, float]:
    """分项能量: image / internal / constraint"""
    force_field = force_field or external_force_field(frame)
    _check_in_bounds(contour.points, force_field.width, force_field.height)
    image = -float(np.sum(_bilinear(force_field.edge_map, contour.points)))
    first, second = internal_energy(contour, params.alpha, params.beta)

    constraint = 0.0
    if len(contour) >= 3 and params.w_scale != 0:
        area = polygon_area(contour)
        if area > 0:
            try:
                constraint = constraint_weight(frame, contour, params) * area
            except SnakeError:
                constraint = 0.0

    return {'image': image, 'internal': first + second, 'constraint': constraint}


def total_energy(contour: Contour, frame: Frame, params: SnakeParams,
                 force_field: Optional[ForceField] = None) -> float:
    """离散化的总能量 E(C)"""
    return float(sum(energy_terms(contour, frame, params, force_field).values()))

# ==================== 迭代 ====================

def run_snake(initial: Contour, frame: Frame, params: SnakeParams = None,
              force_field: Optional[ForceField] = None) -> Tuple[Contour, SnakeDiagnostics]:
    """
    迭代 snake_step 直到平均每点位移 < tol 或达到 max_iterations

    轮廓面积低于 collapse_area 时停止并标记 collapsed (不抛出异常)。
    """
    params = params or SnakeParams()
    force_field = force_field or external_force_field(frame)
    contour = initial.clamped(frame.width, frame.height)
    n = len(contour)
    matrix = build_internal_matrix(n, params.alpha, params.beta)
    solver = cached_solver(n, params.alpha, params.beta, params.gamma)

    diagnostics = SnakeDiagnostics(energy_trace=[total_energy(contour, frame, params, force_field)])

    for t in range(1, params.max_iterations + 1):
        try:
            updated = snake_step(contour, force_field, frame, matrix, t, params, solver)
        except (GeometryError, SnakeError) as e:
            if isinstance(e, SingularSystemError):
                raise
            logger.debug(f"第 {t} 次迭代轮廓退化: {e.message}")
            diagnostics.collapsed = True
            break

        displacement = float(np.mean(np.linalg.norm(updated.points - contour.points, axis=1)))
        contour = updated
        diagnostics.iterations_run = t
        diagnostics.final_mean_displacement = displacement
        diagnostics.displacement_trace.append(displacement)
        diagnostics.energy_trace.append(total_energy(contour, frame, params, force_field))

        if polygon_area(contour) < params.collapse_area:
            diagnostics.collapsed = True
            break
        if displacement < params.tol:
            diagnostics.converged = True
            break

    logger.debug(
        f"snake 结束: 迭代 {diagnostics.iterations_run} 次, 收敛={diagnostics.converged}, "
        f"塌陷={diagnostics.collapsed}, 面积={polygon_area(contour):.1f}")
    return contour, diagnostics


__all__ = [
    'SnakeParams',
    'ForceField',
    'SnakeDiagnostics',
    'SnakeError',
    'SingularSystemError',
    'DampedSystemSolver',
    'external_force_field',
    'sample_force',
    'sample_forces',
    'build_internal_matrix',
    'cached_solver',
    'solve_damped_system',
    'kappa',
    'interior_mean',
    'constraint_weight',
    'snake_step',
    'internal_energy',
    'energy_terms',
    'total_energy',
    'run_snake'
]
