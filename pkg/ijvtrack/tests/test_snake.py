#!/usr/bin/env python3
"""
主动轮廓 (snake) 模块测试
"""

import math

import pytest
import numpy as np
from pydantic import ValidationError

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from ijvtrack.core_io import Contour, Frame
from ijvtrack.filters import preprocess
from ijvtrack.geometry import polygon_area
from ijvtrack.phantom import PhantomSpec, render_frame, semi_axes
from ijvtrack.snake import (
    SnakeParams, ForceField, SnakeError, DampedSystemSolver,
    external_force_field, sample_force, sample_forces, build_internal_matrix,
    cached_solver, solve_damped_system, kappa, interior_mean, constraint_weight,
    snake_step, internal_energy, energy_terms, total_energy, run_snake
)


def regular_polygon(n: int, radius: float, cx: float, cy: float) -> Contour:
    angles = 2 * np.pi * np.arange(n) / n
    return Contour(np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)]))


def constant_frame(value: int, size: int = 64) -> Frame:
    return Frame(np.full((size, size), value, dtype=np.uint8))


class TestInternalMatrix:
    """内部能量矩阵测试类"""

    def test_stencil(self):
        """测试 α = β = 2 时行模板为 [2, −10, 16, −10, 2]"""
        matrix = build_internal_matrix(10, 2.0, 2.0)
        assert matrix[3, 1:6].tolist() == [2.0, -10.0, 16.0, -10.0, 2.0]
        # 循环: 第 0 行绕回末尾
        assert matrix[0, [8, 9, 0, 1, 2]].tolist() == [2.0, -10.0, 16.0, -10.0, 2.0]

    def test_nullspace_and_symmetry(self):
        """测试 B·1 = 0 且 B 对称"""
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(5, 80))
            matrix = build_internal_matrix(n, rng.uniform(0, 10), rng.uniform(0, 10))
            assert np.allclose(matrix @ np.ones(n), 0.0, atol=1e-12)
            assert np.array_equal(matrix, matrix.T)

    def test_too_small(self):
        """测试点数少于 5 报错"""
        with pytest.raises(SnakeError):
            build_internal_matrix(4, 2.0, 2.0)


class TestDampedSolver:
    """阻尼系统求解测试类"""

    def test_round_trip(self):
        """测试 rhs = (B + γI)·w 时返回 w"""
        rng = np.random.default_rng(2)
        matrix = build_internal_matrix(32, 2.0, 2.0)
        w = rng.normal(size=32)
        rhs = (matrix + 2000.0 * np.eye(32)) @ w
        assert np.max(np.abs(solve_damped_system(matrix, 2000.0, rhs) - w)) < 1e-8

    def test_constant_rhs(self):
        """测试常数右端项得到 c/γ"""
        matrix = build_internal_matrix(16, 2.0, 2.0)
        result = solve_damped_system(matrix, 4.0, np.full(16, 3.0))
        assert np.allclose(result, 0.75, atol=1e-12)

    def test_matches_dense_oracle(self):
        """测试与稠密求解器一致 (n ∈ {8, 32, 64}，各 100 次)"""
        rng = np.random.default_rng(3)
        for n in (8, 32, 64):
            for _ in range(100):
                alpha, beta = rng.uniform(0, 5, 2)
                gamma = rng.uniform(0.1, 5000)
                matrix = build_internal_matrix(n, alpha, beta)
                rhs = rng.normal(size=(n, 2))
                expected = np.linalg.solve(matrix + gamma * np.eye(n), rhs)
                assert np.max(np.abs(solve_damped_system(matrix, gamma, rhs) - expected)) <= 1e-8

    def test_dense_fallback(self):
        """测试非循环带状矩阵走稠密分解"""
        rng = np.random.default_rng(4)
        a = rng.normal(size=(9, 9))
        matrix = a @ a.T
        rhs = rng.normal(size=9)
        expected = np.linalg.solve(matrix + np.eye(9), rhs)
        assert np.allclose(DampedSystemSolver(matrix, 1.0).solve(rhs), expected, atol=1e-8)

    def test_invalid_gamma(self):
        """测试 γ ≤ 0 报错"""
        with pytest.raises(SnakeError):
            solve_damped_system(build_internal_matrix(8, 1.0, 1.0), 0.0, np.zeros(8))

    def test_cached_solver(self):
        """测试相同参数复用求解器"""
        assert cached_solver(32, 2.0, 2.0, 2000.0) is cached_solver(32, 2.0, 2.0, 2000.0)


class TestForces:
    """外部力场测试类"""

    def test_constant_frame_zero_field(self):
        """测试常数帧力场为零"""
        field = external_force_field(constant_frame(90, 20))
        assert not field.fx.any() and not field.fy.any() and not field.edge_map.any()

    def test_step_edge_pulls_inward(self):
        """测试竖直阶跃边缘两侧的力关于边缘反对称，减去后指向边缘"""
        c = 10
        data = np.zeros((20, 20), dtype=np.uint8)
        data[:, c:] = 200
        field = external_force_field(Frame(data))
        assert np.all(field.fx[:, c - 2] < 0)
        assert np.allclose(field.fx[:, c - 2], -field.fx[:, c + 1])
        assert np.allclose(field.fy, 0.0)

    @pytest.fixture
    def ramp_field(self):
        """fx = 3x + y，fy = −2y 的线性场"""
        ys, xs = np.mgrid[0:10, 0:12].astype(np.float64)
        return ForceField(fx=3 * xs + ys, fy=-2 * ys, edge_map=np.zeros((10, 12)))

    def test_sample_on_node(self, ramp_field):
        """测试网格点上取节点值"""
        assert sample_force(ramp_field, (4.0, 2.0)) == pytest.approx((14.0, -4.0))

    def test_sample_midpoint(self):
        """测试两节点中点取平均"""
        fx = np.zeros((4, 4))
        fx[1, 1], fx[1, 2] = 2.0, 6.0
        field = ForceField(fx=fx, fy=np.zeros((4, 4)), edge_map=np.zeros((4, 4)))
        assert sample_force(field, (1.5, 1.0))[0] == pytest.approx(4.0)

    def test_sample_ramp_exact(self, ramp_field):
        """测试线性场上双线性插值精确"""
        points = np.array([[4.25, 2.0], [7.6, 3.3], [0.1, 8.9]])
        forces = sample_forces(ramp_field, points)
        assert np.allclose(forces[:, 0], 3 * points[:, 0] + points[:, 1])
        assert np.allclose(forces[:, 1], -2 * points[:, 1])

    def test_sample_out_of_bounds(self, ramp_field):
        """测试越界采样报错"""
        with pytest.raises(SnakeError) as exc_info:
            sample_force(ramp_field, (11.5, 2.0))
        assert exc_info.value.error_code == "OUT_OF_BOUNDS"


class TestStepControl:
    """步长与约束项测试类"""

    def test_kappa_values(self):
        """测试 κ 的取值"""
        params = SnakeParams()
        assert kappa(0, params) == 1.0
        assert kappa(10, params) == pytest.approx(0.98 ** -10)
        assert kappa(10, params) == pytest.approx(1.223881, abs=1e-6)
        assert kappa(1000, params) == 20.0

    def test_kappa_monotone(self):
        """测试 κ 单调不减且不超过上限"""
        params = SnakeParams()
        values = [kappa(t, params) for t in range(400)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert max(values) == params.kappa_cap

    def test_kappa_decaying_mode(self):
        """测试 decaying 模式为 0.98^t"""
        params = SnakeParams(kappa_mode="decaying")
        assert kappa(10, params) == pytest.approx(0.98 ** 10)
        with pytest.raises(ValidationError):
            SnakeParams(kappa_mode="unknown")

    @pytest.mark.parametrize("value,expected", [(10, -80.0), (50, 0.0), (200, 300.0)])
    def test_constraint_weight(self, value, expected):
        """测试 w_c = 2 × (内部均值 − 50)"""
        square = Contour(np.array([[10.0, 10.0], [30.0, 10.0], [30.0, 30.0], [10.0, 30.0]]))
        frame = constant_frame(value)
        assert interior_mean(frame, square) == pytest.approx(value)
        assert constraint_weight(frame, square, SnakeParams()) == pytest.approx(expected)

    def test_empty_interior(self):
        """测试内部没有像素时报错"""
        sliver = Contour(np.array([[10.2, 10.2], [10.4, 10.2], [10.4, 10.4], [10.2, 10.4]]))
        with pytest.raises(SnakeError) as exc_info:
            interior_mean(constant_frame(10), sliver)
        assert exc_info.value.error_code == "EMPTY_INTERIOR"


class TestSnakeStep:
    """单步迭代测试类"""

    def test_constant_contour_fixed_point(self):
        """测试零力场、无约束时常数轮廓不动"""
        frame = constant_frame(100)
        params = SnakeParams(w_scale=0.0)
        contour = Contour(np.tile([20.0, 30.0], (32, 1)))
        matrix = build_internal_matrix(32, params.alpha, params.beta)
        updated = snake_step(contour, external_force_field(frame), frame, matrix, 1, params)
        assert np.allclose(updated.points, contour.points, atol=1e-9)

    def test_polygon_shrinks(self):
        """测试零力场下正多边形向质心收缩，与稠密公式一致"""
        frame = constant_frame(100)
        params = SnakeParams(w_scale=0.0)
        contour = regular_polygon(32, 10.0, 32.0, 32.0)
        matrix = build_internal_matrix(32, params.alpha, params.beta)
        updated = snake_step(contour, external_force_field(frame), frame, matrix, 1, params)

        expected = np.linalg.solve(matrix + params.gamma * np.eye(32), params.gamma * contour.points)
        assert np.allclose(updated.points, expected, atol=1e-6)
        radii = np.hypot(updated.x - 32.0, updated.y - 32.0)
        assert np.all(radii < 10.0)

    def test_circumradius_non_increasing(self):
        """测试零力场、无约束时 100 个随机凸多边形的外接半径不增"""
        rng = np.random.default_rng(11)
        frame = constant_frame(100, 128)
        params = SnakeParams(w_scale=0.0)
        field = external_force_field(frame)
        for _ in range(100):
            n = int(rng.integers(5, 64))
            # 正多边形的仿射像仍是凸多边形
            base = regular_polygon(n, 1.0, 0.0, 0.0).points
            base = np.roll(base, int(rng.integers(n)), axis=0)
            linear = rng.uniform(-1.0, 1.0, (2, 2)) * 12.0 + np.diag(rng.uniform(8.0, 20.0, 2))
            center = rng.uniform(50.0, 78.0, 2)
            contour = Contour(base @ linear.T + center)

            matrix = build_internal_matrix(n, params.alpha, params.beta)
            updated = snake_step(contour, field, frame, matrix, 1, params)

            before = np.linalg.norm(contour.points - contour.points.mean(axis=0), axis=1).max()
            after = np.linalg.norm(updated.points - updated.points.mean(axis=0), axis=1).max()
            assert after <= before + 1e-9

    def test_negative_constraint_expands(self):
        """测试强负 w_c、零力场时一步迭代后面积严格增大"""
        frame = constant_frame(0)
        params = SnakeParams(w_scale=50.0)
        contour = regular_polygon(32, 10.0, 32.0, 32.0)
        assert constraint_weight(frame, contour, params) == pytest.approx(-2500.0)

        matrix = build_internal_matrix(32, params.alpha, params.beta)
        updated = snake_step(contour, external_force_field(frame), frame, matrix, 1, params)
        assert polygon_area(updated) > polygon_area(contour)
        # 反向轮廓同样向外扩张
        reversed_step = snake_step(contour.reversed(), external_force_field(frame), frame, matrix, 1, params)
        assert polygon_area(reversed_step) > polygon_area(contour)

    def test_full_step_matches_dense_formula(self):
        """测试体模边缘上的完整一步与稠密公式一致"""
        spec = PhantomSpec(n_frames=1, width=96, height=96, speckle_strength=0.0,
                           base_semi_axes=(20.0, 14.0), pulse_amplitude=0.0)
        frame = preprocess(render_frame(spec, 0))
        params = SnakeParams()
        field = external_force_field(frame)
        contour = regular_polygon(32, 16.0, 47.5, 47.5)
        matrix = build_internal_matrix(32, params.alpha, params.beta)

        updated = snake_step(contour, field, frame, matrix, 3, params)

        from ijvtrack.geometry import area_gradient
        rhs = (params.gamma * contour.points - kappa(3, params) * sample_forces(field, contour.points)
               - constraint_weight(frame, contour, params) * area_gradient(contour))
        expected = np.linalg.solve(matrix + params.gamma * np.eye(32), rhs)
        assert np.allclose(updated.points, np.clip(expected, 0, 95), atol=1e-6)

    def test_large_gamma_barely_moves(self):
        """测试 γ = 10⁶ 时每点位移小于 0.01 像素"""
        ys, xs = np.mgrid[0:64, 0:64]
        blob = 100 + 60 * np.exp(-((xs - 32) ** 2 + (ys - 32) ** 2) / 200.0)
        frame = Frame(np.rint(blob).astype(np.uint8))
        params = SnakeParams(gamma=1e6)
        contour = regular_polygon(32, 12.0, 32.0, 32.0)
        matrix = build_internal_matrix(32, params.alpha, params.beta)
        updated = snake_step(contour, external_force_field(frame), frame, matrix, 1, params)
        assert np.max(np.linalg.norm(updated.points - contour.points, axis=1)) < 1e-2

    def test_result_clamped(self):
        """测试结果限制在帧范围内"""
        frame = constant_frame(10, 20)
        params = SnakeParams(gamma=1.0)
        contour = regular_polygon(16, 9.0, 9.5, 9.5)
        matrix = build_internal_matrix(16, params.alpha, params.beta)
        updated = snake_step(contour, external_force_field(frame), frame, matrix, 1, params)
        assert updated.points.min() >= 0 and updated.points.max() <= 19


class TestEnergy:
    """能量测试类"""

    def test_constant_frame_constant_contour(self):
        """测试常数帧、常数轮廓的能量项为 0"""
        contour = Contour(np.tile([20.0, 20.0], (8, 1)))
        terms = energy_terms(contour, constant_frame(70), SnakeParams())
        assert terms['image'] == 0.0
        assert terms['internal'] == 0.0
        assert terms['constraint'] == 0.0

    def test_internal_energy_circle(self):
        """测试正多边形的内部能量解析值"""
        contour = regular_polygon(16, 5.0, 0.0, 0.0)
        first, second = internal_energy(contour, 1.0, 1.0)
        chord = 2 * 5.0 * math.sin(math.pi / 16)
        assert first == pytest.approx(16 * chord ** 2)
        assert second > 0

    def test_internal_energy_scales_quadratically(self):
        """测试绕质心放大 2 倍后一阶内部能量变为 4 倍"""
        rng = np.random.default_rng(12)
        contour = Contour(rng.uniform(20.0, 40.0, (24, 2)))
        center = contour.points.mean(axis=0)
        scaled = Contour(center + 2.0 * (contour.points - center))
        first, second = internal_energy(contour, 2.0, 2.0)
        first_scaled, second_scaled = internal_energy(scaled, 2.0, 2.0)
        assert first_scaled == pytest.approx(4.0 * first, rel=1e-12)
        assert second_scaled == pytest.approx(4.0 * second, rel=1e-12)

    def test_total_energy_sums_terms(self):
        """测试总能量为各项之和"""
        frame = constant_frame(30)
        contour = regular_polygon(12, 6.0, 32.0, 32.0)
        terms = energy_terms(contour, frame, SnakeParams())
        assert total_energy(contour, frame, SnakeParams()) == pytest.approx(sum(terms.values()))
        # 内部比参考亮度暗: 约束能量为负
        assert terms['constraint'] < 0


class TestRunSnake:
    """迭代测试类"""

    @pytest.fixture
    def clean_phantom(self):
        """无散斑、无搏动的体模帧"""
        spec = PhantomSpec(n_frames=1, width=128, height=128, speckle_strength=0.0,
                           base_semi_axes=(30.0, 20.0), pulse_amplitude=0.0)
        return spec, preprocess(render_frame(spec, 0))

    def test_single_iteration(self, clean_phantom):
        """测试 max_iterations = 1 时只迭代一次"""
        spec, frame = clean_phantom
        initial = regular_polygon(32, 10.0, 63.5, 63.5)
        contour, diagnostics = run_snake(initial, frame, SnakeParams(max_iterations=1))
        assert diagnostics.iterations_run == 1
        assert len(diagnostics.energy_trace) == 2
        assert len(diagnostics.displacement_trace) == 1
        assert len(contour) == 32

    def test_converges_from_true_contour(self, clean_phantom):
        """测试从真实边界出发快速收敛且面积接近真值"""
        spec, frame = clean_phantom
        a, b = semi_axes(spec, 0)
        angles = 2 * np.pi * np.arange(32) / 32
        initial = Contour(np.column_stack([63.5 + a * np.cos(angles), 63.5 + b * np.sin(angles)]))
        contour, diagnostics = run_snake(initial, frame)
        assert diagnostics.converged
        assert diagnostics.iterations_run <= 30
        assert abs(polygon_area(contour) - math.pi * a * b) / (math.pi * a * b) < 0.08
        assert np.all(np.isfinite(diagnostics.energy_trace))
        assert diagnostics.iterations_run <= SnakeParams().max_iterations

    def test_grows_from_inside(self, clean_phantom):
        """测试从管腔内部的小轮廓出发向外扩张到边缘附近"""
        spec, frame = clean_phantom
        a, b = semi_axes(spec, 0)
        initial = regular_polygon(32, 12.0, 63.5, 63.5)
        contour, diagnostics = run_snake(initial, frame)
        assert polygon_area(contour) > polygon_area(initial)
        assert diagnostics.energy_trace[-1] <= diagnostics.energy_trace[0]

    def test_collapse_reported(self):
        """测试轮廓塌陷时标记 collapsed 而不抛出异常"""
        frame = constant_frame(200)
        params = SnakeParams(gamma=1.0, alpha=5.0, beta=0.0, w_scale=0.0)
        initial = regular_polygon(16, 1.5, 32.0, 32.0)
        contour, diagnostics = run_snake(initial, frame, params)
        assert diagnostics.collapsed
        assert not diagnostics.converged
