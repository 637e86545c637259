#!/usr/bin/env python3
"""
命令行接口模块
提供 phantom (生成体模)、segment (分割跟踪)、eval (评估) 三个工作流

退出码: 0 成功，1 用法错误，2 数据错误。所有诊断信息写到 stderr。
"""

import argparse
import logging
import os
import sys
from typing import Iterable, List, Optional, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel
from pydantic import ValidationError as ParamValidationError

from . import __version__, get_version_info, health_check
from .config import config
from .core_io import burn_contour, load_video, save_frame
from .evaluation import save_summary, summarize
from .filters import FilterParams
from .geometry import ResampleParams
from .phantom import PhantomSpec, generate, load_truth, save_video
from .region_grow import Seed
from .snake import SnakeParams
from .tracker import GrowParams, TrackerParams, TrackingRecord, track_video
from .utils import VesselTrackError, parse_pair

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DIAGNOSTICS_COLUMNS = ['frame', 'iterations_run', 'final_mean_displacement', 'converged', 'collapsed']

# segment 的可调参数，按模型分组
SEGMENT_MODELS = (
    ('filters', FilterParams),
    ('growth', GrowParams),
    ('resample', ResampleParams),
    ('snake', SnakeParams),
)

# 由 --frames / --size / --semi-axes / --center / --preset / --rng-seed 单独处理
PHANTOM_SPECIAL_FIELDS = ('preset', 'n_frames', 'width', 'height', 'rng_seed',
                          'base_semi_axes', 'center')


class CliParser(argparse.ArgumentParser):
    """用法错误以退出码 1 结束 (argparse 默认为 2)"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(verbose: bool = False):
    """设置日志 (输出到 stderr)"""
    level = logging.DEBUG if verbose else getattr(logging, config.logging.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format=config.logging.LOG_FORMAT,
        stream=sys.stderr
    )

# ==================== 参数类型 ====================

def seed_arg(text: str) -> Seed:
    """解析 --seed X,Y"""
    try:
        x, y = parse_pair(text, int)
    except ValueError:
        raise argparse.ArgumentTypeError(f"种子格式应为 X,Y (整数): {text!r}")
    return Seed(x, y)


def size_arg(text: str) -> tuple:
    """解析 --size WxH"""
    try:
        width, height = parse_pair(text.lower(), int, sep="x")
    except ValueError:
        raise argparse.ArgumentTypeError(f"尺寸格式应为 WxH: {text!r}")
    return width, height


def float_pair_arg(text: str) -> tuple:
    try:
        return parse_pair(text, float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"格式应为 A,B: {text!r}")


def flag_name(field_name: str) -> str:
    return '--' + field_name.replace('_', '-')


def add_model_flags(parser: argparse.ArgumentParser, model: Type[BaseModel],
                    title: str, skip: Iterable[str] = ()) -> None:
    """把 pydantic 模型的标量字段注册为命令行参数，默认值取模型默认值"""
    group = parser.add_argument_group(title)
    for name, field in model.model_fields.items():
        if name in skip:
            continue
        kwargs = dict(
            dest=name,
            type=field.annotation,
            default=field.default,
            help=f"{field.description} (默认: {field.default})",
        )
        if name == 'kappa_mode':
            kwargs['choices'] = config.snake.get_kappa_modes()
        group.add_argument(flag_name(name), **kwargs)


def model_from_args(model: Type[BaseModel], args: argparse.Namespace,
                    skip: Iterable[str] = (), **extra) -> BaseModel:
    values = {name: getattr(args, name) for name in model.model_fields if name not in skip}
    values.update(extra)
    return model(**values)

# ==================== 子命令 ====================

def cmd_version(args) -> int:
    """显示版本信息"""
    info = get_version_info()
    print(f"ijvtrack v{__version__}")
    print(f"功能: {', '.join(info['features'])}")
    print(f"体模预设: {', '.join(info['phantom_presets'])}")
    health = health_check()
    if health['status'] != 'healthy':
        for error in health.get('errors', [health.get('message')]):
            logger.error(f"配置错误: {error}")
        return EXIT_DATA
    return EXIT_OK


def cmd_phantom(args) -> int:
    """生成体模视频与真值"""
    skip = PHANTOM_SPECIAL_FIELDS
    overrides = {}
    if args.size is not None:
        overrides['width'], overrides['height'] = args.size
    if args.semi_axes is not None:
        overrides['base_semi_axes'] = args.semi_axes
    if args.center is not None:
        overrides['center'] = args.center

    spec = model_from_args(PhantomSpec, args, skip=skip, preset=args.preset,
                           n_frames=args.frames, rng_seed=args.rng_seed, **overrides)
    video = generate(spec)
    save_video(video, args.out)
    logger.info(f"体模已写出到 {args.out}: {spec.n_frames} 帧")
    return EXIT_OK


def _segment_params(args: argparse.Namespace) -> TrackerParams:
    return TrackerParams(**{key: model_from_args(model, args) for key, model in SEGMENT_MODELS})


def _write_traces(record: TrackingRecord, out_dir: str) -> None:
    traces_dir = os.path.join(out_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    rows = []
    for result in record.results:
        diagnostics = result.diagnostics
        if diagnostics is None:
            continue
        rows.append({'frame': result.frame_index, **diagnostics.to_dict()})
        energy = diagnostics.energy_trace
        # 第 0 行是初始轮廓，没有位移
        displacement = [np.nan] + list(diagnostics.displacement_trace)
        displacement += [np.nan] * (len(energy) - len(displacement))
        pd.DataFrame({
            't': np.arange(len(energy)),
            'energy': energy,
            'mean_displacement': displacement[:len(energy)],
        }).to_csv(os.path.join(traces_dir, config.tracker.TRACE_PATTERN % result.frame_index),
                  index=False, lineterminator="\n")

    pd.DataFrame(rows, columns=DIAGNOSTICS_COLUMNS).to_csv(
        os.path.join(out_dir, config.tracker.DIAGNOSTICS_FILE), index=False, lineterminator="\n")


def _write_overlays(record: TrackingRecord, frames: List, out_dir: str) -> None:
    overlays_dir = os.path.join(out_dir, "overlays")
    os.makedirs(overlays_dir, exist_ok=True)
    for result, frame in zip(record.results, frames):
        overlay = burn_contour(frame, result.contour) if result.contour is not None else frame
        save_frame(overlay, os.path.join(overlays_dir, config.tracker.OVERLAY_PATTERN % result.frame_index))


def cmd_segment(args) -> int:
    """分割并跟踪整段视频"""
    params = _segment_params(args)
    frames = load_video(args.input)
    record = track_video(frames, args.seed, params)

    record.save(args.out)
    if args.trace:
        _write_traces(record, args.out)
    if args.overlays:
        _write_overlays(record, frames, args.out)

    counts = record.status_counts()
    logger.info(f"分割结果已写出到 {args.out}: {len(record)} 帧, {counts}")
    return EXIT_OK


def cmd_eval(args) -> int:
    """对照真值评估分割结果"""
    record = TrackingRecord.load(args.pred)
    masks, csa = load_truth(args.truth)
    summary = summarize(record, masks, csa)
    save_summary(summary, args.out)
    print(summary.summary_line())
    return EXIT_OK

# ==================== 解析器 ====================

def build_parser() -> CliParser:
    """构造命令行解析器"""
    parser = CliParser(
        prog='ijvtrack',
        description="颈内静脉超声视频分割跟踪命令行工具",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )

    parser.add_argument(
        '--verbose', '-v',
        action='store_true',
        help='启用详细输出'
    )

    subparsers = parser.add_subparsers(dest='command', help='可用命令', required=True)

    # 版本命令
    version_parser = subparsers.add_parser('version', help='显示版本信息')
    version_parser.set_defaults(func=cmd_version)

    # 体模命令
    phantom_parser = subparsers.add_parser('phantom', help='生成合成体模视频与真值')
    phantom_parser.add_argument('--preset', choices=config.phantom.get_presets(),
                                default=PhantomSpec.model_fields['preset'].default,
                                help=f"体模预设 (默认: {PhantomSpec.model_fields['preset'].default})")
    phantom_parser.add_argument('--frames', type=int, default=config.phantom.N_FRAMES,
                                help=f'帧数 (默认: {config.phantom.N_FRAMES})')
    phantom_parser.add_argument('--size', type=size_arg, default=None,
                                help=f'帧尺寸 WxH (默认: {config.phantom.WIDTH}x{config.phantom.HEIGHT})')
    phantom_parser.add_argument('--rng-seed', type=int, default=config.phantom.RNG_SEED,
                                help=f'散斑随机种子 (默认: {config.phantom.RNG_SEED})')
    phantom_parser.add_argument('--semi-axes', type=float_pair_arg, default=None,
                                help='基础半轴 A,B (默认: {},{})'.format(*config.phantom.BASE_SEMI_AXES))
    phantom_parser.add_argument('--center', type=float_pair_arg, default=None,
                                help='椭圆中心 X,Y (默认: 帧中心)')
    phantom_parser.add_argument('--out', required=True, help='输出目录')
    add_model_flags(phantom_parser, PhantomSpec, '体模参数', skip=PHANTOM_SPECIAL_FIELDS)
    phantom_parser.set_defaults(func=cmd_phantom)

    # 分割命令
    segment_parser = subparsers.add_parser('segment', help='分割并跟踪视频')
    segment_parser.add_argument('--input', required=True, help='帧目录 (frame_%%04d.pgm)')
    segment_parser.add_argument('--seed', type=seed_arg, required=True, help='第 0 帧种子 X,Y')
    segment_parser.add_argument('--out', required=True, help='输出目录')
    segment_parser.add_argument('--overlays', action='store_true', help='写出轮廓叠加图')
    segment_parser.add_argument('--trace', action='store_true', help='写出每帧 snake 迭代轨迹')
    for title, model in SEGMENT_MODELS:
        add_model_flags(segment_parser, model, title)
    segment_parser.set_defaults(func=cmd_segment)

    # 评估命令
    eval_parser = subparsers.add_parser('eval', help='对照真值评估')
    eval_parser.add_argument('--pred', required=True, help='segment 输出目录')
    eval_parser.add_argument('--truth', required=True, help='真值目录 (mask_%%04d.pgm + csa.csv)')
    eval_parser.add_argument('--out', required=True, help='输出目录')
    eval_parser.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主命令行入口，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(args.verbose)

    try:
        return args.func(args)
    except ParamValidationError as e:
        logger.error(f"参数无效: {e}")
        return EXIT_USAGE
    except VesselTrackError as e:
        logger.error(f"[{e.error_code}] {e.message}")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"文件操作失败: {e}")
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
