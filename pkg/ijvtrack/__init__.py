"""
颈内静脉 (IJV) 超声视频分割跟踪工具包

以区域生长结果初始化主动轮廓 (snake)，逐帧用上一帧轮廓质心传播种子，
并提供合成散斑体模与 DICE / CSA 评估。
"""

from datetime import datetime

__version__ = "0.3.0"
__author__ = "IJV Tracking Team"

from .config import config

# 版本信息
VERSION_INFO = {
    'version': __version__,
    'features': [
        'Median + Gaussian Preprocessing',
        'Seeded Region Growing',
        'Moore Boundary Tracing',
        'Periodic Spline Resampling',
        'Semi-implicit Snake',
        'Centroid Seed Propagation',
        'Speckle Phantom',
        'DICE / CSA Evaluation'
    ],
    'kappa_modes': config.snake.get_kappa_modes(),
    'phantom_presets': config.phantom.get_presets()
}


def get_version_info():
    """获取版本信息"""
    return VERSION_INFO


def health_check():
    """系统健康检查"""
    try:
        errors = config.validate()
        if errors:
            return {
                'status': 'error',
                'message': '配置验证失败',
                'errors': errors,
                'timestamp': datetime.now().isoformat()
            }

        return {
            'status': 'healthy',
            'version': __version__,
            'timestamp': datetime.now().isoformat(),
            'features': VERSION_INFO['features']
        }
    except Exception as e:
        return {
            'status': 'error',
            'message': str(e)
        }


__all__ = [
    'config',
    'get_version_info',
    'health_check',
    'VERSION_INFO'
]
