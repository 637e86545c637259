#!/usr/bin/env python3
"""
IJV Track 安装脚本
"""

from setuptools import setup, find_packages
import os

# 读取README文件
def read_readme():
    readme_path = os.path.join(os.path.dirname(__file__), 'README.md')
    if os.path.exists(readme_path):
        with open(readme_path, 'r', encoding='utf-8') as f:
            return f.read()
    return "Internal jugular vein segmentation and tracking in ultrasound video"

setup(
    name="ijvtrack",
    version="0.3.0",
    author="IJV Tracking Team",
    description="Region growing + active contour tracking of the internal jugular vein in ultrasound video",
    long_description=read_readme(),
    long_description_content_type="text/markdown",
    packages=find_packages(),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Healthcare Industry",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
        "Topic :: Scientific/Engineering :: Image Processing",
    ],
    python_requires=">=3.9",
    install_requires=[
        # 数值计算
        "numpy>=1.24.0",
        "scipy>=1.11.0",

        # 数据处理
        "pandas>=2.1.0",

        # 参数模型
        "pydantic>=2.5.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
            "black>=23.11.0",
            "flake8>=6.1.0",
            "mypy>=1.7.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "ijvtrack=ijvtrack.cli:main",
        ],
    },
    zip_safe=False,
    keywords="ultrasound, internal jugular vein, active contour, snake, region growing, segmentation",
)
