#!/usr/bin/env python3
"""
ijvtrack 测试包
"""
