#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LAFusion
主程序入口
"""

import sys
import os

# 确保导入路径正确
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import run
from src.utils.logger import setup_logger

def main():
    """主函数"""
    logger = setup_logger()

    try:
        sys.exit(run(sys.argv[1:]))
    except Exception as e:
        logger.error(f"程序运行失败: {str(e)}", exc_info=True)
        sys.exit(1)

if __name__ == "__main__":
    main()
