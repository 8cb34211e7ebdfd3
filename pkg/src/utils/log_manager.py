"""
日志管理工具类
统一的日志格式：[INFO] / [OK] / [WARNING] / [ERROR]
"""

import logging
import sys

OK_LEVEL = 25
logging.addLevelName(OK_LEVEL, "OK")


class LogManager:
    """日志管理工具类，负责日志初始化和获取模块日志器"""

    def __init__(self):
        """初始化日志管理器"""
        self.root_name = "stmrecon"
        self.handler = None

    def configure(self, verbose: bool = False, stream=None):
        """
        配置根日志器（重复调用时替换输出流与级别）

        Args:
            verbose: 是否输出DEBUG级别
            stream: 输出流，默认stderr
        """
        root = logging.getLogger(self.root_name)
        root.setLevel(logging.DEBUG if verbose else logging.INFO)
        if self.handler is not None:
            root.removeHandler(self.handler)
        self.handler = logging.StreamHandler(stream or sys.stderr)
        self.handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
        root.addHandler(self.handler)
        root.propagate = False

    def get_logger(self, name: str) -> logging.Logger:
        """获取模块日志器，名称统一挂在 stmrecon 下"""
        short = name.split(".", 1)[1] if name.startswith("src.") else name
        return logging.getLogger(f"{self.root_name}.{short}")

    def ok(self, logger: logging.Logger, message: str, *args):
        """输出 [OK] 级别日志"""
        logger.log(OK_LEVEL, message, *args)


# 全局日志管理器实例
log_manager = LogManager()
