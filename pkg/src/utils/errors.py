"""
异常类型定义
统一错误分类与CLI退出码
"""


class StmReconError(Exception):
    """所有错误的基类，携带CLI退出码"""

    exit_code = 1


class ValidationError(StmReconError):
    """参数或前置条件不满足（退出码2）"""

    exit_code = 2


class DatasetFormatError(ValidationError):
    """数据集清单或二进制块格式错误"""


class ConfigurationError(ValidationError):
    """参数组合不一致，例如 s <= r_C"""


class NumericalError(StmReconError):
    """数值计算失败（退出码3）"""

    exit_code = 3


class StageError(StmReconError):
    """流水线某一阶段失败，保留原始错误的退出码"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"[{stage}] {cause}")
