"""
JSON 配置读取
pydantic 校验失败统一转换为 ValidationError
"""

import json
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import pydantic

from src.utils.errors import ValidationError

ModelT = TypeVar("ModelT", bound=pydantic.BaseModel)


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    """读取 JSON 文件"""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"配置文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"配置文件不是合法的 JSON: {path} ({e})")


def load_model(model: Type[ModelT], source: Union[str, Path, Dict[str, Any], ModelT]) -> ModelT:
    """
    校验并构造配置模型

    Args:
        model: pydantic 模型类
        source: JSON 路径、字典或已构造的模型

    Returns:
        模型实例
    """
    if isinstance(source, model):
        return source
    data = source if isinstance(source, dict) else read_json(source)
    try:
        return model.model_validate(data)
    except pydantic.ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model.__name__}: {err['msg']}" for err in e.errors()
        )
        raise ValidationError(f"{model.__name__} 配置无效: {details}")
