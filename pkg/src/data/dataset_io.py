"""
数据集读写器

目录格式：manifest.json（UTF-8 JSON）+ 每个数组一个小端二进制块
复数按 re/im 交错的 32 位浮点存储，行优先，轴顺序与清单声明一致
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.data.types import (
    DynamicImage,
    Grid,
    ImageStack,
    KtDataset,
    NullspaceProjector,
    RoiMask,
    SamplingMask,
    SensitivityMaps,
    StmSet,
)
from src.utils.errors import DatasetFormatError, ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1
MAX_ELEMENTS = 2 ** 31

# 清单中的 dtype 标签 → 小端 numpy 类型
DTYPE_TAGS = {
    "complex64": "<c8",
    "complex128": "<c16",
    "float32": "<f4",
    "uint8": "u1",
    "int32": "<i4",
}

AXES = {
    "kt": {"samples": ("kx", "ky", "kz", "coil", "frame"), "mask": ("kx", "ky", "kz", "frame")},
    "image": {"values": ("x", "y", "z", "frame")},
    "maps": {"values": ("x", "y", "z", "coil")},
    "mask": {"flags": ("kx", "ky", "kz", "frame")},
    "stm": {
        "maps": ("x", "y", "z", "component", "frame"),
        "eigvals": ("x", "y", "z", "component"),
        "local_components": ("x", "y", "z"),
    },
    "projector": {"W": ("row", "col")},
    "image_stack": {"values": ("x", "y", "z", "stack")},
    "roi": {"flags": ("x", "y", "z")},
}

Storable = Union[KtDataset, DynamicImage, SensitivityMaps, SamplingMask,
                 StmSet, NullspaceProjector, ImageStack, RoiMask]


def _kind_of(ds: Storable) -> str:
    """根据对象类型确定清单 kind"""
    kinds = {
        KtDataset: "kt",
        DynamicImage: "image",
        SensitivityMaps: "maps",
        SamplingMask: "mask",
        StmSet: "stm",
        NullspaceProjector: "projector",
        ImageStack: "image_stack",
        RoiMask: "roi",
    }
    for cls, kind in kinds.items():
        if isinstance(ds, cls):
            return kind
    raise ValidationError(f"不支持写入的对象类型: {type(ds).__name__}")


def _arrays_of(kind: str, ds: Storable) -> Dict[str, tuple]:
    """返回 {数组名: (数组, dtype标签)}"""
    if kind == "kt":
        return {"samples": (ds.samples, "complex64"), "mask": (ds.mask.flags, "uint8")}
    if kind in ("image", "maps"):
        return {"values": (ds.values, "complex64")}
    if kind == "mask":
        return {"flags": (ds.flags, "uint8")}
    if kind == "stm":
        arrays = {"maps": (ds.maps, "complex64"), "eigvals": (ds.eigvals, "float32")}
        if ds.local_components is not None:
            arrays["local_components"] = (ds.local_components, "int32")
        return arrays
    if kind == "projector":
        return {"W": (ds.W, "complex128")}
    if kind == "image_stack":
        return {"values": (ds.values, "float32")}
    return {"flags": (ds.flags, "uint8")}


def _meta_of(kind: str, ds: Storable) -> Dict[str, Any]:
    """额外的标量元数据"""
    if kind in ("kt", "mask"):
        mask = ds.mask if kind == "kt" else ds
        return {"acs_box": [list(pair) for pair in mask.acs_box]}
    if kind == "projector":
        return {
            "rank_estimate": int(ds.rank_estimate),
            "method": ds.method,
            "threshold": float(ds.threshold),
            "sketch_dim": None if ds.sketch_dim is None else int(ds.sketch_dim),
        }
    if kind == "image_stack":
        return {"labels": list(ds.labels)}
    return {}


def write_dataset(path: Union[str, Path], ds: Storable) -> Path:
    """
    写入数据集目录

    Args:
        path: 数据集目录（父目录必须存在）
        ds: 要写入的对象

    Returns:
        数据集目录路径
    """
    path = Path(path)
    if not path.parent.exists():
        raise ValidationError(f"父目录不存在: {path.parent}")
    kind = _kind_of(ds)
    arrays = _arrays_of(kind, ds)
    for name, (array, _) in arrays.items():
        if array.size >= MAX_ELEMENTS:
            raise ValidationError(f"数组 {name} 元素数 {array.size} 超过 2^31 上限")

    manifest = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "dims": list(ds.grid.dims) if hasattr(ds, "grid") else list(ds.W.shape),
        "arrays": {},
    }
    try:
        path.mkdir(exist_ok=True)
        for name, (array, tag) in arrays.items():
            blob = f"{name}.bin"
            data = np.ascontiguousarray(np.asarray(array).astype(DTYPE_TAGS[tag]))
            (path / blob).write_bytes(data.tobytes(order="C"))
            manifest["arrays"][name] = {
                "file": blob,
                "axes": list(AXES[kind][name]),
                "shape": list(array.shape),
                "dtype": tag,
            }
        primary = next(iter(manifest["arrays"].values()))
        manifest["axes"] = primary["axes"]
        manifest["dtype"] = primary["dtype"]
        manifest.update(_meta_of(kind, ds))
        (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"无法写入数据集 {path}: {e}")
    logger.debug("写入数据集 %s (kind=%s)", path, kind)
    return path


class DatasetReader:
    """
    数据集读取器类
    """

    def __init__(self, path: Union[str, Path]):
        """
        初始化读取器

        Args:
            path: 数据集目录
        """
        self.path = Path(path)
        manifest_path = self.path / MANIFEST_NAME
        if not manifest_path.exists():
            raise DatasetFormatError(f"数据集清单不存在: {manifest_path}")
        try:
            self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DatasetFormatError(f"清单不是合法的JSON: {e}")
        if self.manifest.get("version") != FORMAT_VERSION:
            raise DatasetFormatError(f"不支持的格式版本: {self.manifest.get('version')}")
        if self.manifest.get("kind") not in AXES:
            raise DatasetFormatError(f"未知的数据类型: {self.manifest.get('kind')}")

    @property
    def kind(self) -> str:
        return self.manifest["kind"]

    def read_array(self, name: str) -> np.ndarray:
        """
        读取单个数组，校验文件大小与清单声明一致

        Args:
            name: 数组名

        Returns:
            按清单形状重排的数组
        """
        entry = self.manifest["arrays"].get(name)
        if entry is None:
            raise DatasetFormatError(f"清单缺少数组 {name}")
        if entry["dtype"] not in DTYPE_TAGS:
            raise DatasetFormatError(f"未知的 dtype 标签: {entry['dtype']}")
        blob = self.path / entry["file"]
        if not blob.exists():
            raise DatasetFormatError(f"缺少数据块: {blob}")
        dtype = np.dtype(DTYPE_TAGS[entry["dtype"]])
        shape = tuple(int(s) for s in entry["shape"])
        if len(entry.get("axes", ())) != len(shape):
            raise DatasetFormatError(f"数组 {name} 的轴数与形状不一致")
        expected = int(np.prod(shape)) * dtype.itemsize
        actual = blob.stat().st_size
        if actual != expected:
            raise DatasetFormatError(f"数据块 {blob.name} 大小 {actual} 字节，清单要求 {expected} 字节")
        return np.fromfile(blob, dtype=dtype).reshape(shape)

    def read_mask_flags(self, name: str) -> np.ndarray:
        flags = self.read_array(name)
        if not np.all(flags <= 1):
            raise DatasetFormatError(f"采样模板 {name} 含有 0/1 以外的值")
        return flags.astype(bool)

    def grid(self) -> Grid:
        return Grid(tuple(self.manifest["dims"]))

    def load(self) -> Storable:
        """按 kind 还原对象（构造时校验类型不变量）"""
        kind = self.kind
        if kind == "projector":
            return NullspaceProjector(
                W=self.read_array("W"),
                rank_estimate=self.manifest["rank_estimate"],
                method=self.manifest["method"],
                threshold=self.manifest["threshold"],
                sketch_dim=self.manifest.get("sketch_dim"),
            )
        grid = self.grid()
        if kind == "kt":
            mask = SamplingMask(grid, self.read_mask_flags("mask"), self.manifest["acs_box"])
            return KtDataset(grid, self.read_array("samples"), mask)
        if kind == "mask":
            return SamplingMask(grid, self.read_mask_flags("flags"), self.manifest["acs_box"])
        if kind == "image":
            return DynamicImage(grid, self.read_array("values"))
        if kind == "maps":
            return SensitivityMaps(grid, self.read_array("values"))
        if kind == "stm":
            local = None
            if "local_components" in self.manifest["arrays"]:
                local = self.read_array("local_components")
            return StmSet(grid, self.read_array("maps"), self.read_array("eigvals"), local)
        if kind == "image_stack":
            return ImageStack(grid, self.read_array("values"), tuple(self.manifest.get("labels", ())))
        return RoiMask(grid, self.read_mask_flags("flags"))


def read_dataset(path: Union[str, Path], expected_kind: Optional[str] = None) -> Storable:
    """
    读取数据集目录

    Args:
        path: 数据集目录
        expected_kind: 期望的 kind，不一致时报格式错误

    Returns:
        还原的对象
    """
    reader = DatasetReader(path)
    if expected_kind is not None and reader.kind != expected_kind:
        raise DatasetFormatError(f"数据类型不匹配: 期望 {expected_kind}，实际 {reader.kind}")
    try:
        return reader.load()
    except DatasetFormatError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise DatasetFormatError(f"清单与数据不一致: {e}")
