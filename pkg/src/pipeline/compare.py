"""
报告对比
把两份报告的指标（NRMSE、NPR、耗时）整理成 pandas 表格，检查方法间的误差排序约束
"""

from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Union

import pandas as pd

from src.pipeline.runner import Report, read_report
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

BEST_STM = "best_stm"
STM_METHODS = ("stm-tikhonov", "stm-loraks")
DEFAULT_ORDERING = ("zerofill", "datashare", BEST_STM)
COLUMNS = ["kind", "metric", "a", "b", "delta"]


class CompareResult(NamedTuple):
    """对比结果：完整表格、有变化的指标行、排序检查及是否全部满足"""

    table: pd.DataFrame
    diff: pd.DataFrame
    checks: List[Dict[str, Any]]
    ok: bool


def _load(report: Union[Report, str, Path]) -> Report:
    return report if isinstance(report, dict) else read_report(report)


def _flatten(report: Report) -> Dict[str, Dict[str, float]]:
    """报告 → {kind: {metric: value}}"""
    rows: Dict[str, Dict[str, float]] = {"nrmse": {}, "npr": {}, "timing": {}}
    for method, entry in report.get("recon", {}).items():
        rows["nrmse"][method] = float(entry["nrmse"])
    for model, curve in report.get("metrics", {}).get("npr", {}).items():
        for L, value in curve.items():
            rows["npr"][f"{model}@L={L}"] = float(value)
    for stage, seconds in report.get("timings", {}).items():
        rows["timing"][stage] = float(seconds)
    return rows


def _check_same_phantom(a: Report, b: Report):
    pa, pb = a.get("phantom", {}), b.get("phantom", {})
    for key in ("fingerprint", "mask_fingerprint"):
        if pa.get(key) is None or pa.get(key) != pb.get(key):
            raise ValidationError(f"两份报告来自不同的体模或采样模板 ({key}: {pa.get(key)} ≠ {pb.get(key)})")


def _nrmse_union(a: Report, b: Report) -> Dict[str, float]:
    """两份报告方法的并集；同名方法以 b 为准"""
    values = {m: float(e["nrmse"]) for m, e in a.get("recon", {}).items()}
    values.update({m: float(e["nrmse"]) for m, e in b.get("recon", {}).items()})
    stm = [values[m] for m in STM_METHODS if m in values]
    if stm:
        values[BEST_STM] = min(stm)
    return values


def check_ordering(values: Dict[str, float], ordering: Sequence[str] = DEFAULT_ORDERING) -> List[Dict[str, Any]]:
    """
    检查 NRMSE 严格递减的排序约束；缺失的方法跳过，相邻的已有方法两两比较

    Args:
        values: 方法 → NRMSE
        ordering: 期望从大到小的方法序列

    Returns:
        每对比较的检查结果
    """
    present = [m for m in ordering if m in values]
    checks = []
    for left, right in zip(present, present[1:]):
        holds = values[left] > values[right]
        checks.append({
            "constraint": f"{left} > {right}",
            "left": values[left],
            "right": values[right],
            "holds": bool(holds),
        })
        if holds:
            log_manager.ok(logger, "排序满足: %s", checks[-1]["constraint"])
        else:
            logger.warning("排序不满足: %s (%.4f ≤ %.4f)", checks[-1]["constraint"], values[left], values[right])
    return checks


def export_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """导出为 CSV 或 XLSX（按扩展名）"""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        table.to_csv(path, index=False)
    elif suffix == ".xlsx":
        table.to_excel(path, index=False, engine="openpyxl")
    else:
        raise ValidationError(f"不支持的导出格式: {suffix}（仅支持 .csv / .xlsx）")
    logger.info("对比表已导出: %s", path)
    return path


def compare(report_a: Union[Report, str, Path], report_b: Union[Report, str, Path],
            ordering: Sequence[str] = DEFAULT_ORDERING,
            export: Optional[Union[str, Path]] = None) -> CompareResult:
    """
    对比两份报告

    Args:
        report_a, report_b: 报告或其 JSON 路径
        ordering: NRMSE 排序约束（从大到小）
        export: 可选的导出路径（.csv / .xlsx）

    Returns:
        CompareResult；diff 不含耗时行（耗时每次运行都不同）
    """
    a, b = _load(report_a), _load(report_b)
    _check_same_phantom(a, b)

    fa, fb = _flatten(a), _flatten(b)
    records = []
    for kind in ("nrmse", "npr", "timing"):
        for metric in sorted(set(fa[kind]) | set(fb[kind])):
            va, vb = fa[kind].get(metric), fb[kind].get(metric)
            delta = None if va is None or vb is None else vb - va
            records.append({"kind": kind, "metric": metric, "a": va, "b": vb, "delta": delta})
    table = pd.DataFrame.from_records(records, columns=COLUMNS)

    changed = table["delta"].isna() | (table["delta"].fillna(0.0) != 0.0)
    diff = table[(table["kind"] != "timing") & changed].reset_index(drop=True)

    checks = check_ordering(_nrmse_union(a, b), ordering)
    if export is not None:
        export_table(table, export)
    return CompareResult(table, diff, checks, all(c["holds"] for c in checks))
