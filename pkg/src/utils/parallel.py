"""
并行工具
工作线程数来自 --workers 或环境变量 STMRECON_WORKERS
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List

from src.utils.errors import ValidationError

ENV_WORKERS = "STMRECON_WORKERS"


def resolve_workers(workers: int = None) -> int:
    """
    确定工作线程数

    Args:
        workers: 显式指定的线程数，None表示读取环境变量

    Returns:
        正整数线程数
    """
    if workers is None:
        env_value = os.environ.get(ENV_WORKERS)
        if env_value:
            try:
                workers = int(env_value)
            except ValueError:
                raise ValidationError(f"环境变量 {ENV_WORKERS}={env_value!r} 不是整数")
        else:
            workers = min(os.cpu_count() or 1, 4)
    return max(1, int(workers))


def chunk_ranges(total: int, chunk: int) -> List[slice]:
    """把 [0, total) 切成固定大小的连续块"""
    chunk = max(1, int(chunk))
    return [slice(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def map_chunks(func: Callable[[slice], None], chunks: Iterable[slice], workers: int = None):
    """在线程池中对各块执行 func（各块写入互不重叠的输出区域）"""
    chunks = list(chunks)
    workers = resolve_workers(workers)
    if workers == 1 or len(chunks) <= 1:
        for part in chunks:
            func(part)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(func, chunks):
            pass
