"""
stm-recon - 时空图（STM）动态 MRI 重建工具

由自校准 (k,t)-space 数据计算逐体素时间基，并重建欠采样动态序列
"""

__version__ = "0.1.0"
