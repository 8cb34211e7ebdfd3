"""
校准：核支撑、Gram 矩阵与零空间投影
"""
