"""
核心数据模型与数据集读写
"""
