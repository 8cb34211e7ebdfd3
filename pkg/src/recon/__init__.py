"""
重建：前向算子、时间模型、Krylov 求解器与基线方法
"""
