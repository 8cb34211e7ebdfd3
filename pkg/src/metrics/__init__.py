"""
质量指标：NPR、NRMSE、特征值图与 t-score
"""
