"""
端到端流水线、报告对比与 PDF 报告
"""
