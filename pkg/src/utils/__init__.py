"""
通用工具：日志、异常、FFT、并行与配置读取
"""
