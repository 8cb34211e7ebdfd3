"""
多频带体模、采样模板、线圈灵敏度与采集仿真
"""
