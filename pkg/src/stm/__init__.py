"""
时空图：Gram 场、正交迭代、插值与灵敏度估计
"""
