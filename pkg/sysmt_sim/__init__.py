"""
SySMT模拟器

NB-SMT输出驻留脉动阵列的位精确、周期精确模拟器
"""

__version__ = "0.1.0"
