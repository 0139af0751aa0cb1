"""
metaquant - hypernetwork gradient quantization for quantization-aware training
"""

__version__ = "0.1.0"
