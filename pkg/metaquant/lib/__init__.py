"""
Numerical building blocks: autodiff, quantizers, models, datasets
"""
