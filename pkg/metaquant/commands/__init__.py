"""
Define command plugins
"""
