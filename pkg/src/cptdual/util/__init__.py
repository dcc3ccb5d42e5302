"""
Utilities for cptdual
"""
