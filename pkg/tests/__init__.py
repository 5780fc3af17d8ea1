"""
TransforMAP Toolkit Test Suite
"""
