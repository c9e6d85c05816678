"""
Core Module

Source and channel models, security analysis and run configuration.
"""
