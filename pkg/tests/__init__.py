"""
Test package for model-hub-cli.
"""
