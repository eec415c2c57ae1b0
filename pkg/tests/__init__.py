"""
Test package for hadamard-nnls.
"""
