"""
OHSL - Source Package
Online hashing with asymmetric similarity learning
"""
