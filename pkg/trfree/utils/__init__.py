"""Utilities package for the T^(r)-free process laboratory.

This package contains seed handling, formatting helpers and decorators.
"""
