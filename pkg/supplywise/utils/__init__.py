"""
Utility helpers
"""

from supplywise.utils.io import atomic_write, read_csv, write_csv

__all__ = ["atomic_write", "read_csv", "write_csv"]
