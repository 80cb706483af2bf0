"""Plotting companion for loopsoup output files.

Reads the documented scan CSV and soup JSON-lines formats; never
recomputes statistics — figures render exactly the file contents.
"""

__version__ = "0.1.0"
