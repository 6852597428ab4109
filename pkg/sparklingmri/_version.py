"""
Provides sparklingmri version information.
"""

# This file is auto-generated! Do not edit!
# Use `python -m incremental.update sparklingmri` to change this file.

from incremental import Version

__version__ = Version("sparklingmri", 1, 0, 0, dev=0)
__all__ = ["__version__"]
