"""SPARKLING MRI: Base"""
import logging


class Base:
    """Base class providing a module scoped logger"""

    def __init__(self) -> None:
        """Initialize"""
        self._logger = logging.getLogger(self.__class__.__module__)
