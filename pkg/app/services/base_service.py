"""Base service class with common functionality."""
import logging
from typing import Any, Optional

import numpy as np

from app.core.logging_config import get_logger


class BaseService:
    """
    Base class for all lab services.

    Provides a seeded random generator and a module logger.
    """

    def __init__(self, seed: Optional[int] = None):
        """
        Initialize the base service.

        Args:
            seed: Optional seed for the service's random generator.
        """
        self._seed = seed
        self._rng: Optional[np.random.Generator] = None
        self._logger = get_logger(self.__class__.__module__)

    @property
    def rng(self) -> np.random.Generator:
        """Seeded generator; created on first use."""
        if self._rng is None:
            if self._seed is None:
                raise RuntimeError("Random generator requested without a seed")
            self._rng = np.random.default_rng(self._seed)
        return self._rng

    @property
    def logger(self) -> logging.Logger:
        """Get the logger instance."""
        return self._logger

    def _log_operation(self, operation: str, **kwargs: Any) -> None:
        """
        Log an operation with optional parameters.

        Args:
            operation: Name of the operation.
            **kwargs: Additional parameters to log.
        """
        params = ", ".join(f"{k}={v}" for k, v in kwargs.items() if v is not None)
        self._logger.debug(f"Starting {operation}" + (f" ({params})" if params else ""))
