"""Input validators for numeric arguments.

This module provides validation functions for probability rows, token
ids, temperatures and shapes so that invalid inputs are rejected before
they reach the compute paths.
"""
from typing import Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import DomainError, InputError, raise_dimension_error

# Probability rows must sum to 1 within this tolerance
PROBABILITY_TOLERANCE = 1e-9


def validate_probability_rows(probs: Union[np.ndarray, Sequence], name: str = "probs") -> np.ndarray:
    """Validate a stack of probability rows over the last axis.

    Args:
        probs: Array of shape [..., V].
        name: Field name used in error details.

    Returns:
        The rows as a float64 array.

    Raises:
        InputError: If any entry is negative or a row does not sum to 1.

    Examples:
        >>> validate_probability_rows([[0.5, 0.5]])
        array([[0.5, 0.5]])
    """
    rows = np.asarray(probs, dtype=np.float64)
    if rows.ndim == 0 or rows.shape[-1] == 0:
        raise InputError(
            message=f"{name} must contain at least one category",
            details={"field": name, "reason": "empty_row"}
        )
    if not np.all(np.isfinite(rows)):
        raise InputError(
            message=f"{name} contains non-finite values",
            details={"field": name, "reason": "non_finite"}
        )
    if np.any(rows < 0):
        raise InputError(
            message=f"{name} contains negative probabilities",
            details={"field": name, "reason": "negative_value"}
        )
    deviation = np.abs(rows.sum(axis=-1) - 1.0)
    if np.any(deviation > PROBABILITY_TOLERANCE):
        raise InputError(
            message=f"{name} rows must sum to 1",
            details={
                "field": name,
                "reason": "not_normalized",
                "max_deviation": float(deviation.max()),
            }
        )
    return rows


def validate_temperature(temperature: Union[float, np.ndarray]) -> np.ndarray:
    """Validate that every temperature is positive and finite.

    Raises:
        DomainError: If any temperature is <= 0 or non-finite.
    """
    t = np.asarray(temperature, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise DomainError(
            message="Temperature must be positive and finite",
            details={"field": "temperature", "reason": "out_of_domain"}
        )
    return t


def validate_token_ids(tokens: Union[np.ndarray, Sequence[int]], vocab_size: int, max_len: int) -> np.ndarray:
    """Validate a batch of token id sequences.

    Args:
        tokens: Integer array of shape [S] or [B, S].
        vocab_size: Exclusive upper bound for ids.
        max_len: Maximum sequence length.

    Returns:
        The ids as an int64 array of shape [B, S].

    Raises:
        InputError: On empty input, ids out of range, or over-long sequences.
    """
    ids = np.asarray(tokens)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise InputError(
            message="Token input must be a non-empty sequence or batch of sequences",
            details={"field": "tokens", "reason": "bad_shape", "shape": list(ids.shape)}
        )
    if not np.issubdtype(ids.dtype, np.integer):
        raise InputError(
            message="Token ids must be integers",
            details={"field": "tokens", "reason": "bad_dtype"}
        )
    if ids.shape[1] > max_len:
        raise InputError(
            message=f"Sequence length {ids.shape[1]} exceeds the context window {max_len}",
            details={"field": "tokens", "reason": "too_long", "max_seq_len": max_len}
        )
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise InputError(
            message="Token id out of range",
            details={
                "field": "tokens",
                "reason": "out_of_range",
                "vocab_size": vocab_size,
                "min": int(ids.min()),
                "max": int(ids.max()),
            }
        )
    return ids.astype(np.int64)


def validate_same_shape(operation: str, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Require two arrays to share a shape.

    Raises:
        DimensionError: If the shapes differ.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise_dimension_error(operation, a.shape, b.shape)
    return a, b


def validate_non_empty(values: Union[np.ndarray, Sequence[float]], field: str) -> np.ndarray:
    """Require at least one value.

    Raises:
        InputError: If ``values`` is empty.
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise InputError(
            message=f"{field} must not be empty",
            details={"field": field, "reason": "empty_value"}
        )
    return arr
