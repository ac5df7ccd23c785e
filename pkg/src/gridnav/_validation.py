"""Input validation helpers shared by the public operations."""

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def check_raster(img, channels=None, name="img"):
    """Return ``img`` as a C-contiguous uint8 array of shape (h, w) or (h, w, 3)."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise InvalidInputError(f"{name} must be uint8, got {arr.dtype}")
    if arr.ndim == 2:
        nch = 1
    elif arr.ndim == 3 and arr.shape[2] in (1, 3):
        nch = arr.shape[2]
        if nch == 1:
            arr = arr[:, :, 0]
    else:
        raise InvalidInputError(f"{name} must have shape (h, w) or (h, w, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be at least 1x1")
    if channels is not None and nch != channels:
        raise InvalidInputError(f"{name} must have {channels} channel(s), got {nch}")
    return np.ascontiguousarray(arr)


def check_mask(mask, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        arr = arr != 0
    return np.ascontiguousarray(arr)


def check_positive(value, name, strict=True):
    v = float(value)
    if not np.isfinite(v) or (v <= 0 if strict else v < 0):
        bound = "> 0" if strict else ">= 0"
        raise InvalidInputError(f"{name} must be {bound}, got {value!r}")
    return v
