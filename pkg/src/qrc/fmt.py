"""Number formatting shared by every CSV writer (byte-stable output)."""

import numpy as np


def fmt(x) -> str:
    """Positional decimal with 17 significant digits."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    return np.format_float_positional(x, precision=17, unique=False, fractional=False)
