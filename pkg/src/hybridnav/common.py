import enum
import math

import numpy as np

GRAVITY = 9.81


class Mode(str, enum.Enum):
    TERRESTRIAL = "terrestrial"
    AERIAL = "aerial"


def wrap_angle(a):
    """Wrap to (-pi, pi]. Works on scalars and arrays."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w
