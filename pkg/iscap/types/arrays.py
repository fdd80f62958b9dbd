"""Array type aliases used across the numerical modules."""

import numpy as np
from numpy.typing import NDArray

ComplexVector = NDArray[np.complex128]
HermitianMatrix = NDArray[np.complex128]
RealArray = NDArray[np.float64]
