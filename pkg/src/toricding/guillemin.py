"""Guillemin's canonical symplectic potential of a Delzant polytope.

With ``delta_F(x) = <n_F, x> + 1`` the potential is ``1/2 sum_F delta_F log delta_F``. The version used here
subtracts its tangent plane at the origin, so it is normalized: non-negative with value and gradient zero
at 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate
from scipy.special import xlogy

from toricding.constants import GUILLEMIN_RTOL
from toricding.utils import time_it

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from toricding.polytope import ReflexivePolytope


def _collapsed_to_simplex(z: Sequence[float]) -> tuple[NDArray[np.float64], float]:
    """Map the unit cube onto the standard simplex, returning the point and the Jacobian."""
    m = len(z)
    t = np.empty(m)
    remaining, jacobian = 1.0, 1.0
    for i, zi in enumerate(z):
        t[i] = remaining * zi
        jacobian *= remaining
        remaining *= 1.0 - zi
    return t, jacobian


@dataclass(frozen=True)
class GuilleminPotential:
    polytope: ReflexivePolytope

    def _deltas(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.maximum(x @ self.polytope.normal_array.T + 1.0, 0.0)

    def value(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        deltas = self._deltas(x)
        tangent = x @ self.polytope.normal_array.sum(axis=0)
        return 0.5 * (xlogy(deltas, deltas).sum(axis=1) - tangent)

    def gradient(self, x: ArrayLike) -> NDArray[np.float64]:
        """Gradient ``1/2 sum_F n_F log delta_F``, only defined in the interior."""
        return 0.5 * np.log(self._deltas(x)) @ self.polytope.normal_array

    def hessian(self, x: ArrayLike) -> NDArray[np.float64]:
        normals = self.polytope.normal_array
        inverse = 1.0 / self._deltas(x)
        return 0.5 * np.einsum("gf,fi,fj->gij", inverse, normals, normals)

    @time_it
    def integrate(self, a: float = 1.0, b: Sequence[float] | None = None) -> float:
        """Integral of the potential times ``a + <b, x>`` over the polytope by adaptive quadrature.

        Each cone over a boundary simplex is parametrized by its depth ``s = 1 - tau**2`` and collapsed
        coordinates on the boundary simplex, which removes the ``delta log delta`` layer at the facet.
        """
        b = np.zeros(self.polytope.dim) if b is None else np.asarray(b, dtype=float)
        dim = self.polytope.dim
        points = np.array(self.polytope.triangulation_points, dtype=float)
        total = 0.0
        for cell in self.polytope.triangulation:
            base = points[list(cell[1:])]
            frame = np.vstack([base[0], base[1:] - base[0]])
            volume_factor = abs(np.linalg.det(frame))

            def integrand(tau: float, *z: float, base: NDArray = base, scale: float = volume_factor) -> float:
                t, jacobian = _collapsed_to_simplex(z)
                y = base[0] + t @ (base[1:] - base[0])
                s = 1.0 - tau * tau
                x = s * y
                weight_value = a + float(x @ b)
                return float(self.value(x)[0]) * weight_value * s ** (dim - 1) * scale * 2.0 * tau * jacobian

            value, _ = integrate.nquad(
                integrand, [[0.0, 1.0]] * dim, opts={"epsrel": GUILLEMIN_RTOL, "epsabs": 1e-14, "limit": 200}
            )
            total += value
        return total
