"""Radial meshes on the ball ``B_R(0)`` in ``R^N``.

Integrals are taken per unit solid angle, ``int_0^R g(r) r**(N-1) dr``;
the constant surface area of the unit sphere is dropped everywhere.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MIN_CELLS = 4


@dataclass(frozen=True, eq=False)
class RadialMesh:
    N: int
    R: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < MIN_CELLS + 1:
            raise ParameterError(f"mesh needs at least {MIN_CELLS} cells")
        if nodes[0] != 0.0 or not np.isclose(nodes[-1], self.R):
            raise ParameterError("nodes must run from 0 to R")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def faces(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def dr(self) -> np.ndarray:
        """Face lengths ``r[i+1] - r[i]``."""
        return np.diff(self.nodes)

    @property
    def face_weights(self) -> np.ndarray:
        """``r_f**(N-1)`` at each face."""
        return self.faces ** (self.N - 1)

    @property
    def face_measure(self) -> np.ndarray:
        """``r_f**(N-1) * dr``, the quadrature weight of a face quantity."""
        return self.face_weights * self.dr

    @property
    def dual_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.faces, [self.R]])

    @property
    def weights(self) -> np.ndarray:
        """Node quadrature weights ``r_i**(N-1) * (dual cell length)``.

        The node at the origin carries the exact volume ``r_{1/2}**N / N`` of
        its dual cell, so sources there are not lost when ``N > 1``.
        """
        edges = self.dual_edges
        w = self.nodes ** (self.N - 1) * np.diff(edges)
        w[0] = edges[1] ** self.N / self.N
        return w

    @property
    def volume(self) -> float:
        return self.R ** self.N / self.N

    def integrate(self, g) -> float:
        """Node quadrature of ``int g r**(N-1) dr``."""
        return float(np.sum(self.weights * g))

    def grad(self, u) -> np.ndarray:
        """Face differences ``(u[i+1] - u[i]) / dr``."""
        return np.diff(u) / self.dr

    def divergence(self, z, z_boundary=None) -> np.ndarray:
        """Nodal radial divergence of a face field.

        ``div_i = (r_{i+1/2}**(N-1) z_{i+1/2} - r_{i-1/2}**(N-1) z_{i-1/2}) / weights_i``
        with zero flux through the origin. The last node uses ``z_boundary``
        at ``r = R`` (default: linear extrapolation of the last two faces).
        """
        z = np.asarray(z, dtype=float)
        if z_boundary is None:
            z_boundary = extrapolate_to_boundary(self, z)
        flux = np.concatenate([[0.0], self.face_weights * z, [self.R ** (self.N - 1) * z_boundary]])
        return np.diff(flux) / self.weights


def extrapolate_to_boundary(mesh: RadialMesh, z) -> float:
    """Linear extrapolation of a face field from its last two faces to ``r = R``."""
    rf = mesh.faces
    slope = (z[-1] - z[-2]) / (rf[-1] - rf[-2])
    return float(z[-1] + slope * (mesh.R - rf[-1]))


def assemble_mesh(N: int, R: float, M: int, grading: str = "uniform", stretch: float = 3.0) -> RadialMesh:
    """Build a mesh with ``M`` cells on ``[0, R]``.

    ``geometric`` grading places ``r_i = R (e^{b i/M} - 1) / (e^b - 1)``
    with ``b = stretch``, clustering nodes near the origin.
    """
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    if not R > 0:
        raise ParameterError(f"R must be positive, got {R!r}")
    if int(M) != M or M < MIN_CELLS:
        raise ParameterError(f"M too small: need at least {MIN_CELLS} cells, got {M!r}")
    M = int(M)
    if grading == "uniform":
        nodes = np.linspace(0.0, R, M + 1)
    elif grading in ("geometric", "geometric-toward-0"):
        if not stretch > 0:
            raise ParameterError("stretch must be positive")
        t = np.arange(M + 1) / M
        nodes = R * np.expm1(stretch * t) / np.expm1(stretch)
        nodes[-1] = R
    else:
        raise ParameterError(f"unknown grading {grading!r}")
    return RadialMesh(int(N), float(R), nodes)
