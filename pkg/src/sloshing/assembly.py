"""P1 finite-element operators for the sloshing energies.

Discrete energies::

    D_h[u]  = 1/2 u^T K_D u
    S_h[xi] = 1/2 xi^T (M_F + K_F / Bo) xi
    <phi, xi>_F = (R phi)^T M_F xi

where ``R`` is the trace (restriction of volume nodes to surface nodes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElement, DimensionMismatch
from .geometry import MeshPair

__all__ = [
    "MeanProjector",
    "OperatorSet",
    "assemble",
    "mass_matrix_2d",
    "parse_bond",
    "stiffness_matrix_2d",
    "stiffness_matrix_3d",
    "surface_gradient_energy",
    "mean_projector",
]


def parse_bond(value):
    """Bond number from a float or the literal ``"inf"``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        value = float(value)
    value = float(value)
    if not value > 0:
        raise ValueError(f"Bond number must be positive, got {value}")
    return value


def _p1_gradients(coords):
    """Gradients of the barycentric basis functions.

    ``coords`` has shape (n_el, d+1, d).  Returns (grads, measure) with grads of
    shape (n_el, d+1, d) and the signed element measure.
    """
    n_el, nv, d = coords.shape
    jac = (coords[:, 1:, :] - coords[:, :1, :]).transpose(0, 2, 1)  # (n, d, d)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise DegenerateElement(f"{int(np.sum(det <= 0))} elements with non-positive Jacobian")
    inv = np.linalg.inv(jac)  # rows are gradients of lambda_1..lambda_d
    g = np.empty((n_el, nv, d))
    g[:, 1:, :] = inv
    g[:, 0, :] = -inv.sum(axis=1)
    return g, det / math.factorial(d)


def _scatter(elements, local, n):
    nv = elements.shape[1]
    rows = np.repeat(elements, nv, axis=1).ravel()
    cols = np.tile(elements, (1, nv)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A = 0.5 * (A + A.T)
    A.sum_duplicates()
    A.eliminate_zeros()
    return A.tocsr()


def stiffness_matrix_3d(nodes, tets):
    g, vol = _p1_gradients(nodes[tets])
    local = vol[:, None, None] * np.einsum("eik,ejk->eij", g, g)
    return _scatter(tets, local, len(nodes))


def stiffness_matrix_2d(nodes, tris):
    g, area = _p1_gradients(nodes[tris])
    local = area[:, None, None] * np.einsum("eik,ejk->eij", g, g)
    return _scatter(tris, local, len(nodes))


def mass_matrix_2d(nodes, tris):
    _, area = _p1_gradients(nodes[tris])
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    return _scatter(tris, local, len(nodes))


@dataclass
class OperatorSet:
    """Assembled operators on one mesh pair at one Bond number."""

    K_D: sp.csr_matrix
    M_F: sp.csr_matrix
    K_F: sp.csr_matrix
    trace: np.ndarray
    Bo: float
    mesh: MeshPair
    # Bo-independent factorisations, shared by with_bond copies
    shared: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_volume(self):
        return self.K_D.shape[0]

    @property
    def n_surface(self):
        return self.M_F.shape[0]

    @property
    def epsilon(self):
        return 0.0 if math.isinf(self.Bo) else 1.0 / self.Bo

    @cached_property
    def surface_operator(self):
        """``M_F + K_F / Bo``; the capillary term is absent when Bo is infinite."""
        if math.isinf(self.Bo):
            return self.M_F.copy()
        return (self.M_F + self.K_F / self.Bo).tocsr()

    @cached_property
    def mean_weights(self):
        """Row vector ``1^T M_F``."""
        return np.asarray(self.M_F.sum(axis=0)).ravel()

    @cached_property
    def surface_area(self):
        return float(self.mean_weights.sum())

    @cached_property
    def trace_matrix(self):
        ns, nv = self.n_surface, self.n_volume
        return sp.csr_matrix((np.ones(ns), (np.arange(ns), self.trace)), shape=(ns, nv))

    @cached_property
    def coupling_matrix(self):
        """``C = M_F R`` (surface x volume)."""
        return (self.M_F @ self.trace_matrix).tocsr()

    def with_bond(self, Bo):
        """Same mesh and matrices, different Bond number."""
        return OperatorSet(self.K_D, self.M_F, self.K_F, self.trace, parse_bond(Bo), self.mesh, self.shared)

    # energies
    def dirichlet_energy(self, phi):
        return 0.5 * float(phi @ (self.K_D @ phi))

    def surface_energy(self, xi):
        return 0.5 * float(xi @ (self.surface_operator @ xi))

    def coupling(self, phi, xi):
        return float(phi[self.trace] @ (self.M_F @ xi))


def assemble(mesh: MeshPair, Bo) -> OperatorSet:
    """Assemble ``K_D``, ``M_F`` and ``K_F`` with exact P1 quadrature."""
    vol, surf = mesh.volume, mesh.surface
    K_D = stiffness_matrix_3d(vol.nodes, vol.tets)
    M_F = mass_matrix_2d(surf.nodes, surf.triangles)
    K_F = stiffness_matrix_2d(surf.nodes, surf.triangles)
    trace = np.asarray(vol.surface_trace, dtype=np.int64)
    if not np.array_equal(vol.nodes[trace, :2], surf.nodes):
        raise DimensionMismatch("surface trace does not reproduce the surface nodes")
    return OperatorSet(K_D, M_F, K_F, trace, parse_bond(Bo), mesh)


def surface_gradient_energy(xi, ops: OperatorSet) -> float:
    """``xi^T K_F xi``, the squared L2 norm of the surface gradient."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (ops.n_surface,):
        raise DimensionMismatch(f"expected {ops.n_surface} surface values, got {xi.shape}")
    return float(xi @ (ops.K_F @ xi))


class MeanProjector:
    """``M_F``-orthogonal projector onto zero-mean surface vectors.

    ``P v = v - (1^T M_F v / |F|) 1``.
    """

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)
        self.area = float(self.weights.sum())

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        # broadcasts over columns when v is (n, k)
        return v - (self.weights @ v) / self.area

    def mean(self, v):
        return (self.weights @ v) / self.area

    def matrix(self):
        n = len(self.weights)
        return np.eye(n) - np.outer(np.ones(n), self.weights) / self.area


def mean_projector(ops: OperatorSet) -> MeanProjector:
    return MeanProjector(ops.mean_weights)
