"""Discrete sloshing eigenproblem, solved two independent ways.

Weak Euler-Lagrange system on the zero-mean subspace::

    K_D phi       = omega C^T xi
    (M_F + K_F/Bo) xi = omega C phi,        C = M_F R

``solve_coupled`` condenses the interior volume unknowns onto the free
surface (a Dirichlet-to-Neumann Schur complement) and works with the
first-order block pencil, whose eigenvalues come in +-omega pairs.  Higher
modes are found one at a time on the subspace cross-orthogonal to the
lower ones.  ``solve_reduced`` eliminates the potential with Neumann
solves instead and works with the omega^2 pencil ``B xi = omega^2 T xi``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import OperatorSet
from .errors import IncompatibleData, SingularOperator, SolverFailure

__all__ = [
    "NeumannSolver",
    "SloshingMode",
    "Spectrum",
    "mode_residuals",
    "neumann_solve",
    "neumann_solver",
    "normalize_mode",
    "ntd_matrix",
    "reduced_pencil",
    "solve",
    "solve_coupled",
    "solve_reduced",
    "zero_mean_basis",
]

COMPAT_TOL = 1e-10
RESIDUAL_TOL = 1e-10


def worker_count():
    """Worker threads for batched Neumann solves, capped by ``SLOSH_THREADS``."""
    try:
        return max(1, int(os.environ.get("SLOSH_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SloshingMode:
    omega: float
    phi: np.ndarray
    xi: np.ndarray

    @property
    def omega_squared(self):
        return self.omega**2


@dataclass
class Spectrum:
    modes: list
    Bo: float
    fingerprint: str
    formulation: str = ""

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    @property
    def omegas(self):
        return np.array([m.omega for m in self.modes])


def zero_mean_basis(weights):
    """Orthonormal basis (columns) of ``{v : weights . v = 0}``.

    Built from a Householder reflector mapping ``weights`` onto the first axis,
    so the result is deterministic and costs O(n^2).
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    u = w / np.linalg.norm(w)
    u[0] += 1.0 if u[0] >= 0 else -1.0
    u /= np.linalg.norm(u)
    H = np.eye(n) - 2.0 * np.outer(u, u)
    return H[:, 1:]


def normalize_mode(omega, phi, xi, ops: OperatorSet) -> SloshingMode:
    """Scale to unit coupling and make the largest |xi| entry positive."""
    c = ops.coupling(phi, xi)
    if c < 0:
        phi = -phi
        c = -c
    if c == 0:
        raise SolverFailure("eigenvector with zero coupling")
    s = 1.0 / math.sqrt(c)
    phi, xi = phi * s, xi * s
    if xi[np.argmax(np.abs(xi))] < 0:
        phi, xi = -phi, -xi
    return SloshingMode(float(omega), phi, xi)


# ---------------------------------------------------------------- Neumann
class NeumannSolver:
    """Factorisation of ``K_D`` with one node pinned.

    For compatible data the pinned solve reproduces the full system exactly
    (the dropped equation is implied); the constant is then fixed by asking
    for zero mean over the free surface.
    """

    def __init__(self, ops: OperatorSet):
        self.ops = ops
        K = ops.K_D.tocsc()
        try:
            self._lu = spla.splu(K[1:, 1:].tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularOperator(f"volume stiffness factorisation failed: {exc}") from exc

    def solve_rhs(self, rhs):
        ops = self.ops
        rhs = np.asarray(rhs, dtype=float)
        out = np.zeros(rhs.shape)
        workers = worker_count()
        if rhs.ndim == 2 and workers > 1 and rhs.shape[1] > workers:
            chunks = np.array_split(np.arange(rhs.shape[1]), workers)
            with ThreadPoolExecutor(workers) as pool:
                parts = pool.map(lambda c: self._lu.solve(np.ascontiguousarray(rhs[1:, c])), chunks)
                for c, part in zip(chunks, parts):
                    out[1:, c] = part
        else:
            out[1:] = self._lu.solve(np.ascontiguousarray(rhs[1:]))
        mean = ops.mean_weights @ out[ops.trace] / ops.surface_area
        return out - mean


def neumann_solver(ops: OperatorSet) -> NeumannSolver:
    cache = ops.shared
    if "neumann" not in cache:
        cache["neumann"] = NeumannSolver(ops)
    return cache["neumann"]


def neumann_solve(ops: OperatorSet, g) -> np.ndarray:
    """Potential with ``K_D phi = C^T g`` and zero surface mean.

    ``g`` may be a vector or a matrix of column vectors.
    """
    g = np.asarray(g, dtype=float)
    w = ops.mean_weights
    mean = w @ g
    scale = np.abs(w) @ np.abs(g)
    if np.any(np.abs(mean) > COMPAT_TOL * np.maximum(scale, 1e-300)):
        raise IncompatibleData("Neumann data must have zero mean over the free surface")
    rhs = ops.coupling_matrix.T @ g
    if not np.any(rhs):
        return np.zeros((ops.n_volume,) + g.shape[1:])
    phi = neumann_solver(ops).solve_rhs(rhs)
    res = ops.K_D @ phi - rhs
    rn = np.linalg.norm(res, axis=0)
    bn = np.linalg.norm(rhs, axis=0)
    if np.any(rn > RESIDUAL_TOL * np.maximum(bn, 1e-300)):
        raise SolverFailure(f"Neumann solve residual {np.max(rn / np.maximum(bn, 1e-300)):.2e}")
    return phi


def ntd_matrix(ops: OperatorSet, basis=None):
    """Reduced kinetic-energy matrix ``Z^T T Z`` and the potentials ``N C^T Z``."""
    Z = zero_mean_basis(ops.mean_weights) if basis is None else basis
    potentials = neumann_solve(ops, Z)
    T = (ops.M_F @ Z).T @ potentials[ops.trace]
    return 0.5 * (T + T.T), potentials, Z


# ---------------------------------------------------------------- solvers
def _check_k(k, available):
    if k < 1:
        raise ValueError("mode count must be >= 1")
    if k > available:
        raise SolverFailure(f"requested {k} modes but only {available} exist on this mesh")


def reduced_pencil(ops: OperatorSet):
    """``(B_z, T_z, potentials, Z)`` of the reduced pencil on the zero-mean basis ``Z``."""
    cache = ops.shared
    if "ntd" not in cache:
        cache["ntd"] = ntd_matrix(ops)
    T, potentials, Z = cache["ntd"]
    B = Z.T @ (ops.surface_operator @ Z)
    return 0.5 * (B + B.T), T, potentials, Z


def solve_reduced(ops: OperatorSet, k: int) -> Spectrum:
    """Surface-only ``omega^2`` pencil via the Neumann-to-Dirichlet map."""
    B, T, potentials, Z = reduced_pencil(ops)
    _check_k(k, T.shape[0])
    try:
        if ops.epsilon >= 0:
            w2, Y = sla.eigh(B, T, subset_by_index=[0, k - 1])
        else:
            w2, Y = sla.eigh(B, T)
    except np.linalg.LinAlgError as exc:
        raise SingularOperator(f"reduced pencil is not definite: {exc}") from exc
    keep = np.flatnonzero(w2 > 0)[:k]
    if len(keep) < k:
        raise SolverFailure("fewer positive eigenvalues than requested")
    modes = []
    for j in keep:
        omega = math.sqrt(w2[j])
        xi = Z @ Y[:, j]
        phi = omega * (potentials @ Y[:, j])
        modes.append(normalize_mode(omega, phi, xi, ops))
    return Spectrum(modes, ops.Bo, ops.mesh.fingerprint(), "reduced")


def _schur(ops: OperatorSet):
    """Dense DtN Schur complement ``S`` on the surface nodes and ``K_ii^-1 K_is``."""
    cache = ops.shared
    if "schur" in cache:
        return cache["schur"]
    K = ops.K_D.tocsr()
    s = ops.trace
    inner = np.setdiff1d(np.arange(ops.n_volume), s)
    K_ss = K[s][:, s].toarray()
    K_is = K[inner][:, s]
    if len(inner):
        try:
            lu = spla.splu(K[inner][:, inner].tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularOperator(f"interior stiffness factorisation failed: {exc}") from exc
        X = lu.solve(np.ascontiguousarray(K_is.toarray()))
        S = K_ss - K_is.T @ X
    else:
        X = np.zeros((0, len(s)))
        S = K_ss
    S = 0.5 * (S + S.T)
    cache["schur"] = (S, X, inner)
    return cache["schur"]


def solve_coupled(ops: OperatorSet, k: int) -> Spectrum:
    """First-order block pencil with sequential cross-orthogonal deflation.

    Unknowns ``u = (phi_F, xi)`` on the surface.  Mode ``m`` maximises
    ``mu = 1/omega`` of ``[0 M; M 0] u = mu blkdiag(S, B) u`` over zero-mean
    pairs with ``<phi, xi_j> = 0 = <xi, phi_j>`` for all lower modes ``j``.
    """
    if ops.epsilon < 0:
        raise SolverFailure("coupled formulation requires Bo > 0")
    S, X, inner = _schur(ops)
    ns = ops.n_surface
    M = ops.M_F.toarray()
    B = ops.surface_operator.toarray()
    Z = zero_mean_basis(ops.mean_weights)
    nz = Z.shape[1]
    _check_k(k, nz)
    W = sla.block_diag(Z, Z)
    A = sla.block_diag(Z.T @ S @ Z, Z.T @ B @ Z)
    MZ = Z.T @ M @ Z
    C = np.zeros((2 * nz, 2 * nz))
    C[:nz, nz:] = MZ
    C[nz:, :nz] = MZ.T
    A = 0.5 * (A + A.T)
    C = 0.5 * (C + C.T)

    found = []  # (omega, phi_F, xi)
    for _ in range(k):
        if found:
            rows = []
            for _, phi_j, xi_j in found:
                rows.append(np.concatenate([M @ xi_j, np.zeros(ns)]))
                rows.append(np.concatenate([np.zeros(ns), M @ phi_j]))
            cons = W.T @ np.array(rows).T
            q, _ = np.linalg.qr(cons, mode="complete")
            Q = q[:, cons.shape[1]:]
            A_r, C_r = Q.T @ A @ Q, Q.T @ C @ Q
            A_r, C_r = 0.5 * (A_r + A_r.T), 0.5 * (C_r + C_r.T)
        else:
            Q = None
            A_r, C_r = A, C
        n_r = A_r.shape[0]
        try:
            mu, y = sla.eigh(C_r, A_r, subset_by_index=[n_r - 1, n_r - 1])
        except np.linalg.LinAlgError as exc:
            raise SingularOperator(f"energy matrix is not positive definite: {exc}") from exc
        if not mu[0] > 0:
            raise SolverFailure("no positive frequency left in the deflated subspace")
        y = y[:, 0] if Q is None else Q @ y[:, 0]
        u = W @ y
        found.append((1.0 / mu[0], u[:ns], u[ns:]))

    modes = []
    for omega, phi_F, xi in found:
        phi = np.empty(ops.n_volume)
        phi[ops.trace] = phi_F
        phi[inner] = -X @ phi_F
        modes.append(normalize_mode(omega, phi, xi, ops))
    return Spectrum(modes, ops.Bo, ops.mesh.fingerprint(), "coupled")


def solve(ops: OperatorSet, k: int, formulation: str = "reduced") -> Spectrum:
    if formulation == "coupled":
        return solve_coupled(ops, k)
    if formulation == "reduced":
        return solve_reduced(ops, k)
    raise ValueError(f"unknown formulation {formulation!r}")


def mode_residuals(mode: SloshingMode, ops: OperatorSet):
    """Relative residuals of the two weak free-surface equations."""
    C = ops.coupling_matrix
    a = ops.K_D @ mode.phi
    b = mode.omega * (C.T @ mode.xi)
    c = ops.surface_operator @ mode.xi
    d = mode.omega * (C @ mode.phi)
    r1 = np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)
    r2 = np.linalg.norm(c - d) / max(np.linalg.norm(c) + np.linalg.norm(d), 1e-300)
    return float(r1), float(r2)
