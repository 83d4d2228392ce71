"""Large-Bond-number behaviour: first-order slope in 1/Bo and Bond sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .analytic import cylinder_dispersion
from .assembly import OperatorSet, parse_bond
from .eigensolve import SloshingMode, Spectrum, reduced_pencil, solve_reduced
from .errors import ModeTrackingFailure, NotSimple

__all__ = [
    "FDResult",
    "PerturbationReport",
    "SweepTable",
    "bond_sweep",
    "dispersion_slope_fd",
    "perturbation_report",
    "richardson",
    "simple_modes",
    "slope_fd",
    "slope_formula",
    "track",
]

SIMPLE_GAP = 1e-6
TRACKING_MIN = 0.9
DEFAULT_EPS = (1e-2, 1e-3, 1e-4)


def _gap(omegas, j):
    others = np.delete(np.asarray(omegas), j)
    if len(others) == 0:
        return math.inf
    return float(np.min(np.abs(others - omegas[j])) / omegas[j])


def simple_modes(spectrum: Spectrum, gap=SIMPLE_GAP):
    """Indices of modes separated from every other computed mode by ``gap`` (relative).

    The last mode is excluded since its upper neighbour was not computed.
    """
    om = spectrum.omegas
    return [j for j in range(len(om) - 1) if _gap(om, j) > gap]


def slope_formula(mode0: SloshingMode, ops: OperatorSet, spectrum: Spectrum | None = None,
                  index: int | None = None) -> float:
    """d(omega)/d(1/Bo) at infinite Bond number for a simple mode.

    ``(omega/2) |grad_F phi|^2 / |phi|^2`` with both norms over the free
    surface.  When ``spectrum`` and ``index`` are given the mode is first
    checked to be simple.
    """
    if not math.isinf(ops.Bo):
        raise ValueError("the reference mode must be computed with Bo = inf")
    if spectrum is not None:
        j = index if index is not None else int(np.argmin(np.abs(spectrum.omegas - mode0.omega)))
        if _gap(spectrum.omegas, j) <= SIMPLE_GAP:
            raise NotSimple(f"mode {j} (omega={mode0.omega:.6g}) is not simple")
    phi = mode0.phi[ops.trace]
    grad = float(phi @ (ops.K_F @ phi))
    l2 = float(phi @ (ops.M_F @ phi))
    return 0.5 * mode0.omega * grad / l2


@dataclass
class FDResult:
    slope: float
    order: float
    epsilons: list
    differences: list


def richardson(omega_of_eps, epsilons, scheme="central") -> FDResult:
    """Extrapolated finite-difference slope of ``omega`` at ``eps = 0``.

    ``scheme="central"`` uses ``(w(e) - w(-e)) / 2e`` (error series in e^2),
    ``scheme="forward"`` uses ``(w(e) - w(0)) / e`` (error series in e).
    ``epsilons`` must be positive and strictly decreasing.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 2:
        raise ValueError("need at least two epsilon values")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilon values must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon values must be strictly decreasing")
    if scheme == "central":
        diffs = [(omega_of_eps(e) - omega_of_eps(-e)) / (2 * e) for e in eps]
        step = 2
    elif scheme == "forward":
        w0 = omega_of_eps(0.0)
        diffs = [(omega_of_eps(e) - w0) / e for e in eps]
        step = 1
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    # Neville's scheme: polynomial extrapolation to zero in the variable e**step
    table = list(diffs)
    for level in range(1, len(eps)):
        table = [
            (table[i + 1] * (eps[i] / eps[i + level]) ** step - table[i])
            / ((eps[i] / eps[i + level]) ** step - 1.0)
            for i in range(len(table) - 1)
        ]
    order = float(step)
    if len(diffs) >= 3 and diffs[1] != diffs[2] and diffs[0] != diffs[1]:
        r = eps[1] / eps[2]
        order = math.log(abs(diffs[0] - diffs[1]) / abs(diffs[1] - diffs[2])) / math.log(r)
    return FDResult(table[0], order, eps, diffs)


def dispersion_slope_fd(n, m, h_over_a, epsilons=(1e-3, 5e-4)) -> FDResult:
    """Finite-difference slope of the closed-form cylinder frequency."""
    lam = cylinder_dispersion(n, m, h_over_a).lambda_sq
    z = cylinder_dispersion(n, m, h_over_a).z_nm
    return richardson(lambda e: math.sqrt(lam * (1.0 + e * z * z)), epsilons, "central")


def _ops_at_epsilon(ops: OperatorSet, eps):
    if eps == 0:
        return ops.with_bond(math.inf)
    # negative epsilon is only used internally for central differences
    return OperatorSet(ops.K_D, ops.M_F, ops.K_F, ops.trace, 1.0 / eps, ops.mesh, ops.shared)


def _m_norm(ops, v):
    return math.sqrt(float(v @ (ops.M_F @ v)))


def track(reference: SloshingMode, spectrum: Spectrum, ops: OperatorSet, cluster_tol=1e-6):
    """Find the mode of ``spectrum`` continuing ``reference``.

    Candidates are grouped into clusters of (numerically) equal frequency and
    the overlap is the M_F-norm of the projection of ``reference.xi`` onto the
    cluster, so degenerate pairs are tracked as a subspace.
    Returns ``(index, overlap)``.
    """
    om = spectrum.omegas
    ref = reference.xi / _m_norm(ops, reference.xi)
    best, best_ov = -1, -1.0
    for j in range(len(om)):
        members = [i for i in range(len(om)) if abs(om[i] - om[j]) <= cluster_tol * om[j]]
        V = np.column_stack([spectrum[i].xi for i in members])
        MV = ops.M_F @ V
        G = V.T @ MV
        b = MV.T @ ref
        ov = math.sqrt(max(float(b @ np.linalg.solve(G, b)), 0.0))
        if ov > best_ov + 1e-12:
            best, best_ov = j, ov
    return best, min(best_ov, 1.0)


def _tracked_omega(ops, reference, eps):
    # Full pencil: for eps < 0 spurious small positive omega^2 appear near the
    # sign change of M + eps K_F, so the mode is picked by overlap, not index.
    B, T, _, Z = reduced_pencil(_ops_at_epsilon(ops, eps))
    w2, Y = sla.eigh(B, T)
    Xi = Z @ Y
    MXi = ops.M_F @ Xi
    ref = reference.xi / _m_norm(ops, reference.xi)
    ov = np.abs(MXi.T @ ref) / np.sqrt(np.einsum("ij,ij->j", Xi, MXi))
    ov[w2 <= 0] = -1.0
    j = int(np.argmax(ov))
    if ov[j] < TRACKING_MIN:
        raise ModeTrackingFailure(f"overlap {ov[j]:.3f} < {TRACKING_MIN} at epsilon={eps:g}")
    return math.sqrt(w2[j])


def slope_fd(ops: OperatorSet, mode_index: int, epsilons=DEFAULT_EPS, spectrum: Spectrum | None = None) -> FDResult:
    """Finite-difference slope of the FEM frequency of mode ``mode_index``.

    The mode is followed across epsilon by maximal overlap with the Bo = inf
    free-surface shape rather than by its position in the spectrum.  Only
    positive epsilon (physical Bond numbers) is sampled: for negative epsilon
    ``M + eps K_F`` loses definiteness on fine meshes and spurious modes cross
    the tracked one.
    """
    eps = list(epsilons)
    if any(e <= 0 for e in eps):
        raise ValueError("epsilon values must be positive")
    base = ops.with_bond(math.inf)
    if spectrum is None:
        spectrum = solve_reduced(base, mode_index + 1)
    reference = spectrum[mode_index]
    return richardson(
        lambda e: reference.omega if e == 0 else _tracked_omega(base, reference, e), eps, "forward")


@dataclass
class PerturbationReport:
    mode_index: int
    omega0: float
    slope_formula: float
    slope_fd: float
    epsilon_values: list
    rel_error: float
    fd_order: float = float("nan")


def perturbation_report(ops: OperatorSet, modes: int, epsilons=DEFAULT_EPS, include=None):
    """Formula vs finite-difference slope for the simple modes among the first ``modes``."""
    base = ops.with_bond(math.inf)
    spectrum = solve_reduced(base, modes + 1)
    indices = simple_modes(spectrum) if include is None else list(include)
    out = []
    for j in indices:
        if j >= modes:
            continue
        formula = slope_formula(spectrum[j], base, spectrum, j)
        fd = slope_fd(base, j, epsilons, spectrum=spectrum)
        out.append(PerturbationReport(j, spectrum[j].omega, formula, fd.slope, list(fd.epsilons),
                                      abs(formula - fd.slope) / abs(fd.slope), fd.order))
    return out


@dataclass
class SweepTable:
    bonds: list
    omega: np.ndarray  # (len(bonds), k)
    overlap: np.ndarray
    monotone: bool
    reference: Spectrum = field(repr=False, default=None)

    def rows(self):
        for i, Bo in enumerate(self.bonds):
            for j in range(self.omega.shape[1]):
                yield Bo, j, float(self.omega[i, j]), float(self.overlap[i, j])


def bond_sweep(ops: OperatorSet, bonds, k: int, extra: int = 2) -> SweepTable:
    """Frequencies of the first ``k`` Bo = inf modes followed across ``bonds``.

    ``monotone`` is true when every tracked frequency decreases (weakly) as Bo
    grows and stays above its zero-surface-tension value.
    """

    bonds = [parse_bond(b) for b in bonds]
    reference = solve_reduced(ops.with_bond(math.inf), k)
    omega = np.empty((len(bonds), k))
    overlap = np.empty((len(bonds), k))
    for i, Bo in enumerate(bonds):
        spec = reference if math.isinf(Bo) else solve_reduced(ops.with_bond(Bo), k + extra)
        for j in range(k):
            if math.isinf(Bo):
                omega[i, j], overlap[i, j] = reference[j].omega, 1.0
                continue
            idx, ov = track(reference[j], spec, ops)
            if ov < TRACKING_MIN:
                raise ModeTrackingFailure(f"mode {j}: overlap {ov:.3f} at Bo={Bo:g}")
            omega[i, j], overlap[i, j] = spec[idx].omega, ov
    order = np.argsort(bonds, kind="stable")
    w = omega[order]
    tol = 1e-10 * np.abs(w).max()
    monotone = bool(np.all(np.diff(w, axis=0) <= tol) and np.all(w >= reference.omegas[None, :] - tol))
    return SweepTable(bonds, omega, overlap, monotone, reference)
