"""Checks of the proved identities on computed spectra, plus postprocessing.

Every check yields a :class:`CheckResult`, rendered one per line as::

    CHECK <name> <PASS|FAIL> residual=<value> ref=<identity id>
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse.linalg as spla

from .analytic import box_fundamental, cylinder_dispersion
from .assembly import OperatorSet, assemble, parse_bond
from .eigensolve import (SloshingMode, Spectrum, mode_residuals, neumann_solve, solve,
                         solve_coupled, solve_reduced, zero_mean_basis)
from .errors import IdentityViolation, InvalidSpec, NotSimple, SloshError
from .geometry import ContainerSpec, MeshPair, SurfaceMesh, build_mesh, extrude
from .perturbation import DEFAULT_EPS, simple_modes, slope_fd, slope_formula

log = logging.getLogger(__name__)

__all__ = [
    "CheckResult",
    "EnergyReport",
    "HighSpot",
    "ModalTrajectory",
    "MonotonicityVerdict",
    "YoungLaplaceReport",
    "check_energy",
    "check_monotonicity",
    "check_orthogonality",
    "format_report",
    "high_spot",
    "inject_fault",
    "modal_trajectory",
    "report_json",
    "run_checks",
    "young_laplace_check",
]

ENERGY_TOL = 1e-8
ORTHO_TOL = 1e-8
DEGENERATE_GAP = 1e-6
MONOTONE_TOL = 1e-10
STEKLOV_BOND = 1e8
STEKLOV_TOL = 1e-6
FD_TOL = 1e-3
DRIFT_TOL = 1e-8
EQUIVALENCE_TOL = 1e-8
RECIPROCITY_TOL = 1e-10


@dataclass
class EnergyReport:
    D_energy: float
    S_energy: float
    coupling: float
    omega_check: float
    omega: float = float("nan")

    @property
    def equidistribution_residual(self):
        return abs(self.D_energy - self.S_energy) / (self.D_energy + self.S_energy)

    @property
    def quotient_residual(self):
        return abs(self.omega_check - self.omega) / abs(self.omega)


def _energies(mode, ops):
    D = ops.dirichlet_energy(mode.phi)
    S = ops.surface_energy(mode.xi)
    c = ops.coupling(mode.phi, mode.xi)
    return D, S, c


def check_energy(mode: SloshingMode, ops: OperatorSet, tol=ENERGY_TOL) -> EnergyReport:
    """Verify ``D = S = (omega/2) <phi, xi>`` and ``(D + S) / <phi, xi> = omega``."""
    D, S, c = _energies(mode, ops)
    if c == 0 or not math.isfinite(c):
        raise IdentityViolation("coupling <phi, xi> vanishes; the pair is not a mode", math.inf)
    report = EnergyReport(D, S, c, (D + S) / c, mode.omega)
    half = 0.5 * mode.omega * c
    worst = max(
        report.equidistribution_residual,
        abs(D - half) / abs(half),
        abs(S - half) / abs(half),
        report.quotient_residual,
    )
    if not worst <= tol:
        raise IdentityViolation(f"energy identities violated (relative residual {worst:.3e})", worst)
    return report


def check_orthogonality(spectrum: Spectrum, ops: OperatorSet, tol=ORTHO_TOL,
                        gap=DEGENERATE_GAP) -> float:
    """Largest ``|<phi_j, xi_k>|`` over pairs with distinct frequencies.

    Pairs closer than ``gap`` (relative) are outside the hypothesis and are
    skipped.  Modes are assumed unit-coupling normalised.
    """
    modes = list(spectrum)
    worst = 0.0
    for j in range(len(modes)):
        for k in range(j + 1, len(modes)):
            wj, wk = modes[j].omega, modes[k].omega
            if abs(wj - wk) <= gap * wk:
                log.info("orthogonality: skipped near-degenerate pair (%d, %d)", j, k)
                continue
            r = max(abs(ops.coupling(modes[j].phi, modes[k].xi)),
                    abs(ops.coupling(modes[k].phi, modes[j].xi)))
            worst = max(worst, r)
    if not worst <= tol:
        raise IdentityViolation(f"cross coupling {worst:.3e} exceeds {tol:g}", worst)
    return worst


# ---------------------------------------------------------------- monotonicity
@dataclass
class MonotonicityVerdict:
    depth_shallow: float
    depth_deep: float
    Bo: float
    omega_shallow: float
    omega_deep: float
    analytic_shallow: float = float("nan")
    analytic_deep: float = float("nan")
    layers: tuple = ()

    @property
    def holds(self):
        return self.omega_shallow <= self.omega_deep + MONOTONE_TOL

    @property
    def agrees_with_analytic(self):
        if math.isnan(self.analytic_shallow):
            return True
        return (self.omega_shallow <= self.omega_deep) == (self.analytic_shallow <= self.analytic_deep)


def _analytic_fundamental(spec: ContainerSpec, Bo):
    if spec.shape == "disk":
        return cylinder_dispersion(1, 1, spec.depth / spec.radius, Bo).omega
    return box_fundamental(spec.Lx, spec.Ly, spec.depth, Bo).omega


def nested_layers(h_shallow, h_deep, min_layers):
    """Layer counts giving both depths the same layer thickness.

    The deep mesh then contains the shallow one layer for layer, so the
    shallow discrete space is the restriction of the deep one.
    """
    ratio = Fraction(h_shallow / h_deep).limit_denominator(64)
    if abs(float(ratio) - h_shallow / h_deep) > 1e-12 * h_shallow / h_deep:
        raise InvalidSpec(f"depth ratio {h_shallow / h_deep!r} is not a simple fraction")
    p, q = ratio.numerator, ratio.denominator
    mult = max(1, math.ceil(min_layers / p))
    return p * mult, q * mult


def check_monotonicity(spec_shallow: ContainerSpec, spec_deep: ContainerSpec, Bo,
                       layers=None, formulation="reduced") -> MonotonicityVerdict:
    """Fundamental frequency of the shallower of two containers over the same surface.

    ``layers`` is the shallow layer count (default: the spec resolution); the
    deep container gets as many layers as keep the thickness equal.
    """
    Bo = parse_bond(Bo)
    if spec_shallow.with_depth(1.0) != spec_deep.with_depth(1.0):
        raise InvalidSpec("containers must share the free surface and resolution")
    h_s, h_d = spec_shallow.depth, spec_deep.depth
    if h_s > h_d:
        raise InvalidSpec("first spec must be the shallower one")
    shallow_pair = build_mesh(spec_shallow, layers)
    surface = shallow_pair.surface
    L_s, L_d = nested_layers(h_s, h_d, shallow_pair.volume.layers)
    if L_s != shallow_pair.volume.layers:
        shallow_pair = MeshPair(surface, extrude(surface, h_s, L_s), spec_shallow)
    deep_pair = MeshPair(surface, extrude(surface, h_d, L_d), spec_deep)
    w_s = solve(assemble(shallow_pair, Bo), 1, formulation)[0].omega
    w_d = solve(assemble(deep_pair, Bo), 1, formulation)[0].omega
    verdict = MonotonicityVerdict(h_s, h_d, Bo, w_s, w_d,
                                  _analytic_fundamental(spec_shallow, Bo),
                                  _analytic_fundamental(spec_deep, Bo), (L_s, L_d))
    if not verdict.holds:
        raise IdentityViolation(
            f"omega_1(h={h_s:g}) = {w_s:.12g} exceeds omega_1(h={h_d:g}) = {w_d:.12g}",
            (w_s - w_d) / w_d)
    return verdict


# ---------------------------------------------------------------- meniscus
@dataclass
class YoungLaplaceReport:
    Bo: float
    smallest_eigenvalue: float
    lower_bound: float
    solve_residual: float


def _smallest_eig(A):
    n = A.shape[0]
    if n <= 64:
        return float(np.linalg.eigvalsh(A.toarray())[0])
    v0 = np.ones(n) / math.sqrt(n)
    # shift-invert Lanczos at zero is inverse iteration with Krylov acceleration
    val = spla.eigsh(A.tocsc(), k=1, sigma=0.0, which="LM", v0=v0, return_eigenvectors=False)
    return float(val[0])


def young_laplace_check(ops: OperatorSet, Bo, seed=0) -> YoungLaplaceReport:
    """Positive definiteness of ``K_F + Bo M_F``, so the flat meniscus is the only one."""
    Bo = float(Bo)
    if not (Bo > 0 and math.isfinite(Bo)):
        raise ValueError("Bo must be finite and positive")
    A = (ops.K_F + Bo * ops.M_F).tocsr()
    lam = _smallest_eig(A)
    m_min = _smallest_eig(ops.M_F.tocsr())
    rng = np.random.default_rng(seed)
    rhs = ops.M_F @ rng.standard_normal(ops.n_surface)
    s = spla.spsolve(A.tocsc(), rhs)
    res = float(np.linalg.norm(A @ s - rhs) / np.linalg.norm(rhs))
    report = YoungLaplaceReport(Bo, lam, Bo * m_min, res)
    if not lam > 0:
        raise IdentityViolation(f"K_F + Bo M_F has eigenvalue {lam:.3e} <= 0", lam)
    return report


# ---------------------------------------------------------------- postprocessing
@dataclass
class HighSpot:
    node: int
    x: float
    y: float
    value: float
    on_boundary: bool


def high_spot(mode: SloshingMode, surface: SurfaceMesh) -> HighSpot:
    """Node of largest ``|xi|`` and whether it lies on the contact line."""
    xi = np.asarray(mode.xi)
    j = int(np.argmax(np.abs(xi)))
    x, y = surface.nodes[j]
    return HighSpot(j, float(x), float(y), float(xi[j]), bool(np.isin(j, surface.boundary_nodes)))


@dataclass
class ModalTrajectory:
    times: np.ndarray
    energy: np.ndarray
    delta: float

    def __post_init__(self):
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def drift(self):
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / e0)


def modal_trajectory(mode: SloshingMode, ops: OperatorSet, delta=0.0, times=None,
                     samples=100) -> ModalTrajectory:
    """Energy ``D[phi(t)] + S[eta(t)]`` along the time-harmonic motion of ``mode``.

    Defaults to ``samples`` points over one period.
    """
    if times is None:
        times = np.linspace(0.0, 2.0 * math.pi / mode.omega, samples)
    times = np.asarray(times, dtype=float)
    energy = np.empty(len(times))
    for i, t in enumerate(times):
        arg = mode.omega * t + delta
        energy[i] = ops.dirichlet_energy(mode.phi * math.cos(arg)) + ops.surface_energy(mode.xi * math.sin(arg))
    return ModalTrajectory(times, energy, float(delta))


# ---------------------------------------------------------------- suite
@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    ref: str
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"CHECK {self.name} {status} residual={self.residual:.6e} ref={self.ref}"


def format_report(results) -> str:
    return "\n".join(r.line() for r in results) + "\n"


def report_json(results) -> str:
    rows = []
    for r in results:
        d = asdict(r)
        d["status"] = "PASS" if r.passed else "FAIL"
        if not math.isfinite(d["residual"]):
            d["residual"] = str(d["residual"])
        rows.append(d)
    return json.dumps({"checks": rows, "all_passed": all(r.passed for r in results)}, indent=2)


def inject_fault(spectrum: Spectrum, ops: OperatorSet, kind="sign-flip") -> Spectrum:
    """Negative control: corrupt the second mode of a copy of ``spectrum``.

    ``sign-flip`` negates ``xi`` on the half of the surface with ``x > 0``.
    """
    if kind != "sign-flip":
        raise ValueError(f"unknown fault {kind!r}")
    modes = list(spectrum.modes)
    if len(modes) < 2:
        raise ValueError("fault injection needs at least two modes")
    m = modes[1]
    x = ops.mesh.surface.nodes[:, 0]
    xi = np.where(x > 0, -m.xi, m.xi)
    modes[1] = SloshingMode(m.omega, m.phi.copy(), xi)
    return Spectrum(modes, spectrum.Bo, spectrum.fingerprint, spectrum.formulation)


def _run(name, ref, fn):
    try:
        residual, detail = fn()
        return CheckResult(name, True, float(residual), ref, detail)
    except IdentityViolation as exc:
        return CheckResult(name, False, float(exc.residual), ref, str(exc))
    except SloshError as exc:
        return CheckResult(name, False, math.inf, ref, f"{type(exc).__name__}: {exc}")


def run_checks(ops: OperatorSet, spectrum: Spectrum, spec: ContainerSpec | None = None,
               layers=None, seed=0, eps=DEFAULT_EPS, fault=None):
    """Run every identity check on ``spectrum`` and return a list of results.

    ``spec`` enables the domain-monotonicity check (the container against
    itself at half depth).  ``fault`` is a test hook, see :func:`inject_fault`.
    """
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    if fault is not None:
        spectrum = inject_fault(spectrum, ops, fault)
    results = []

    def energy():
        worst = 0.0
        for m in spectrum:
            r = check_energy(m, ops)
            worst = max(worst, r.equidistribution_residual, r.quotient_residual)
        return worst, f"{len(spectrum)} modes"
    results.append(_run("energy_equidistribution", "energy-equidistribution", energy))

    def residuals():
        worst = max(max(mode_residuals(m, ops)) for m in spectrum)
        if not worst <= ENERGY_TOL:
            raise IdentityViolation(f"weak-form residual {worst:.3e}", worst)
        return worst, ""
    results.append(_run("weak_equations", "euler-lagrange-weak-form", residuals))

    def ortho():
        return check_orthogonality(spectrum, ops), ""
    results.append(_run("orthogonality", "cross-orthogonality", ortho))

    def reciprocity():
        rng = np.random.default_rng(seed)
        Z = zero_mean_basis(ops.mean_weights)
        g = Z @ rng.standard_normal((Z.shape[1], 2))
        phi = neumann_solve(ops, g)
        tr = phi[ops.trace]
        a = g[:, 0] @ (ops.M_F @ tr[:, 1])
        b = g[:, 1] @ (ops.M_F @ tr[:, 0])
        scale = math.sqrt(abs(g[:, 0] @ (ops.M_F @ tr[:, 0])) * abs(g[:, 1] @ (ops.M_F @ tr[:, 1])))
        r = abs(a - b) / scale
        pos = min(g[:, i] @ (ops.M_F @ tr[:, i]) for i in range(2))
        if not (r <= RECIPROCITY_TOL and pos >= 0):
            raise IdentityViolation(f"reciprocity residual {r:.3e}, min energy {pos:.3e}", r)
        return r, ""
    results.append(_run("ntd_reciprocity", "ntd-self-adjointness", reciprocity))

    def equivalence():
        k = len(spectrum)
        other = solve_coupled(ops, k) if spectrum.formulation != "coupled" else solve_reduced(ops, k)
        r = float(np.max(np.abs(other.omegas - spectrum.omegas) / spectrum.omegas))
        if not r <= EQUIVALENCE_TOL:
            raise IdentityViolation(f"formulations differ by {r:.3e}", r)
        return r, ""
    results.append(_run("formulation_equivalence", "dual-formulation", equivalence))

    if spec is not None:
        def monotone():
            v = check_monotonicity(spec.with_depth(0.5 * spec.depth), spec, ops.Bo, layers)
            if not v.agrees_with_analytic:
                raise IdentityViolation("FEM ordering disagrees with the closed form", math.inf)
            return max(0.0, (v.omega_shallow - v.omega_deep) / v.omega_deep), (
                f"omega_shallow={v.omega_shallow:.12g} omega_deep={v.omega_deep:.12g}")
        results.append(_run("domain_monotonicity", "domain-monotonicity", monotone))

    def steklov():
        w_inf = solve_reduced(ops.with_bond(math.inf), 1)[0].omega
        w_big = solve_reduced(ops.with_bond(STEKLOV_BOND), 1)[0].omega
        r = abs(w_big - w_inf) / w_inf
        if not r <= STEKLOV_TOL:
            raise IdentityViolation(f"Bo={STEKLOV_BOND:g} differs from Bo=inf by {r:.3e}", r)
        return r, ""
    results.append(_run("steklov_limit", "zero-tension-limit", steklov))

    def perturbation():
        base = ops.with_bond(math.inf)
        k = max(len(spectrum), 2)
        ref = solve_reduced(base, k + 1)
        simple = simple_modes(ref)
        if not simple:
            raise NotSimple("no simple mode among the computed ones")
        j = simple[0]
        formula = slope_formula(ref[j], base, ref, j)
        fd = slope_fd(base, j, eps, spectrum=ref)
        r = abs(formula - fd.slope) / abs(fd.slope)
        if not r <= FD_TOL:
            raise IdentityViolation(f"slope formula {formula:.10g} vs finite difference {fd.slope:.10g}", r)
        return r, f"mode {j}"
    results.append(_run("bond_perturbation", "first-order-bond-perturbation", perturbation))

    def meniscus():
        worst = 0.0
        for Bo in (0.1, 1.0, 10.0):
            rep = young_laplace_check(ops, Bo, seed)
            worst = max(worst, rep.solve_residual)
        return worst, ""
    results.append(_run("young_laplace_uniqueness", "meniscus-uniqueness", meniscus))

    def conservation():
        worst = max(modal_trajectory(m, ops).drift for m in spectrum)
        if not worst <= DRIFT_TOL:
            raise IdentityViolation(f"energy drift {worst:.3e}", worst)
        return worst, ""
    results.append(_run("energy_conservation", "energy-conservation", conservation))
    return results
