import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from sloshing.analytic import (bessel_j, bessel_jp, bessel_jp_root, box_dispersion, box_fundamental,
                               cylinder_dispersion, cylinder_mode_shape, cylinder_spectrum)
from sloshing.assembly import assemble
from sloshing.errors import DomainError
from sloshing.geometry import ContainerSpec, build_mesh, refine


def _naive_series(n, x, terms=80):
    return sum((-1) ** k * (x / 2) ** (2 * k + n) / (math.factorial(k) * math.factorial(k + n))
               for k in range(terms))


def _bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def test_bessel_trivial_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0


def test_first_zero_of_j0():
    assert abs(bessel_j(0, 2.404825557695773)) <= 1e-10


@pytest.mark.parametrize("n", range(0, 8))
def test_bessel_against_scipy(n):
    xs = np.linspace(0.0, 50.0, 401)
    ours = np.array([bessel_j(n, x) for x in xs])
    assert np.max(np.abs(ours - sps.jv(n, xs))) <= 1e-12


@pytest.mark.parametrize("n", [0, 1, 3])
def test_bessel_series_region_against_naive_sum(n):
    for x in (0.3, 2.0, 5.5, 7.9):
        assert bessel_j(n, x) == pytest.approx(_naive_series(n, x), abs=1e-13)


def test_negative_order_rejected():
    with pytest.raises(DomainError):
        bessel_j(-1, 1.0)


@pytest.mark.parametrize("n,m,expected", [
    (1, 1, 1.8411837813),
    (0, 1, 3.8317059702),
    (2, 1, 3.0542369282),
])
def test_derivative_roots_against_bisection(n, m, expected):
    z = bessel_jp_root(n, m)
    assert abs(bessel_jp(n, z)) <= 1e-12
    # independent oracle: bisection of a plain series derivative
    dj = lambda x: 0.5 * (_naive_series(n - 1, x) - _naive_series(n + 1, x)) if n else -_naive_series(1, x)
    ref = _bisect(dj, expected - 0.01, expected + 0.01)
    assert z == pytest.approx(ref, abs=1e-9)
    assert z == pytest.approx(expected, abs=1e-9)


def test_roots_match_scipy_table():
    for n in range(6):
        # for n = 0 scipy also skips the root at zero
        table = sps.jnp_zeros(n, 5)
        for m in range(1, 6):
            assert bessel_jp_root(n, m) == pytest.approx(table[m - 1], abs=1e-10)


def test_root_interlacing():
    for n in range(5):
        roots = [bessel_jp_root(n, m) for m in range(1, 5)]
        assert all(a < b for a, b in zip(roots, roots[1:]))
        if n >= 1:
            assert bessel_jp_root(n + 1, 1) > bessel_jp_root(n, 1)


def test_root_indices_validated():
    with pytest.raises(DomainError):
        bessel_jp_root(1, 0)


def test_cylinder_dispersion_values():
    p = cylinder_dispersion(1, 1, 1.0)
    assert p.omega_sq == pytest.approx(1.7508, abs=1e-3)
    assert p.omega_sq == p.lambda_sq
    q = cylinder_dispersion(1, 1, 1.0, 10.0)
    assert q.omega_sq == pytest.approx(2.3441, abs=1e-3)
    assert q.omega_sq == pytest.approx(p.lambda_sq * (1 + p.z_nm**2 / 10), rel=1e-13)
    assert p.multiplicity == 2 and cylinder_dispersion(0, 1, 1.0).multiplicity == 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 4), m=st.integers(1, 3), h=st.floats(0.05, 5.0),
       Bo=st.one_of(st.just(math.inf), st.floats(0.01, 1e6)))
def test_dispersion_invariants(n, m, h, Bo):
    p = cylinder_dispersion(n, m, h, Bo)
    assert abs(bessel_jp(n, p.z_nm)) <= 1e-12
    assert p.omega_sq >= p.lambda_sq
    if math.isinf(Bo):
        assert p.omega_sq == p.lambda_sq
    else:
        assert p.omega_sq == pytest.approx(p.lambda_sq * (1 + p.z_nm**2 / Bo), rel=1e-13)
    # deeper is strictly higher until tanh rounds to 1 in double precision
    deeper = cylinder_dispersion(n, m, 1.1 * h, Bo).omega_sq
    if math.tanh(p.z_nm * h) < 1.0:
        assert deeper > p.omega_sq
    else:
        assert deeper == p.omega_sq


def test_spectrum_lists_pairs_twice():
    s = cylinder_spectrum(5, 1.0)
    assert [(p.n, p.m) for p in s] == [(1, 1), (1, 1), (2, 1), (2, 1), (0, 1)]


def test_box_dispersion():
    b = box_dispersion(1, 0, 1.0, 1.0, 1.0)
    assert b.omega_sq == pytest.approx(math.pi * math.tanh(math.pi), abs=1e-4)
    assert box_dispersion(0, 1, 1.0, 1.0, 1.0).omega == b.omega
    with pytest.raises(DomainError):
        box_dispersion(0, 0, 1.0, 1.0, 1.0)
    assert box_fundamental(2.0, 1.0, 1.0).p == 1


def test_box_mode_satisfies_continuous_equations():
    """Finite-difference check of cos(pi x/Lx) cos(q pi y/Ly) cosh(k(z+h)) in the interior and on F."""
    p, q, Lx, Ly, h, Bo = 1, 2, 2.0, 1.5, 0.8, 7.0
    b = box_dispersion(p, q, Lx, Ly, h, Bo)
    k, w = b.k, b.omega
    A = w / (k * math.sinh(k * h))
    S = lambda x, y: math.cos(p * math.pi * x / Lx) * math.cos(q * math.pi * y / Ly)
    Phi = lambda x, y, z: A * S(x, y) * math.cosh(k * (z + h))
    d = 1e-4
    x, y, z = 0.37, 0.61, -0.3
    lap = sum((Phi(*(np.add((x, y, z), e))) - 2 * Phi(x, y, z) + Phi(*(np.subtract((x, y, z), e)))) / d**2
              for e in np.eye(3) * d)
    assert abs(lap) <= 1e-5
    # bottom: Phi_z = 0, free surface: Phi_z = w xi, and xi - lap_F xi / Bo = w Phi
    assert abs(Phi(x, y, -h + d) - Phi(x, y, -h - d)) / (2 * d) <= 1e-6
    assert (Phi(x, y, d) - Phi(x, y, -d)) / (2 * d) == pytest.approx(w * S(x, y), rel=1e-6)
    lapF = -k**2 * S(x, y)
    assert S(x, y) - lapF / Bo == pytest.approx(w * Phi(x, y, 0.0), rel=1e-12)
    # contact line: normal derivative vanishes on the walls
    assert abs(S(Lx + d, y) - S(Lx - d, y)) <= 1e-9 and abs(S(x, d) - S(x, -d)) <= 1e-9


def _dual_residuals(ops, n, m, h):
    d = cylinder_dispersion(n, m, h, ops.Bo)
    z, w = d.z_nm, d.omega
    vn = ops.mesh.volume.nodes
    shape = np.array(cylinder_mode_shape(n, m, vn[:, :2]))
    phi = w / (z * math.sinh(z * h)) * shape * np.cosh(z * (vn[:, 2] + h))
    xi = shape[ops.trace]
    C = ops.coupling_matrix
    r1 = ops.K_D @ phi - w * (C.T @ xi)
    r1 -= r1.mean()
    K = ops.K_D.tocsc()[1:, 1:]
    y = spla.spsolve(K, r1[1:])
    e1 = math.sqrt(abs(r1[1:] @ y) / (phi @ (ops.K_D @ phi)))
    B = ops.surface_operator
    r2 = B @ xi - w * (C @ phi)
    e2 = math.sqrt(abs(r2 @ spla.spsolve(B.tocsc(), r2)) / (xi @ (B @ xi)))
    return e1, e2


@pytest.mark.slow
def test_closed_form_mode_weak_residual_converges():
    pair = refine(build_mesh(ContainerSpec.disk(1.0, 1.0, 2)))
    e1, e2 = [], []
    for level in range(3):
        if level:
            pair = refine(pair)
        r = _dual_residuals(assemble(pair, 10.0), 1, 1, 1.0)
        e1.append(r[0])
        e2.append(r[1])
    for e in (e1, e2):
        assert e[0] > e[1] > e[2]
        order = math.log(e[0] / e[2]) / math.log(4.0)
        assert order >= 1.5, e
