import math

import numpy as np
import pytest
from scipy import integrate

from thinlayer.constants import e_low, mu_value
from thinlayer.errors import SingularOverlap
from thinlayer.potentials import v_ee
from thinlayer.radial import eff_levels_n1
from thinlayer.two_electron import (
    antisymmetrizer,
    antisymmetrizer_check,
    build_orbital_basis,
    ci_ground_state,
    interaction,
    multipole_tables,
)


@pytest.fixture(scope="module")
def basis():
    return build_orbital_basis(0.1, 2.0, 4, 1)


@pytest.fixture(scope="module")
def tensor(basis, tmp_path_factory):
    return interaction(basis, cache_dir=str(tmp_path_factory.mktemp("vee")))


def test_basis_sorted_and_orthonormal(basis):
    en = basis.energies
    assert np.all(np.diff(en) >= 0)
    assert basis.orbitals[0].m == 0
    assert basis.orthonormality_error() <= 1e-8
    assert set(basis.ms) <= {-1, 0, 1}


def test_basis_needs_two_orbitals():
    with pytest.raises(ValueError):
        build_orbital_basis(0.1, 2.0, 1, 1)


def test_multipoles_against_direct_angular_quadrature(basis):
    tables = multipole_tables(basis.a, basis.grid, [0, 1, 2])
    c = basis.grid.nodes
    for i, j in ((40, 40), (40, 55), (10, 120), (100, 101)):
        r1, r2 = c[i], c[j]
        for k in (0, 1, 2):
            f = lambda t: v_ee(basis.a, math.sqrt((r1 - r2) ** 2 + 4 * r1 * r2 * math.sin(t / 2) ** 2)) * math.cos(k * t) / math.pi
            pts = [math.pi * 2.0**-p for p in range(1, 30)]
            ref, _ = integrate.quad(f, 0.0, math.pi, points=pts, limit=500, epsabs=1e-13, epsrel=1e-11)
            assert tables[k][i, j] == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_interaction_symmetries(basis, tensor):
    T = tensor.tensor
    assert np.allclose(T, T.transpose(1, 0, 3, 2), atol=1e-13)  # particle exchange
    n = len(basis)
    M = T.reshape(n * n, n * n)
    assert np.allclose(M, M.T, atol=1e-12)
    assert 0 < tensor.tolerance < 1e-8
    assert tensor.tail_estimate == 0.0


def test_interaction_cache_round_trip(basis, tmp_path):
    first = interaction(basis, cache_dir=str(tmp_path))
    again = interaction(basis, cache_dir=str(tmp_path))
    assert np.array_equal(first.tensor, again.tensor)
    assert len(list(tmp_path.glob("vee-*.npz"))) == 1


def test_non_interacting_limits():
    b = build_orbital_basis(0.1, 2.0, 3, 0)
    eps = b.energies
    ferm = ci_ground_state(b, "fermionic", interaction_on=False)
    dist = ci_ground_state(b, "distinguishable", interaction_on=False)
    assert ferm.ground_energy == pytest.approx(eps[0] + eps[1], rel=1e-13)
    assert dist.ground_energy == pytest.approx(2 * eps[0], rel=1e-13)


def test_non_interacting_zero_total_angular_momentum(basis):
    eps, ms = basis.energies, basis.ms
    pairs = [eps[i] + eps[j] for i in range(len(basis)) for j in range(i + 1, len(basis)) if ms[i] + ms[j] == 0]
    got = ci_ground_state(basis, "fermionic", interaction_on=False).ground_energy
    assert got == pytest.approx(min(pairs), rel=1e-13)


def test_lower_bounds(basis, tensor):
    ferm = ci_ground_state(basis, "fermionic")
    dist = ci_ground_state(basis, "distinguishable")
    assert ferm.ground_energy >= e_low(2, 2.0)
    assert e_low(2, 2.0) == pytest.approx(-38.314, abs=1e-3)
    assert ferm.ground_energy >= mu_value(2, 2.0) + 1.0
    assert dist.ground_energy >= e_low(2, 2.0)
    assert ferm.ground_energy >= dist.ground_energy
    assert ferm.interaction_tolerance == pytest.approx(tensor.tolerance)


def test_two_electrons_bind_below_one(basis):
    ferm = ci_ground_state(basis, "fermionic").ground_energy
    assert ferm < eff_levels_n1(0.1, 2.0).eigenvalues[0]


def test_nested_bases_never_raise_energy():
    energies = [ci_ground_state(build_orbital_basis(0.1, 2.0, n, 0)).ground_energy for n in (2, 4, 6)]
    assert energies[1] <= energies[0] + 1e-12
    assert energies[2] <= energies[1] + 1e-12


def test_no_fermionic_pair_in_sector():
    b = build_orbital_basis(0.1, 2.0, 2, 1)
    assert sorted(b.ms.tolist()) != [0, 0]
    with pytest.raises(SingularOverlap):
        ci_ground_state(b, "fermionic", interaction_on=False)


def test_antisymmetrizer_two_orbitals():
    P = antisymmetrizer(2)
    assert np.linalg.matrix_rank(P) == 1
    assert np.allclose(P, np.array([[0, 0, 0, 0], [0, 0.5, -0.5, 0], [0, -0.5, 0.5, 0], [0, 0, 0, 0]]))
    b = build_orbital_basis(0.1, 2.0, 2, 0)
    res = antisymmetrizer_check(b, interaction_on=True)
    assert res["max"] <= 1e-12


def test_antisymmetrizer_commutes(basis):
    assert antisymmetrizer_check(basis, interaction_on=False)["commutator"] <= 1e-12
    res = antisymmetrizer_check(basis, interaction_on=True)
    assert res["idempotence"] <= 1e-12 and res["symmetry"] <= 1e-12
    assert res["commutator"] <= 1e-10


def test_ci_result_json(basis, tmp_path):
    res = ci_ground_state(basis, "fermionic", interaction_on=False)
    res.to_json(tmp_path / "ci.json")
    assert '"symmetry": "fermionic"' in (tmp_path / "ci.json").read_text()
    with pytest.raises(ValueError):
        ci_ground_state(basis, "bosonic")
