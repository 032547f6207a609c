"""Two-electron configuration interaction for the effective layer Hamiltonian.

One-electron orbitals are eigenfunctions of ``-Laplacian - Z V_en^a`` on a
radial grid, times ``exp(i m phi)``.  The repulsion ``V_ee^a(|r1 - r2|)``
enters through its angular multipoles

    v_k(rho1, rho2) = (1/pi) int_0^pi V_ee^a(rho12(theta)) cos(k theta) dtheta,

so a matrix element ``<ab|V|cd>`` is nonzero only if
``m_a + m_b = m_c + m_d`` and then equals ``(u_a u_c)^T v_k (u_b u_d)`` with
``k = m_a - m_c``.  Two-body states are products ``|ij>`` of orbitals; the
CI ground state is taken in the total angular momentum ``M = 0`` sector.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh, eigvalsh

from .constants import e_low, mu_value
from .errors import SingularOverlap
from .parallel import ordered_map
from .potentials import tabulate, v_ee_array
from .radial import RadialGrid, laplacian_tridiagonal

CI_NODES = 240
ORTHO_TOL = 1e-8
_THETA_LEVELS = 34
_THETA_ORDER = 12


@dataclass(frozen=True)
class Orbital:
    m: int
    index: int
    energy: float
    u: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class OrbitalBasis:
    orbitals: tuple
    a: float
    Z: float
    grid: RadialGrid

    def __post_init__(self):
        if len(self.orbitals) < 1:
            raise ValueError("empty orbital basis")
        en = [o.energy for o in self.orbitals]
        if any(y < x for x, y in zip(en, en[1:])):
            raise ValueError("orbitals must be sorted by energy")

    def __len__(self):
        return len(self.orbitals)

    @property
    def energies(self) -> np.ndarray:
        return np.array([o.energy for o in self.orbitals])

    @property
    def ms(self) -> np.ndarray:
        return np.array([o.m for o in self.orbitals])

    def radial_functions(self) -> np.ndarray:
        """``f = u / sqrt(w)`` sampled at the grid nodes, one column per orbital."""
        U = np.column_stack([o.u for o in self.orbitals])
        return U / np.sqrt(self.grid.weights)[:, None]

    def overlap(self) -> np.ndarray:
        """Orbital overlap matrix; different ``m`` are orthogonal through the angular factor."""
        U = np.column_stack([o.u for o in self.orbitals])
        S = U.T @ U
        same = self.ms[:, None] == self.ms[None, :]
        return np.where(same, S, 0.0)

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.overlap() - np.eye(len(self)))))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"a": self.a, "Z": self.Z, "grid": self.grid.to_dict()}, sort_keys=True).encode())
        for o in self.orbitals:
            h.update(np.int64(o.m).tobytes())
            h.update(np.ascontiguousarray(o.u, dtype=float).tobytes())
        return h.hexdigest()


def ci_grid(a: float, Z: float, n_nodes: int = CI_NODES) -> RadialGrid:
    return RadialGrid(rho_max=max(40.0, 80.0 / Z), n_nodes=n_nodes, spacing="graded", scale=min(a, 1.0 / Z))


def build_orbital_basis(
    a: float, Z: float, n_orb: int, m_max: int, grid: Optional[RadialGrid] = None
) -> OrbitalBasis:
    """The ``n_orb`` lowest one-electron states over sectors ``|m| <= m_max``."""
    if int(n_orb) != n_orb or n_orb < 2:
        raise ValueError(f"a two-electron basis needs at least 2 orbitals, got {n_orb!r}")
    if int(m_max) != m_max or m_max < 0:
        raise ValueError(f"m_max must be a nonnegative integer, got {m_max!r}")
    if not 0.0 < a < 1.0 or not Z > 0:
        raise ValueError("need 0 < a < 1 and Z > 0")
    grid = grid or ci_grid(a, Z)
    V = tabulate("en", a, grid.nodes).values
    cands = []
    for m in range(-m_max, m_max + 1):
        d, e = laplacian_tridiagonal(grid, m)
        vals, vecs = eigh(
            np.diag(d - Z * V) + np.diag(e, 1) + np.diag(e, -1),
            subset_by_index=(0, min(n_orb, grid.n_nodes) - 1),
        )
        for j in range(vals.size):
            u = vecs[:, j]
            # fix the sign so that the function is positive near the axis
            u = u if u[np.argmax(np.abs(u[: max(4, u.size // 8)]))] >= 0 else -u
            cands.append((float(vals[j]), abs(m), -m, Orbital(m=m, index=j, energy=float(vals[j]), u=u)))
    cands.sort(key=lambda t: (round(t[0], 12), t[1], t[2]))
    chosen = [t[3] for t in cands[:n_orb]]
    chosen.sort(key=lambda o: o.energy)
    basis = OrbitalBasis(orbitals=tuple(chosen), a=a, Z=Z, grid=grid)
    err = basis.orthonormality_error()
    if err > ORTHO_TOL:
        raise SingularOverlap(f"orbitals not orthonormal: {err:.3g}")
    return basis


# ---------------------------------------------------------------------------
# interaction integrals


def _theta_rule(levels=_THETA_LEVELS, order=_THETA_ORDER):
    """Gauss-Legendre on panels ``[pi 2^-(j+1), pi 2^-j]`` plus ``[0, pi 2^-levels]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [0.0] + [math.pi * 2.0 ** (-j) for j in range(levels, -1, -1)]
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(half * x + 0.5 * (hi + lo))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


class _VeeTable:
    """``V_ee^a`` as a cubic spline in ``ln rho`` on a dense logarithmic table.

    ``rel_error`` is the largest relative deviation from direct evaluation
    at the interval midpoints.
    """

    def __init__(self, a: float, rho_min: float, rho_max: float, n: int = 6000):
        self.log_r = np.linspace(math.log(rho_min), math.log(rho_max), n)
        self.spline = CubicSpline(self.log_r, v_ee_array(a, np.exp(self.log_r)))
        self.a = a
        mids = 0.5 * (self.log_r[:-1] + self.log_r[1:])[:: max(1, n // 400)]
        direct = v_ee_array(a, np.exp(mids))
        self.rel_error = float(np.max(np.abs(self.spline(mids) - direct) / direct))

    def __call__(self, rho):
        lr = np.log(rho)
        out = self.spline(lr)
        off = (lr < self.log_r[0]) | (lr > self.log_r[-1])
        if np.any(off):
            out[off] = v_ee_array(self.a, rho[off])
        return out


def _vee_table(a: float, grid: RadialGrid, levels: int = _THETA_LEVELS) -> _VeeTable:
    c = grid.nodes
    return _VeeTable(a, 1e-3 * c[0] * 2.0 ** (-levels), 2.1 * c[-1])


def multipole_tables(
    a: float,
    grid: RadialGrid,
    k_values,
    *,
    levels=_THETA_LEVELS,
    order=_THETA_ORDER,
    threads=None,
    table: Optional[_VeeTable] = None,
) -> dict:
    """``{k: v_k(rho_i, rho_j)}`` on the grid nodes."""
    c = grid.nodes
    theta, wt = _theta_rule(levels, order)
    if table is None:
        table = _vee_table(a, grid, levels)
    ks = sorted({abs(int(k)) for k in k_values})
    trig = np.stack([np.cos(k * theta) * wt / math.pi for k in ks], axis=1)
    sin_half = np.sin(0.5 * theta)

    def row(i):
        r1 = c[i]
        r2 = c[:, None]
        # rho12^2 = (r1 - r2)^2 + 4 r1 r2 sin^2(theta/2), free of cancellation
        rho12 = np.sqrt((r1 - r2) ** 2 + 4.0 * r1 * r2 * sin_half[None, :] ** 2)
        return table(rho12) @ trig

    rows = ordered_map(row, range(c.size), threads)
    stacked = np.stack(rows, axis=0)  # (n, n, nk)
    out = {}
    for j, k in enumerate(ks):
        v = stacked[:, :, j]
        out[k] = 0.5 * (v + v.T)
    return out


def interaction_tensor(basis: OrbitalBasis, tables: dict) -> np.ndarray:
    """``T[a, b, c, d] = <ab|V_ee|cd>`` over all orbital quadruples."""
    n = len(basis)
    U = np.column_stack([o.u for o in basis.orbitals])
    ms = basis.ms
    dens = U[:, :, None] * U[:, None, :]  # (grid, a, c)
    T = np.zeros((n, n, n, n))
    for k, v in tables.items():
        for sgn in ((1, -1) if k else (1,)):
            kk = sgn * k
            pa, pc = np.nonzero(ms[:, None] - ms[None, :] == kk)
            pb, pd = np.nonzero(ms[None, :] - ms[:, None] == kk)
            if pa.size == 0 or pb.size == 0:
                continue
            left = dens[:, pa, pc]  # (grid, n_ac)
            right = dens[:, pb, pd]
            vals = left.T @ v @ right
            T[pa[:, None], pb[None, :], pc[:, None], pd[None, :]] = vals
    return T


def _needed_k(basis: OrbitalBasis):
    ms = basis.ms
    return sorted({abs(int(x)) for x in (ms[:, None] - ms[None, :]).ravel()})


@dataclass(frozen=True)
class Interaction:
    tensor: np.ndarray
    tolerance: float
    tail_estimate: float


def _cache_path(cache_dir, basis: OrbitalBasis) -> str:
    key = hashlib.sha256(f"{basis.a!r}|{basis.Z!r}|{basis.digest()}".encode()).hexdigest()[:32]
    return os.path.join(cache_dir, f"vee-{key}.npz")


def interaction(basis: OrbitalBasis, *, cache_dir: Optional[str] = None, threads=None) -> Interaction:
    """Interaction tensor with an error estimate from a halved angular rule
    and the interpolation error of the tabulated repulsion.

    All required multipoles ``|k| <= 2 m_max`` are computed exactly, so the
    truncation tail is zero.
    """
    if cache_dir is not None:
        path = _cache_path(cache_dir, basis)
        if os.path.exists(path):
            with np.load(path) as data:
                return Interaction(data["tensor"], float(data["tolerance"]), float(data["tail"]))
    ks = _needed_k(basis)
    table = _vee_table(basis.a, basis.grid)
    fine = interaction_tensor(basis, multipole_tables(basis.a, basis.grid, ks, threads=threads, table=table))
    coarse = interaction_tensor(
        basis,
        multipole_tables(
            basis.a, basis.grid, ks, levels=_THETA_LEVELS - 4, order=_THETA_ORDER // 2, threads=threads, table=table
        ),
    )
    # angular-rule difference plus the interpolation error of the V_ee table
    tol = float(np.max(np.abs(fine - coarse)) + table.rel_error * np.max(np.abs(fine))) if fine.size else 0.0
    result = Interaction(fine, tol, 0.0)
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp.npz"
        np.savez(tmp, tensor=fine, tolerance=tol, tail=0.0)
        os.replace(tmp, path)
    return result


# ---------------------------------------------------------------------------
# CI


@dataclass(frozen=True)
class CIResult:
    ground_energy: float
    symmetry: str
    basis_size: int
    interaction_tolerance: float
    tail_estimate: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "ground_energy": self.ground_energy,
            "symmetry": self.symmetry,
            "basis_size": self.basis_size,
            "interaction_tolerance": self.interaction_tolerance,
            "tail_estimate": self.tail_estimate,
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def product_hamiltonian(basis: OrbitalBasis, tensor: Optional[np.ndarray]) -> np.ndarray:
    """Two-body Hamiltonian on the full product space, index ``i * n + j`` for ``|ij>``."""
    n = len(basis)
    eps = basis.energies
    H = np.diag((eps[:, None] + eps[None, :]).ravel())
    if tensor is not None:
        H = H + tensor.reshape(n * n, n * n)
    return H


def antisymmetrizer(n: int) -> np.ndarray:
    """``(1 - swap)/2`` on the ``n^2``-dimensional product space."""
    dim = n * n
    swap = np.zeros((dim, dim))
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    swap[(i * n + j).ravel(), (j * n + i).ravel()] = 1.0
    return 0.5 * (np.eye(dim) - swap)


def _sector(basis: OrbitalBasis, M: int = 0) -> np.ndarray:
    ms = basis.ms
    tot = (ms[:, None] + ms[None, :]).ravel()
    return np.nonzero(tot == M)[0]


def ci_ground_state(
    basis: OrbitalBasis,
    symmetry: str = "fermionic",
    interaction_on: bool = True,
    *,
    cache_dir: Optional[str] = None,
    threads=None,
) -> CIResult:
    """Lowest CI eigenvalue of ``H_eff - 2 E_1`` in the ``M = 0`` sector."""
    if symmetry not in ("fermionic", "distinguishable"):
        raise ValueError(f"unknown symmetry {symmetry!r}")
    n = len(basis)
    if n < 2:
        raise ValueError("need at least 2 orbitals")
    inter = interaction(basis, cache_dir=cache_dir, threads=threads) if interaction_on else None
    H = product_hamiltonian(basis, None if inter is None else inter.tensor)
    idx = _sector(basis, 0)
    if idx.size == 0:
        raise SingularOverlap("no two-orbital product has M = 0")
    if symmetry == "distinguishable":
        B = np.eye(n * n)[:, idx]
    else:
        cols = []
        for p in idx:
            i, j = divmod(int(p), n)
            if i < j:
                v = np.zeros(n * n)
                v[i * n + j] = 1.0 / math.sqrt(2.0)
                v[j * n + i] = -1.0 / math.sqrt(2.0)
                cols.append(v)
        if not cols:
            raise SingularOverlap("no antisymmetric M = 0 pair in the basis")
        B = np.column_stack(cols)
    gram = B.T @ B
    if np.min(eigvalsh(gram)) < 1e-10:
        raise SingularOverlap("CI basis is linearly dependent")
    Hs = B.T @ H @ B
    ground = float(eigvalsh(0.5 * (Hs + Hs.T), subset_by_index=(0, 0))[0])
    return CIResult(
        ground_energy=ground,
        symmetry=symmetry,
        basis_size=int(B.shape[1]),
        interaction_tolerance=0.0 if inter is None else inter.tolerance,
        tail_estimate=0.0 if inter is None else inter.tail_estimate,
        meta={
            "a": basis.a,
            "Z": basis.Z,
            "n_orb": n,
            "orbital_energies": basis.energies.tolist(),
            "interaction": bool(interaction_on),
            "e_low": e_low(2, basis.Z),
            "mu_plus_one": mu_value(2, basis.Z) + 1.0,
        },
    )


def antisymmetrizer_check(basis: OrbitalBasis, interaction_on: bool = True, *, cache_dir=None) -> dict:
    """Projector and commutation residuals of ``P^AS`` on the product space."""
    n = len(basis)
    P = antisymmetrizer(n)
    inter = interaction(basis, cache_dir=cache_dir) if interaction_on else None
    H = product_hamiltonian(basis, None if inter is None else inter.tensor)
    scale = max(1.0, float(np.max(np.abs(H))))
    res = {
        "idempotence": float(np.max(np.abs(P @ P - P))),
        "symmetry": float(np.max(np.abs(P - P.T))),
        "commutator": float(np.max(np.abs(P @ H - H @ P))) / scale,
    }
    res["max"] = max(res.values())
    return res
