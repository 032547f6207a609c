"""One electron in a Dirichlet layer ``{|z| < a/2}`` around a point charge.

The cylinder ``(rho, z)`` in angular sector ``m`` is discretised as a
tensor product: the finite-volume radial operator from :mod:`radial` times a
spectral (sine-transform) Dirichlet Laplacian across the layer.  With the
spectral z-operator the transverse modes and energies ``(n pi/a)^2`` are
exact at the matrix level, so the projector onto the lowest mode commutes
with the discrete kinetic energy and the Feshbach block identities hold to
rounding error.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigvalsh, inv, lu_factor, lu_solve
from scipy.sparse.linalg import eigsh

from ._fpenv import flush_subnormals
from .constants import e_low, mu_value
from .errors import ConvergenceFailure, InsufficientBoundStates, InvalidGrid, SingularShift
from .potentials import v_en
from .radial import EigenResult, RadialGrid, default_grid, laplacian_tridiagonal, tridiagonal_lowest

LAYER_RESIDUAL_TOL = 1e-6
SHIFT_GAP = 1e-8
FESHBACH_NR = 120
FESHBACH_NZ = 48
# off-parity coupling tolerated before the parity split is refused
_PARITY_TOL = 1e-14


@dataclass(frozen=True)
class TransverseMode:
    n: int
    a: float
    energy: float
    parity: str

    def profile(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        k = self.n * math.pi / self.a
        amp = math.sqrt(2.0 / self.a)
        if self.parity == "even-cos":
            return amp * np.cos(k * z)
        return amp * np.sin(k * z)

    def norm_on(self, nz: int) -> float:
        """Discrete ``int |chi|^2 dz`` on the ``nz`` interior layer nodes."""
        h = self.a / (nz + 1)
        z = -0.5 * self.a + h * np.arange(1, nz + 1)
        return float(h * np.sum(self.profile(z) ** 2))


def transverse_mode(n: int, a: float) -> TransverseMode:
    if int(n) != n or n < 1:
        raise ValueError(f"mode index must be a positive integer, got {n!r}")
    if not a > 0:
        raise ValueError(f"width must be positive, got {a!r}")
    parity = "even-cos" if n % 2 == 1 else "odd-sin"
    return TransverseMode(n=int(n), a=float(a), energy=(n * math.pi / a) ** 2, parity=parity)


@dataclass(frozen=True)
class CylGrid:
    """Radial cells times ``nz`` interior nodes on ``(-a/2, a/2)``."""

    radial: RadialGrid
    nz: int
    a: float

    def __post_init__(self):
        if int(self.nz) != self.nz or self.nz < 2:
            raise InvalidGrid(f"need at least 2 transverse nodes, got {self.nz!r}")
        if not self.a > 0:
            raise InvalidGrid(f"width must be positive, got {self.a!r}")

    @property
    def m(self) -> int:
        return self.radial.m

    @property
    def shape(self):
        return (self.radial.n_nodes, self.nz)

    @property
    def h(self) -> float:
        return self.a / (self.nz + 1)

    @cached_property
    def z(self) -> np.ndarray:
        k = np.arange(1, self.nz + 1)
        z = -0.5 * self.a + self.h * k
        # exact mirror symmetry of the nodes
        return 0.5 * (z - z[::-1])

    @cached_property
    def sine_basis(self) -> np.ndarray:
        """Orthogonal sine-transform matrix; column ``n-1`` is the discrete mode ``n``."""
        k = np.arange(1, self.nz + 1)
        return math.sqrt(2.0 / (self.nz + 1)) * np.sin(np.outer(k, k) * math.pi / (self.nz + 1))

    @cached_property
    def mode_energies(self) -> np.ndarray:
        n = np.arange(1, self.nz + 1)
        return (n * math.pi / self.a) ** 2

    def with_m(self, m: int) -> "CylGrid":
        return CylGrid(self.radial.with_m(m), self.nz, self.a)

    def to_dict(self) -> dict:
        return {"radial": self.radial.to_dict(), "nz": self.nz, "a": self.a}


def default_cyl_grid(a: float, Z: float, nr: int = 800, nz: int = 32, m: int = 0) -> CylGrid:
    # a neutral layer is gridded like Z = 1
    return CylGrid(default_grid(Z if Z > 0 else 1.0, a, n_nodes=nr, m=m), nz, a)


def coulomb_values(grid: CylGrid, Z: float) -> np.ndarray:
    """``-Z / sqrt(rho^2 + z^2)`` at the tensor nodes, shape ``(nr, nz)``."""
    rho = grid.radial.nodes
    return -Z / np.hypot(rho[:, None], grid.z[None, :])


def radial_laplacian_sparse(grid: RadialGrid):
    d, e = laplacian_tridiagonal(grid)
    return sp.diags([e, d, e], [-1, 0, 1], format="csr")


def z_laplacian(grid: CylGrid) -> np.ndarray:
    S = grid.sine_basis
    return (S * grid.mode_energies) @ S.T


def layer_hamiltonian(a: float, Z: float, grid: CylGrid):
    """Sparse nodal-basis matrix of ``-Laplacian - Z/r`` on the layer, ``rho``-major."""
    if abs(grid.a - a) > 1e-15 * a:
        raise InvalidGrid("grid width differs from the requested width")
    nr, nz = grid.shape
    Lr = radial_laplacian_sparse(grid.radial)
    Lz = sp.csr_matrix(z_laplacian(grid))
    V = coulomb_values(grid, Z).ravel()
    return (sp.kron(Lr, sp.identity(nz)) + sp.kron(sp.identity(nr), Lz) + sp.diags(V)).tocsc()


def projector(grid: CylGrid):
    """Nodal-basis projector onto the lowest transverse mode at every radial node."""
    chi = grid.sine_basis[:, 0]
    return sp.kron(sp.identity(grid.radial.n_nodes), sp.csr_matrix(np.outer(chi, chi))).tocsr()


def solve_layer_n1(
    a: float,
    Z: float,
    grid: Optional[CylGrid] = None,
    k: int = 1,
    *,
    require_bound: bool = True,
) -> EigenResult:
    """Lowest ``k`` levels of the one-electron layer Hamiltonian in sector ``grid.m``.

    Eigenvalues are absolute; ``meta["shifted"]`` holds them minus ``(pi/a)^2``.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"width must lie in (0, 1), got {a!r}")
    if Z < 0:
        raise ValueError(f"charge must be nonnegative, got {Z!r}")
    grid = grid or default_cyl_grid(a, Z)
    H = layer_hamiltonian(a, Z, grid)
    E1 = (math.pi / a) ** 2
    sigma = E1 + e_low(1, max(Z, 0.0)) - 1.0
    try:
        vals, vecs = eigsh(H, k=k, sigma=sigma, which="LM", tol=1e-13)
    except Exception as exc:  # ARPACK and SuperLU raise assorted types
        raise ConvergenceFailure(f"layer eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = np.linalg.norm(H @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(res > LAYER_RESIDUAL_TOL):
        raise ConvergenceFailure(f"layer residual {res.max():.3g} exceeds {LAYER_RESIDUAL_TOL:g}")
    below = int(np.count_nonzero(vals < E1))
    if require_bound and below < k:
        raise InsufficientBoundStates(k, below, E1)
    return EigenResult(
        eigenvalues=vals,
        residuals=res,
        grid=grid,
        potential_kind="layer",
        meta={"a": a, "Z": Z, "E1": E1, "shifted": (vals - E1).tolist()},
        vectors=vecs,
    )


def projected_potential(grid: CylGrid, Z: float, mode: int = 1) -> np.ndarray:
    """``<chi_mode, -Z/r chi_mode>_z`` per radial node, computed on the layer nodes."""
    chi = grid.sine_basis[:, mode - 1]
    return coulomb_values(grid, Z) @ (chi * chi)


def projected_eff_levels(a: float, Z: float, grid: CylGrid, k: int = 1) -> EigenResult:
    """Effective levels (transverse energy removed) of the grid-consistent projected operator."""
    d, e = laplacian_tridiagonal(grid.radial)
    d = d + projected_potential(grid, Z)
    vals, vecs, res = tridiagonal_lowest(d, e, k, edge=0.0)
    return EigenResult(vals, res, grid, "en-projected", meta={"a": a, "Z": Z}, vectors=vecs)


def full_vs_eff_gap(a: float, Z: float, grid: Optional[CylGrid] = None) -> dict:
    grid = grid or default_cyl_grid(a, Z)
    full = solve_layer_n1(a, Z, grid, k=1)
    eff = projected_eff_levels(a, Z, grid, k=1)
    lam_full = float(full.eigenvalues[0] - (math.pi / a) ** 2)
    lam_eff = float(eff.eigenvalues[0])
    return {"a": a, "full": lam_full, "eff": lam_eff, "gap": abs(lam_full - lam_eff)}


def layer_levels_below(
    a: float, Z: float, upper: float, grid: Optional[CylGrid] = None, k0: int = 4, m_cap: int = 40
) -> list:
    """All layer eigenvalues (absolute) below ``upper``, with ``+-m`` multiplicity.

    Sectors are scanned in increasing ``|m|`` until the lowest level of a
    sector is no longer below ``upper``.
    """
    grid = grid or default_cyl_grid(a, Z)
    levels = []
    for m in range(m_cap + 1):
        g = grid.with_m(m)
        k = k0
        while True:
            res = solve_layer_n1(a, Z, g, k=k, require_bound=False)
            inside = [float(v) for v in res.eigenvalues if v < upper]
            if len(inside) < k:
                break
            k *= 2
        if not inside:
            return sorted(levels)
        levels.extend(inside * (1 if m == 0 else 2))
    raise ConvergenceFailure("angular sectors did not close below the requested energy")


def projection_consistency(a: float, probe_rhos: Sequence[float], nz: int = 1000, mode: int = 1) -> float:
    """Max deviation between the layer-grid average of ``1/r`` and ``V_en^a``."""
    if not a > 0:
        raise ValueError(f"width must be positive, got {a!r}")
    tm = transverse_mode(mode, a)
    h = a / (nz + 1)
    z = -0.5 * a + h * np.arange(1, nz + 1)
    w = h * tm.profile(z) ** 2
    worst = 0.0
    for rho in probe_rhos:
        avg = float(np.sum(w / np.hypot(rho, z)))
        worst = max(worst, abs(avg - v_en(a, rho)))
    return worst


# ---------------------------------------------------------------------------
# Feshbach decomposition


@dataclass(frozen=True)
class FeshbachReport:
    xi: float
    block_residuals: dict
    w_norm: float
    r_bot_norm: float
    w_min_eig: float = 0.0
    r_bot_bound: float = 0.0
    parity_split: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if any(v < 0 for v in self.block_residuals.values()):
            raise ValueError("residuals are norms and cannot be negative")

    @property
    def max_residual(self) -> float:
        return max(self.block_residuals.values())

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "block_residuals": dict(self.block_residuals),
            "w_norm": self.w_norm,
            "r_bot_norm": self.r_bot_norm,
            "w_min_eig": self.w_min_eig,
            "r_bot_bound": self.r_bot_bound,
            "parity_split": self.parity_split,
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def feshbach_grid(a: float, Z: float, nr: int = FESHBACH_NR, nz: int = FESHBACH_NZ) -> CylGrid:
    return default_cyl_grid(a, Z, nr=nr, nz=nz)


def _mode_blocks(a, Z, grid):
    """Dense mode-basis Hamiltonian split by transverse parity.

    Returns ``(blocks, off_norm, h_norm)``: ``blocks`` maps ``"even"`` /
    ``"odd"`` to dense matrices ordered mode-major, so the lowest mode fills
    the first ``nr`` rows of the even block.  ``off_norm`` is the norm of
    the discarded cross-parity coupling.
    """
    nr, nz = grid.shape
    S = grid.sine_basis
    V = coulomb_values(grid, Z)
    d, e = laplacian_tridiagonal(grid.radial)
    modes = np.arange(nz)
    even = modes[modes % 2 == 0]  # odd n, cosine modes
    odd = modes[modes % 2 == 1]
    # V in mode space for every radial node: (nr, nz, nz)
    Vm = np.einsum("kp,ik,kq->ipq", S, V, S, optimize=True)
    off = float(np.linalg.norm(Vm[:, even][:, :, odd]))
    h_norm = float(np.abs(d).max() + 2 * np.abs(e).max() + grid.mode_energies.max() + np.abs(V).max())
    blocks = {}
    for name, sel in (("even", even), ("odd", odd)):
        ns = sel.size
        n = nr * ns
        H = np.zeros((n, n))
        # ordering: mode-major, radial-minor, so the lowest mode fills rows 0..nr-1
        idx = lambda p: slice(p * nr, (p + 1) * nr)
        for p, mp in enumerate(sel):
            blk = H[idx(p), idx(p)]
            blk[np.diag_indices(nr)] = d + grid.mode_energies[mp]
            blk[np.arange(nr - 1), np.arange(1, nr)] = e
            blk[np.arange(1, nr), np.arange(nr - 1)] = e
            for q, mq in enumerate(sel):
                H[idx(p), idx(q)][np.diag_indices(nr)] += Vm[:, mp, mq]
        blocks[name] = H
    return blocks, off, h_norm


def _check_shift(a, Z, grid, xi):
    H = layer_hamiltonian(a, Z, grid)
    try:
        near = eigsh(H, k=1, sigma=xi, which="LM", return_eigenvectors=False, tol=1e-12)
    except RuntimeError as exc:
        raise SingularShift(f"shift {xi!r} makes the operator singular") from exc
    gap = float(np.min(np.abs(near - xi)))
    if gap < SHIFT_GAP:
        raise SingularShift(f"shift {xi!r} lies within {gap:.3g} of an eigenvalue")
    return gap


def _fro(x):
    return float(np.linalg.norm(x))


def _lu_inverse(M):
    """Inverse through an explicit LU solve against the identity.

    Used for the Schur-complement route so that it shares no inversion code
    path with the direct ``inv`` route.  (Cholesky is avoided: the Green's
    functions here underflow into subnormals, where it is an order of
    magnitude slower.)
    """
    return lu_solve(lu_factor(M), np.eye(M.shape[0]))


def _nearest_to_zero(M) -> float:
    """Eigenvalue of the symmetric matrix ``M`` closest to zero.

    Dense: the low end of these spectra is clustered to ~1e-7 relative,
    which stalls Krylov iterations.
    """
    lo = eigh(M, eigvals_only=True, subset_by_index=(0, 0), driver="evr")[0]
    if lo > 0:
        return float(lo)
    vals = eigvalsh(M)
    return float(vals[np.argmin(np.abs(vals))])


def _feshbach_blocks(blocks, nr, xi):
    He = blocks["even"]
    Ho = blocks["odd"]
    ne = He.shape[0]
    He[np.diag_indices(ne)] -= xi
    Ho[np.diag_indices(Ho.shape[0])] -= xi

    # direct route
    G_e = inv(He)
    G_o = inv(Ho)
    g_norm = math.hypot(_fro(G_e), _fro(G_o))

    # Schur-complement route
    p = slice(0, nr)
    q = slice(nr, ne)
    K = He[q, q]
    H_QP = He[q, p]
    lam_q = min(_nearest_to_zero(K), _nearest_to_zero(Ho), key=abs)
    R_bot_e = _lu_inverse(K)
    R_bot_o = _lu_inverse(Ho)
    X = R_bot_e @ H_QP
    W = H_QP.T @ X
    W = 0.5 * (W + W.T)
    R_eff = _lu_inverse(He[p, p] - W)
    F_PQ = -R_eff @ X.T
    F_QQ = R_bot_e + X @ R_eff @ X.T

    residuals = {
        "PP": _fro(G_e[p, p] - R_eff) / g_norm,
        "PQ": _fro(G_e[p, q] - F_PQ) / g_norm,
        "QP": _fro(G_e[q, p] - F_PQ.T) / g_norm,
        "QQ": math.hypot(_fro(G_e[q, q] - F_QQ), _fro(G_o - R_bot_o)) / g_norm,
    }
    return residuals, W, lam_q


def feshbach_residual(a: float, Z: float, xi: float, grid: Optional[CylGrid] = None) -> FeshbachReport:
    """Compare the four blocks of ``(H - xi)^{-1}`` with the Schur-complement formulas.

    ``P`` projects onto the lowest transverse mode, ``Q = 1 - P``.  With
    ``R_perp = (H_QQ - xi)^{-1}``, ``W = H_PQ R_perp H_QP`` and
    ``R_eff = (H_PP - W - xi)^{-1}`` the blocks are ``R_eff``,
    ``-R_eff H_PQ R_perp``, its transpose, and
    ``R_perp + R_perp H_QP R_eff H_PQ R_perp``.

    The potential is even in ``z``, so the mode-basis matrix splits exactly
    into cosine and sine sectors; the split is only used after checking the
    cross-sector coupling is at rounding level.  The sine sector lies inside
    ``Ran Q`` and is inverted twice as well, with different LAPACK routines.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"width must lie in (0, 1), got {a!r}")
    E1 = (math.pi / a) ** 2
    if not xi < E1:
        raise ValueError(f"probe energy must lie below the transverse threshold {E1:.17g}")
    grid = grid or feshbach_grid(a, Z)
    nr = grid.radial.n_nodes
    gap = _check_shift(a, Z, grid, xi)

    blocks, off, h_norm = _mode_blocks(a, Z, grid)
    if off > _PARITY_TOL * h_norm:
        raise ConvergenceFailure(f"transverse parity coupling {off:.3g} too large to split")

    with flush_subnormals():
        g_blocks = _feshbach_blocks(blocks, nr, xi)
    residuals, W, lam_q = g_blocks
    w_eigs = eigvalsh(W)
    return FeshbachReport(
        xi=xi,
        block_residuals=residuals,
        w_norm=float(np.max(np.abs(w_eigs))),
        r_bot_norm=1.0 / abs(lam_q),
        w_min_eig=float(w_eigs[0]),
        r_bot_bound=2.0 * a * a / (3.0 * math.pi**2),
        parity_split=True,
        meta={"a": a, "Z": Z, "grid": grid.to_dict(), "parity_coupling": off, "eigen_gap": gap},
    )


def w_matrix(a: float, Z: float, xi: float, grid: CylGrid) -> np.ndarray:
    """Dense ``W(xi) = H_PQ (H_QQ - xi)^{-1} H_QP`` on the radial nodes."""
    blocks, off, h_norm = _mode_blocks(a, Z, grid)
    if off > _PARITY_TOL * h_norm:
        raise ConvergenceFailure(f"transverse parity coupling {off:.3g} too large to split")
    He = blocks["even"]
    nr = grid.radial.n_nodes
    H_PQ = He[:nr, nr:]
    K = He[nr:, nr:] - xi * np.eye(He.shape[0] - nr)
    W = H_PQ @ np.linalg.solve(K, H_PQ.T)
    return 0.5 * (W + W.T)


def w_operator_norm(a: float, Z: float, xi: float, grid: Optional[CylGrid] = None, N: int = 1) -> float:
    """``||(L + alpha)^{-1/2} W(xi) (L + alpha)^{-1/2}||`` with ``alpha = -mu``.

    ``L`` is the discrete radial ``-Laplacian`` on the projected space.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"width must lie in (0, 1), got {a!r}")
    E1 = (math.pi / a) ** 2
    if not xi < E1:
        raise ValueError(f"probe energy must lie below the transverse threshold {E1:.17g}")
    grid = grid or feshbach_grid(a, Z)
    if Z == 0:
        return 0.0
    _check_shift(a, Z, grid, xi)
    with flush_subnormals():
        W = w_matrix(a, Z, xi, grid)
    alpha = -mu_value(N, Z)
    d, e = laplacian_tridiagonal(grid.radial)
    lam, q = eigh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    half = (q / np.sqrt(lam + alpha)) @ q.T
    op = half @ W @ half
    return float(np.max(np.abs(eigvalsh(0.5 * (op + op.T)))))


def w_operator_bound(a: float, Z: float, N: int = 1) -> float:
    """Right-hand side ``Gamma(1/4)^4 N^{3/2} a / (6 pi^3 sqrt(alpha)) (Z^2 + (N-1)^2/sqrt 2)``."""
    from .constants import G4

    alpha = -mu_value(N, Z)
    return G4 * N**1.5 * a / (6.0 * math.pi**3 * math.sqrt(alpha)) * (Z * Z + (N - 1) ** 2 / math.sqrt(2.0))


def transverse_gap(grid: CylGrid) -> float:
    """Smallest eigenvalue of ``-Laplacian`` restricted to ``Ran Q``.

    Dense: the bottom of this spectrum is a tight cluster far from zero,
    which defeats shift-invert Krylov iterations.
    """
    nr, nz = grid.shape
    if nr * (nz - 1) > 6000:
        raise InvalidGrid("transverse_gap uses dense matrices; at most 6000 unknowns in Ran Q")
    Lr = radial_laplacian_sparse(grid.radial)
    S = grid.sine_basis
    Qz = np.eye(nz) - np.outer(S[:, 0], S[:, 0])
    T = sp.kron(Lr, sp.identity(nz)) + sp.kron(sp.identity(nr), sp.csr_matrix(z_laplacian(grid)))
    Qm = sp.kron(sp.identity(nr), sp.csr_matrix(Qz))
    # restrict to Ran Q through the sine basis: drop the first mode
    U = sp.kron(sp.identity(nr), sp.csr_matrix(S[:, 1:]))
    TQ = (U.T @ (Qm @ T @ Qm) @ U).toarray()
    return float(eigh(0.5 * (TQ + TQ.T), eigvals_only=True, subset_by_index=(0, 0), driver="evr")[0])


def hardy_ratio(grid: CylGrid, psi: np.ndarray) -> float:
    """``(1/4) <psi, r^-2 psi> / <psi, -Laplacian psi>`` for a nodal vector (m = 0 sector)."""
    nr, nz = grid.shape
    psi = np.asarray(psi, dtype=float).reshape(nr, nz)
    r2 = grid.radial.nodes[:, None] ** 2 + grid.z[None, :] ** 2
    num = 0.25 * float(np.sum(psi * psi / r2))
    d, e = laplacian_tridiagonal(grid.radial.with_m(0))
    Lz = z_laplacian(grid)
    lr = d[:, None] * psi
    lr[:-1] += e[:, None] * psi[1:]
    lr[1:] += e[:, None] * psi[:-1]
    lap = lr + psi @ Lz.T
    return num / float(np.sum(psi * lap))


def export_coo(matrix, path) -> None:
    """Write a matrix as ``row col value`` lines (17 significant digits)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {format(float(coo.data[i]), '.17g')}\n")
