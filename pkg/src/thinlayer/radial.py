"""Two-dimensional radial eigenproblems on a finite-volume grid.

The radial part of ``-Laplacian + V`` in angular sector ``m`` is discretised
on cells ``[b_i, b_{i+1}]`` of a graded (or uniform) partition of
``[0, rho_max]``.  Integrating the flux form over each cell gives a
tridiagonal pencil ``(K + diag(w (m^2/c^2 + V)), diag(w))`` with cell areas
``w_i = (b_{i+1}^2 - b_i^2)/2``.  In the variable ``u = sqrt(w) f`` it
becomes a symmetric tridiagonal matrix, the discrete counterpart of the
half-line reduction ``u = sqrt(rho) f``.  The outer face carries a Dirichlet
condition; the inner face has zero flux, which is the regularity condition
at the origin.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal, solve_banded

from .errors import ConvergenceFailure, InsufficientBoundStates, InvalidGrid
from .potentials import TabulatedPotential, potential_array, tabulate

RESIDUAL_TOL = 1e-8
_REFINE_STEPS = 3
DEFAULT_NODES = 2000


@dataclass(frozen=True)
class RadialGrid:
    """Cell partition of ``[0, rho_max]``.

    ``graded`` edges follow ``scale * expm1(beta x)`` on uniform ``x`` so that
    cells near the axis have width about ``scale * beta / n_nodes``.
    """

    rho_max: float
    n_nodes: int
    spacing: str = "graded"
    m: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.rho_max > 0 and math.isfinite(self.rho_max)):
            raise InvalidGrid(f"rho_max must be positive, got {self.rho_max!r}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 16:
            raise InvalidGrid(f"need at least 16 nodes, got {self.n_nodes!r}")
        if self.spacing not in ("graded", "uniform"):
            raise InvalidGrid(f"unknown spacing {self.spacing!r}")
        if int(self.m) != self.m:
            raise InvalidGrid(f"angular momentum must be an integer, got {self.m!r}")
        if not self.scale > 0:
            raise InvalidGrid(f"grading scale must be positive, got {self.scale!r}")

    @cached_property
    def edges(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n_nodes + 1)
        if self.spacing == "uniform":
            b = self.rho_max * x
        else:
            beta = math.log1p(self.rho_max / self.scale)
            b = self.scale * np.expm1(beta * x)
        b[0] = 0.0
        b[-1] = self.rho_max
        return b

    @cached_property
    def nodes(self) -> np.ndarray:
        b = self.edges
        return 0.5 * (b[1:] + b[:-1])

    @cached_property
    def weights(self) -> np.ndarray:
        b = self.edges
        return 0.5 * (b[1:] ** 2 - b[:-1] ** 2)

    def with_nodes(self, n_nodes: int) -> "RadialGrid":
        return RadialGrid(self.rho_max, n_nodes, self.spacing, self.m, self.scale)

    def with_m(self, m: int) -> "RadialGrid":
        return RadialGrid(self.rho_max, self.n_nodes, self.spacing, m, self.scale)

    def to_dict(self) -> dict:
        return {
            "rho_max": self.rho_max,
            "n_nodes": self.n_nodes,
            "spacing": self.spacing,
            "m": self.m,
            "scale": self.scale,
        }


def default_grid(Z: float, a: Optional[float] = None, n_nodes: int = DEFAULT_NODES, m: int = 0) -> RadialGrid:
    """Graded grid for charge ``Z``; with a width ``a`` the core is resolved on scale ``a``."""
    rho_max = max(200.0, 50.0 / Z)
    scale = 1.0 / Z if a is None else min(a, 1.0 / Z)
    return RadialGrid(rho_max=rho_max, n_nodes=n_nodes, spacing="graded", m=m, scale=scale)


def laplacian_tridiagonal(grid: RadialGrid, m: Optional[int] = None):
    """Symmetric tridiagonal ``(diag, offdiag)`` of ``-Laplacian`` in sector ``m``."""
    b, c, w = grid.edges, grid.nodes, grid.weights
    m = grid.m if m is None else m
    t = b[1:-1] / (c[1:] - c[:-1])
    diag = np.zeros_like(c)
    diag[:-1] += t
    diag[1:] += t
    diag[-1] += b[-1] / (b[-1] - c[-1])
    d = diag / w + (m * m) / c**2
    e = -t / np.sqrt(w[:-1] * w[1:])
    return d, e


def laplacian_dense(grid: RadialGrid, m: Optional[int] = None) -> np.ndarray:
    d, e = laplacian_tridiagonal(grid, m)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def _tri_matvec(d, e, x):
    y = d * x
    y[:-1] += e * x[1:]
    y[1:] += e * x[:-1]
    return y


def _refine(d, e, lam, x0):
    """Inverse iteration at a fixed shift followed by a Rayleigh quotient."""
    n = d.size
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[2, :-1] = e
    scale = max(1.0, abs(lam))
    x = x0 / np.linalg.norm(x0)
    shift = lam - 1e-13 * scale
    for _ in range(_REFINE_STEPS):
        ab[1] = d - shift
        try:
            y = solve_banded((1, 1), ab, x)
        except np.linalg.LinAlgError:
            break
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0:
            break
        x = y / nrm
    hx = _tri_matvec(d, e, x)
    lam = float(x @ hx)
    res = float(np.linalg.norm(hx - lam * x))
    return lam, x, res


def tridiagonal_lowest(d, e, k, edge=0.0, tol=RESIDUAL_TOL):
    """``k`` lowest eigenpairs of a symmetric tridiagonal matrix, all below ``edge``.

    Bisection on Sturm counts (LAPACK ``stebz``) followed by inverse
    iteration refinement of each pair.
    """
    n = d.size
    k_eff = min(k, n)
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k_eff - 1), tol=1e-15)
    below = int(np.count_nonzero(vals < edge))
    if below < k:
        raise InsufficientBoundStates(k, below, edge)
    out_v = np.empty(k)
    out_x = np.empty((n, k))
    out_r = np.empty(k)
    for j in range(k):
        lam, x, res = _refine(d, e, vals[j], vecs[:, j])
        out_v[j], out_x[:, j], out_r[j] = lam, x, res
    # refinement must not reorder or merge pairs
    order = np.argsort(out_v)
    out_v, out_x, out_r = out_v[order], out_x[:, order], out_r[order]
    if np.any(out_r > tol):
        raise ConvergenceFailure(f"eigenpair residuals {out_r.max():.3g} exceed {tol:g}")
    if np.any(out_v >= edge):
        raise InsufficientBoundStates(k, int(np.count_nonzero(out_v < edge)), edge)
    return out_v, out_x, out_r


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    grid: object
    potential_kind: str
    meta: dict = field(default_factory=dict, compare=False)
    vectors: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float)
        if ev.size > 1 and np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        res = np.array(self.residuals, dtype=float)
        if res.shape != ev.shape:
            raise ValueError("one residual per eigenvalue required")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "residuals", res)

    def __len__(self):
        return self.eigenvalues.size

    def to_dict(self) -> dict:
        grid = self.grid.to_dict() if hasattr(self.grid, "to_dict") else self.grid
        return {
            "potential_kind": self.potential_kind,
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "grid": grid,
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def csv_rows(self):
        yield ["index", "eigenvalue", "residual"]
        for i, (v, r) in enumerate(zip(self.eigenvalues, self.residuals)):
            yield [str(i), format(v, ".17g"), format(r, ".17g")]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.csv_rows())


def hydrogen2d_levels(Z: float, count: int) -> list:
    """Exact planar hydrogen levels ``-Z^2/(2n-1)^2``, ``n = 1..count``."""
    if not Z > 0:
        raise ValueError(f"charge must be positive, got {Z!r}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count!r}")
    return [-(Z * Z) / (2 * n - 1) ** 2 for n in range(1, count + 1)]


def _values_on(pot: TabulatedPotential, grid: RadialGrid) -> np.ndarray:
    c = grid.nodes
    if pot.matches(c):
        return np.asarray(pot.values)
    if pot.nodes[0] > c[0] * (1 + 1e-12) or pot.nodes[-1] < c[-1] * (1 - 1e-12):
        raise InvalidGrid("potential nodes do not cover the grid support")
    return np.asarray(pot.resample(c).values)


def solve_radial(pot: TabulatedPotential, grid: RadialGrid, k: int, charge: float = 1.0) -> EigenResult:
    """``k`` lowest levels of ``-Laplacian - charge * V`` in sector ``grid.m``.

    ``pot`` is re-tabulated on the grid nodes when it was sampled elsewhere.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")
    d, e = laplacian_tridiagonal(grid)
    d = d - charge * _values_on(pot, grid)
    vals, vecs, res = tridiagonal_lowest(d, e, k, edge=0.0)
    return EigenResult(
        eigenvalues=vals,
        residuals=res,
        grid=grid,
        potential_kind=pot.kind,
        meta={"a": pot.a, "charge": charge},
        vectors=vecs,
    )


def richardson(coarse, fine, order: int = 2):
    """Extrapolate a pair of values computed on grids ``n`` and ``2n``."""
    f = 2.0**order
    return (f * np.asarray(fine) - np.asarray(coarse)) / (f - 1.0)


def solve_extrapolated(kind: str, a: float, grid: RadialGrid, k: int, charge: float = 1.0) -> EigenResult:
    """Richardson-extrapolated levels from ``grid`` and its two-fold refinement."""
    fine_grid = grid.with_nodes(2 * grid.n_nodes)
    coarse = solve_radial(tabulate(kind, a, grid.nodes), grid, k, charge)
    fine = solve_radial(tabulate(kind, a, fine_grid.nodes), fine_grid, k, charge)
    ext = richardson(coarse.eigenvalues, fine.eigenvalues)
    order = np.argsort(ext)
    return EigenResult(
        eigenvalues=ext[order],
        residuals=fine.residuals[order],
        grid=fine_grid,
        potential_kind=kind,
        meta={
            "a": a,
            "charge": charge,
            "coarse": coarse.eigenvalues.tolist(),
            "fine": fine.eigenvalues.tolist(),
            "extrapolated": True,
        },
    )


def eff_levels_n1(a: float, Z: float, m: int = 0, k: int = 1, n_nodes: int = DEFAULT_NODES) -> EigenResult:
    """One-electron effective levels, transverse energy removed."""
    if not 0.0 < a < 1.0:
        raise ValueError(f"width must lie in (0, 1), got {a!r}")
    grid = default_grid(Z, a, n_nodes=n_nodes, m=m)
    return solve_extrapolated("en", a, grid, k, charge=Z)


def sandwich_norm(a: float, kind: str, grid: RadialGrid) -> float:
    """Largest eigenvalue of ``(L+2)^{-1/2} (1/rho - V^a) (L+2)^{-1/2}`` in sector ``grid.m``.

    ``L`` is the discrete ``-Laplacian``; the square root comes from a full
    eigendecomposition, so the grid is limited to 2000 cells.
    """
    if not 0.0 < a < 0.5:
        raise ValueError(f"width must lie in (0, 1/2), got {a!r}")
    if grid.n_nodes > 2000:
        raise InvalidGrid("sandwich_norm uses dense matrices; at most 2000 cells")
    c = grid.nodes
    diff = 1.0 / c - potential_array(kind, a, c)
    if not np.any(diff):
        return 0.0
    lam, q = eigh(laplacian_dense(grid, grid.m))
    if lam[0] <= -2.0:
        raise ConvergenceFailure("discrete Laplacian is not positive")
    half = (q / np.sqrt(lam + 2.0)) @ q.T
    op = half @ (diff[:, None] * half)
    top = eigh(op, eigvals_only=True, subset_by_index=(c.size - 1, c.size - 1))
    return float(top[0])


def sqrt_laplacian(grid: RadialGrid, m: int = 0) -> np.ndarray:
    lam, q = eigh(laplacian_dense(grid, m))
    return (q * np.sqrt(np.clip(lam, 0.0, None))) @ q.T


def kato_ratio(grid: RadialGrid, u: np.ndarray, root: Optional[np.ndarray] = None) -> float:
    """``<u, u/rho> / <u, sqrt(L) u>`` for a vector in the symmetric basis."""
    if root is None:
        root = sqrt_laplacian(grid)
    num = float(np.sum(u * u / grid.nodes))
    den = float(u @ root @ u)
    return num / den
