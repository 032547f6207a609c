"""Width sweeps, ``a|ln a|`` rate fits and eigenvalue localization windows."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import LayerConfig, alog, localization_window
from .errors import DegenerateFit, ThinLayerError
from .layer import default_cyl_grid, full_vs_eff_gap
from .parallel import ordered_map
from .radial import DEFAULT_NODES, EigenResult, eff_levels_n1

FIT_MAX_WIDTH = 0.2
MIN_FIT_ENTRIES = 4
QUALITY_GATE = 0.15


@dataclass(frozen=True)
class Entry:
    a: float
    value: float
    reference: float
    error: float
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FitResult:
    c: float
    quality: float
    c1: float
    c2: float
    quality2: float
    gate_model: str

    @property
    def gate_quality(self) -> float:
        return self.quality if self.gate_model == "one-term" else self.quality2

    def as_dict(self) -> dict:
        return {
            "c": self.c,
            "quality": self.quality,
            "c1": self.c1,
            "c2": self.c2,
            "quality2": self.quality2,
            "gate_model": self.gate_model,
            "gate_quality": self.gate_quality,
        }


@dataclass
class ConvergenceReport:
    """Per-width errors against a reference level, sorted by width descending."""

    entries: list
    kind: str = "eff"
    Z: float = 1.0
    fit: Optional[FitResult] = None
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: -e.a)
        if any(e.error < 0 for e in self.entries):
            raise ValueError("errors must be nonnegative")
        usable = [e for e in self.entries if e.a <= FIT_MAX_WIDTH and e.error > 0]
        if self.fit is None and len(usable) >= MIN_FIT_ENTRIES:
            try:
                self.fit = fit_alog(self)
            except DegenerateFit:
                self.fit = None

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    @property
    def widths(self) -> np.ndarray:
        return np.array([e.a for e in self.entries])

    @property
    def errors(self) -> np.ndarray:
        return np.array([e.error for e in self.entries])

    @property
    def fitted_c(self) -> Optional[float]:
        return None if self.fit is None else self.fit.c

    @property
    def fit_quality(self) -> Optional[float]:
        return None if self.fit is None else self.fit.quality

    @property
    def errors_decreasing(self) -> bool:
        err = self.errors
        return bool(err.size >= 2 and np.all(np.diff(err) < 0))

    @property
    def monotone(self) -> bool:
        """Absolute eigenvalues strictly decrease as the width grows."""
        lam = np.array([e.value + (math.pi / e.a) ** 2 for e in self.entries])
        return bool(lam.size >= 2 and np.all(np.diff(lam) > 0))

    def model_error(self, a: float) -> Optional[float]:
        if self.fit is None:
            return None
        if self.fit.gate_model == "one-term":
            return self.fit.c * alog(a)
        return self.fit.c1 * alog(a) + self.fit.c2 * a

    def csv_rows(self):
        yield ["a", "lambda", "reference", "error", "model_error"]
        for e in self.entries:
            me = self.model_error(e.a)
            yield [
                format(e.a, ".17g"),
                format(e.value, ".17g"),
                format(e.reference, ".17g"),
                format(e.error, ".17g"),
                "" if me is None else format(me, ".17g"),
            ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.csv_rows())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "Z": self.Z,
            "entries": [
                {"a": e.a, "lambda": e.value, "reference": e.reference, "error": e.error, **e.extra}
                for e in self.entries
            ],
            "fit": None if self.fit is None else self.fit.as_dict(),
            "errors_decreasing": self.errors_decreasing,
            "monotone": self.monotone,
            "partial": self.partial,
            "failures": list(self.failures),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def fit_alog(report: ConvergenceReport) -> FitResult:
    """Least-squares fits ``err ~ c a|ln a|`` and ``err ~ c1 a|ln a| + c2 a``.

    Only widths ``a <= 0.2`` enter.  The quality of a fit is the largest
    relative deviation of the data from the model; the gate uses the
    one-term model when it meets 15% and the two-term model otherwise.
    """
    pts = [(e.a, e.error) for e in report.entries if e.a <= FIT_MAX_WIDTH]
    if len(pts) < MIN_FIT_ENTRIES:
        raise DegenerateFit(f"need {MIN_FIT_ENTRIES} entries with a <= {FIT_MAX_WIDTH}, got {len(pts)}")
    a = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.all(err <= 1e-12):
        raise DegenerateFit("all errors vanish; nothing to fit")
    if np.any(err <= 0):
        raise DegenerateFit("errors must be positive for a relative fit quality")
    x = a * np.abs(np.log(a))
    c = float(x @ err / (x @ x))
    q1 = float(np.max(np.abs(err - c * x) / err))
    M = np.column_stack([x, a])
    (c1, c2), *_ = np.linalg.lstsq(M, err, rcond=None)
    q2 = float(np.max(np.abs(err - M @ np.array([c1, c2])) / err))
    gate = "one-term" if q1 <= QUALITY_GATE else "two-term"
    return FitResult(c=c, quality=q1, c1=float(c1), c2=float(c2), quality2=q2, gate_model=gate)


def _check_widths(a_values, upper=0.5):
    a_values = [float(a) for a in a_values]
    if len(a_values) < MIN_FIT_ENTRIES:
        raise ValueError(f"need at least {MIN_FIT_ENTRIES} widths, got {len(a_values)}")
    if any(not 0.0 < a < upper for a in a_values):
        raise ValueError(f"widths must lie in (0, {upper})")
    return a_values


def _run_entries(job, a_values, threads):
    def guarded(a):
        try:
            return job(a)
        except ThinLayerError as exc:
            return exc

    out = ordered_map(guarded, a_values, threads)
    entries, failures = [], []
    for a, res in zip(a_values, out):
        if isinstance(res, Exception):
            failures.append({"a": a, "error": type(res).__name__, "message": str(res)})
        else:
            entries.append(res)
    return entries, failures


def sweep_eff(
    a_values: Sequence[float], Z: float = 1.0, *, n_nodes: int = DEFAULT_NODES, threads: Optional[int] = None
) -> ConvergenceReport:
    """Ground level of the one-electron effective operator against ``-Z^2``."""
    a_values = _check_widths(a_values)
    ref = -Z * Z

    def job(a):
        lam = float(eff_levels_n1(a, Z, m=0, k=1, n_nodes=n_nodes).eigenvalues[0])
        return Entry(a=a, value=lam, reference=ref, error=abs(lam - ref))

    entries, failures = _run_entries(job, a_values, threads)
    return ConvergenceReport(entries=entries, kind="eff", Z=Z, failures=failures)


def sweep_layer(
    a_values: Sequence[float],
    Z: float = 1.0,
    *,
    nr: int = 800,
    nz: int = 32,
    threads: Optional[int] = None,
) -> ConvergenceReport:
    """Layer ground level minus ``(pi/a)^2`` against ``-Z^2``; also records the
    gap to the grid-consistent effective level and the effective-vs-planar error."""
    a_values = _check_widths(a_values)
    ref = -Z * Z

    def job(a):
        gap = full_vs_eff_gap(a, Z, default_cyl_grid(a, Z, nr=nr, nz=nz))
        return Entry(
            a=a,
            value=gap["full"],
            reference=ref,
            error=abs(gap["full"] - ref),
            extra={"eff": gap["eff"], "gap": gap["gap"], "eff_error": abs(gap["eff"] - ref)},
        )

    entries, failures = _run_entries(job, a_values, threads)
    return ConvergenceReport(entries=entries, kind="layer", Z=Z, failures=failures)


@dataclass(frozen=True)
class Localization:
    window: tuple
    count_inside: int
    expected: int
    certified: bool
    isolated: bool
    bound: dict

    def as_dict(self) -> dict:
        return {
            "window": list(self.window),
            "count_inside": self.count_inside,
            "expected": self.expected,
            "certified": self.certified,
            "isolated": self.isolated,
            "bound": self.bound,
        }


def planar_levels_with_multiplicity(Z: float, upper: float = 0.0, n_max: int = 200) -> list:
    """Planar hydrogen levels ``-Z^2/(2n-1)^2`` repeated ``2n-1`` times, below ``upper``."""
    out = []
    for n in range(1, n_max + 1):
        lev = -(Z * Z) / (2 * n - 1) ** 2
        if lev >= upper:
            break
        out.extend([lev] * (2 * n - 1))
    return out


def localize(
    lambda_2d: float,
    d: float,
    a: float,
    cfg: LayerConfig,
    spectrum,
    reference: Optional[Sequence[float]] = None,
) -> Localization:
    """Count layer eigenvalues in ``(lambda + N E_1 - d, lambda + N E_1 + d)``.

    ``spectrum`` holds absolute layer eigenvalues (an :class:`EigenResult` or
    a sequence, repeated by multiplicity).  ``reference`` is the planar
    spectrum with multiplicity; for ``N = 1`` it defaults to the exact
    hydrogen levels.  Never raises on an uncertified width.
    """
    if not d > 0:
        raise ValueError(f"half-gap must be positive, got {d!r}")
    shift = cfg.transverse_energy
    lo, hi = lambda_2d + shift - d, lambda_2d + shift + d
    vals = np.asarray(spectrum.eigenvalues if isinstance(spectrum, EigenResult) else spectrum, dtype=float)
    count = int(np.count_nonzero((vals > lo) & (vals < hi)))
    if reference is None:
        if cfg.N != 1:
            raise ValueError("reference spectrum required for N > 1")
        reference = planar_levels_with_multiplicity(cfg.Z, upper=lambda_2d + 2 * d + 1e-12)
    ref = np.asarray(reference, dtype=float)
    expected = int(np.count_nonzero((ref > lambda_2d - d) & (ref < lambda_2d + d)))
    distinct = np.unique(ref)
    others = distinct[np.abs(distinct - lambda_2d) > 1e-12]
    isolated = bool(others.size == 0 or d < 0.5 * np.min(np.abs(others - lambda_2d)))
    win = localization_window(d, a, cfg)
    certified = bool(win.valid and count == expected)
    return Localization(
        window=(lo, hi),
        count_inside=count,
        expected=expected,
        certified=certified,
        isolated=isolated,
        bound=win.as_dict(),
    )
