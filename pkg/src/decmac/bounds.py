"""Sawtooth upper bounds over the occupancy simplex.

Each internal slot keeps its own point set: the simplex-corner values (from
the full-knowledge solver, scaled by the slot weight) plus the occupancy
states visited by the search with their upper-bound values.  The sawtooth
projection interpolates a query occupancy against the corners and the single
best stored point; it is cheap, always dominated by the corner interpolation,
and tightens monotonically as points accumulate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .occupancy import OccupancyState

OCC_TOL = 1e-9       # L-inf tolerance for treating two occupancies as equal
PRUNE_CAP = 500      # stored points per slot before probe-based pruning
PRUNE_PROBES = 100


@dataclass
class BoundPoint:
    eta: OccupancyState
    value: float
    support: np.ndarray = field(init=False)
    support_probs: np.ndarray = field(init=False)
    corner_value: float = 0.0  # y0 at eta, filled by the owning set

    def __post_init__(self) -> None:
        self.support = self.eta.support
        self.support_probs = self.eta.dense[self.support]

    @property
    def deficit(self) -> float:
        """Nonnegative gap between the corner interpolation and the stored value."""
        return self.corner_value - self.value


class BoundPointSet:
    """Corner values plus visited (occupancy, upper bound) pairs for one slot."""

    def __init__(self, corner_values: np.ndarray):
        self.corner_values = np.asarray(corner_values, dtype=float)
        self.points: list[BoundPoint] = []

    def y0(self, eta: OccupancyState) -> float:
        """Upper bound from the simplex corners alone."""
        return float(self.corner_values @ eta.dense)

    def insert(self, eta: OccupancyState, value: float) -> None:
        """Add a visited point; duplicates keep the smaller value.

        Values above the corner interpolation are clamped down to it, which
        keeps every stored point consistent with the corner bound (such a
        point would otherwise never be the active one).
        """
        value = min(float(value), self.y0(eta))
        for pt in self.points:
            if pt.eta.linf_distance(eta) <= OCC_TOL:
                if value < pt.value:
                    pt.value = value
                return
        pt = BoundPoint(eta, value)
        pt.corner_value = self.y0(eta)
        self.points.append(pt)
        if len(self.points) > PRUNE_CAP:
            self.prune()

    # -- interpolation --------------------------------------------------------

    def sawtooth(self, eta: OccupancyState) -> float:
        """Best (lowest) sawtooth upper bound at ``eta``."""
        base = self.y0(eta)
        return base - self._max_correction(eta.dense)

    def sawtooth_component(self, eta: OccupancyState, ell: int) -> float:
        """Sawtooth value using only the ``ell``-th stored point."""
        pt = self.points[ell]  # raises IndexError for invalid ell
        ratio = float(np.min(eta.dense[pt.support] / pt.support_probs))
        return self.y0(eta) - pt.deficit * ratio

    def sawtooth_dense(self, dense: np.ndarray) -> np.ndarray:
        """Vectorized sawtooth over rows of a dense occupancy matrix."""
        flat = dense.reshape(-1, self.corner_values.size)
        base = flat @ self.corner_values
        if self.points:
            corr = np.zeros(flat.shape[0])
            for pt in self.points:
                ratios = np.min(flat[:, pt.support] / pt.support_probs, axis=1)
                np.maximum(corr, pt.deficit * ratios, out=corr)
            base = base - corr
        return base.reshape(dense.shape[: dense.ndim - 1] if dense.ndim > 1 else ())

    def _max_correction(self, dense_flat: np.ndarray) -> float:
        corr = 0.0
        for pt in self.points:
            ratio = float(np.min(dense_flat[pt.support] / pt.support_probs))
            corr = max(corr, pt.deficit * ratio)
        return corr

    # -- maintenance ------------------------------------------------------------

    def prune(self, rng: np.random.Generator | None = None, n_probes: int = PRUNE_PROBES) -> int:
        """Drop points that never give the active correction on probe occupancies.

        Pruning only loosens the bound, so validity is preserved.  Returns the
        number of points removed.
        """
        if not self.points:
            return 0
        rng = rng or np.random.default_rng(0)
        n = self.corner_values.size
        probes = rng.dirichlet(np.ones(n), size=n_probes)
        # every stored point is probed at its own occupancy as well
        probes = np.vstack([probes] + [pt.eta.dense for pt in self.points])
        keep = np.zeros(len(self.points), dtype=bool)
        for row in probes:
            best = 0.0
            best_ix = -1
            for ix, pt in enumerate(self.points):
                sup = row[pt.support]
                if np.any(pt.support_probs <= 0):  # pragma: no cover - guarded upstream
                    continue
                corr = pt.deficit * float(np.min(sup / pt.support_probs))
                if corr > best:
                    best = corr
                    best_ix = ix
            if best_ix >= 0:
                keep[best_ix] = True
        removed = int(np.count_nonzero(~keep))
        self.points = [pt for pt, k in zip(self.points, keep) if k]
        return removed

    def __len__(self) -> int:
        return len(self.points)


def interpolation_ratio(eta: OccupancyState, eta_l: OccupancyState) -> float:
    """Geometric interpolation coefficient: min_e eta(e)/eta_l(e) over eta_l's support."""
    support = eta_l.support
    return float(np.min(eta.dense[support] / eta_l.dense[support]))
