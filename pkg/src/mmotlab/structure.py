"""Structural analysis of couplings.

Splitting-set extraction, pairwise monotonicity checking, decomposition of
a plan into weighted graphs over the first axis, gradient-cluster twist
counting, order regions, and support comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import diff
from .core import (
    CostModel,
    Coupling,
    DualPotentials,
    InconsistentCouplingError,
    InvalidCertificateError,
    NondifferentiableCostError,
    ProductSpace,
    UndefinedRegionError,
    cost_tensor,
    eval_cost,
)

SUPPORT_TOL = 1e-10
MONO_TOL = 1e-9
GRAD_TOL = 1e-6


# ---------------------------------------------------------------------------
# Splitting sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplittingSetReport:
    """Finite-cost cells where the splitting inequality is tight."""

    cells: frozenset
    max_violation: float
    tol_split: float


def splitting_support(
    model: CostModel,
    space: ProductSpace,
    duals: DualPotentials,
    tol_split: float = 1e-9,
) -> SplittingSetReport:
    """All finite-cost cells with c - sum_i u_i within ``tol_split`` of zero.

    Raises ``InvalidCertificateError`` if some cell has a negative defect
    beyond tolerance (the potentials would not be admissible).
    """
    values = cost_tensor(model, space)
    total = np.zeros(space.shape)
    for j, u in enumerate(duals.values):
        shape = [1] * space.n
        shape[j] = -1
        total = total + u.reshape(shape)
    finite = np.isfinite(values)
    defect = np.where(finite, values - total, np.inf)
    worst = float(np.min(defect[finite])) if finite.any() else 0.0
    if worst < -tol_split:
        raise InvalidCertificateError(
            f"potentials overshoot the cost by {-worst:.3e}"
        )
    tight = np.argwhere(finite & (defect <= tol_split))
    cells = frozenset(tuple(int(i) for i in idx) for idx in tight)
    max_violation = (
        max((float(defect[idx]) for idx in cells), default=0.0) if cells else 0.0
    )
    return SplittingSetReport(cells, max_violation, tol_split)


# ---------------------------------------------------------------------------
# c-monotonicity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityViolation:
    cell_a: tuple
    cell_b: tuple
    positive_part: tuple  # axis indices swapped together with cell_a
    defect: float


def check_c_monotone(
    model: CostModel,
    cells,
    space: ProductSpace,
    tol_mono: float = MONO_TOL,
) -> list[MonotonicityViolation]:
    """Exhaustively test the pairwise exchange inequality on a cell set.

    For every unordered pair of cells and every nontrivial bipartition
    {P+, P-} of the axes, a violation is recorded when
    c(x) + c(xbar) - c(x+, xbar-) - c(xbar+, x-) exceeds ``tol_mono``.
    A +inf value on the swapped side never counts as a violation.
    """
    n = space.n
    if n > 6:
        raise ValueError("bipartition enumeration is limited to n <= 6 axes")
    cells = sorted(tuple(c) for c in cells)
    # P+ always contains axis 0, so each unordered bipartition appears once.
    partitions = [
        (0,) + rest
        for r in range(0, n - 1)
        for rest in itertools.combinations(range(1, n), r)
        if 0 < 1 + len(rest) < n
    ]
    violations = []
    for a, b in itertools.combinations(cells, 2):
        ca = eval_cost(model, space.point(a))
        cb = eval_cost(model, space.point(b))
        if not (math.isfinite(ca) and math.isfinite(cb)):
            raise ValueError("monotonicity check requires finite-cost cells")
        for plus in partitions:
            swap_ab = tuple(a[i] if i in plus else b[i] for i in range(n))
            swap_ba = tuple(b[i] if i in plus else a[i] for i in range(n))
            c1 = eval_cost(model, space.point(swap_ab))
            c2 = eval_cost(model, space.point(swap_ba))
            if not (math.isfinite(c1) and math.isfinite(c2)):
                continue
            defect = ca + cb - c1 - c2
            if defect > tol_mono:
                violations.append(MonotonicityViolation(a, b, plus, defect))
    return violations


# ---------------------------------------------------------------------------
# Graph decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Branch:
    """One graph value at one first-axis point."""

    target: tuple  # indices on axes 2..n
    alpha: float
    graph_label: int  # 1-based; assigned by lexicographic target coordinates


@dataclass(frozen=True)
class GraphDecomposition:
    """A plan written as sum_i alpha_i (Id x G_i)_# mu_1."""

    k: int
    branches: dict  # axis-1 index -> tuple of Branch, sorted by target coords
    space: ProductSpace

    def reconstruct(self) -> Coupling:
        """Rebuild the coupling from (alpha, targets, mu_1)."""
        mu1 = self.space.axes[0].weights
        entries = {}
        for i1, branches in self.branches.items():
            for br in branches:
                entries[(i1, *br.target)] = br.alpha * mu1[i1]
        return Coupling(entries, self.space)


def decompose_graphs(
    plan: Coupling,
    space: ProductSpace | None = None,
    tol_mass: float = SUPPORT_TOL,
) -> GraphDecomposition:
    """Split a plan into weighted single-valued graphs over the first axis.

    Branches at each first-axis point are ordered lexicographically by
    target coordinates; graph label j goes to the j-th branch.  The number
    of graphs k is the largest branch count over first-axis points.
    """
    space = space or plan.space
    mu1 = space.axes[0].weights
    fibres: dict[int, list] = {}
    for idx, m in plan.entries.items():
        if m <= tol_mass:
            continue
        fibres.setdefault(idx[0], []).append((idx[1:], m))
    branches = {}
    k = 0
    for i1, w in enumerate(mu1):
        if w <= tol_mass:
            continue
        if i1 not in fibres:
            raise InconsistentCouplingError(
                f"first-axis point {i1} has weight {w} but no support cell"
            )
        fibre = fibres[i1]
        coords = {
            tgt: tuple(float(v) for a, i in enumerate(tgt) for v in space.axes[a + 1].points[i])
            for tgt, _ in fibre
        }
        fibre.sort(key=lambda pair: coords[pair[0]])
        total = math.fsum(m for _, m in fibre)
        row = tuple(
            Branch(target=tgt, alpha=m / w, graph_label=pos + 1)
            for pos, (tgt, m) in enumerate(fibre)
        )
        if abs(total / w - 1.0) > 1e-10:
            raise InconsistentCouplingError(
                f"branch weights at first-axis point {i1} sum to {total / w}"
            )
        branches[i1] = row
        k = max(k, len(row))
    return GraphDecomposition(k=k, branches=branches, space=space)


# ---------------------------------------------------------------------------
# Twist multiplicity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradientCluster:
    axis1_index: int
    cells: tuple
    gradient: np.ndarray  # representative first-variable gradient


@dataclass(frozen=True)
class TwistReport:
    """Clusters of cells sharing a first-axis point and first-variable gradient.

    ``max_multiplicity`` is the empirical m of the m-twist condition.
    """

    clusters: tuple
    max_multiplicity: int
    witness: GradientCluster | None
    flagged_cells: tuple = field(default_factory=tuple)


def twist_multiplicity(
    model: CostModel,
    cells,
    space: ProductSpace,
    tol_grad: float = GRAD_TOL,
) -> TwistReport:
    """Group cells by first-axis point and cluster their gradients.

    Clustering is single-linkage: two cells join when their gradients are
    within ``tol_grad * (1 + max gradient norm)``.  Cells where the
    gradient is undefined are excluded and reported in ``flagged_cells``.
    """
    if isinstance(cells, SplittingSetReport):
        cells = cells.cells
    by_x1: dict[int, list] = {}
    flagged = []
    for cell in sorted(tuple(c) for c in cells):
        try:
            g = diff.grad_x1(model, space.point(cell))
        except NondifferentiableCostError:
            flagged.append(cell)
            continue
        by_x1.setdefault(cell[0], []).append((cell, g))
    clusters = []
    for i1 in sorted(by_x1):
        members = by_x1[i1]
        parent = list(range(len(members)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in itertools.combinations(range(len(members)), 2):
            ga, gb = members[a][1], members[b][1]
            radius = tol_grad * (1.0 + max(np.max(np.abs(ga)), np.max(np.abs(gb))))
            if np.max(np.abs(ga - gb)) <= radius:
                parent[find(a)] = find(b)
        groups: dict[int, list] = {}
        for a in range(len(members)):
            groups.setdefault(find(a), []).append(a)
        for group in groups.values():
            clusters.append(
                GradientCluster(
                    axis1_index=i1,
                    cells=tuple(members[a][0] for a in group),
                    gradient=members[group[0]][1],
                )
            )
    if clusters:
        witness = max(clusters, key=lambda cl: len(cl.cells))
        max_mult = len(witness.cells)
    else:
        witness = None
        max_mult = 0
    return TwistReport(
        clusters=tuple(clusters),
        max_multiplicity=max_mult,
        witness=witness,
        flagged_cells=tuple(flagged),
    )


# ---------------------------------------------------------------------------
# Order regions and support comparison
# ---------------------------------------------------------------------------

def region_of(point) -> tuple[int, ...]:
    """The permutation sorting a one-dimensional tuple ascending.

    Raises ``UndefinedRegionError`` for coincident coordinates.
    """
    coords = [float(np.atleast_1d(np.asarray(x, dtype=float))[0]) for x in point]
    if any(np.atleast_1d(np.asarray(x, dtype=float)).shape != (1,) for x in point):
        raise ValueError("order regions are defined for d = 1 only")
    if len(set(coords)) != len(coords):
        raise UndefinedRegionError(f"coincident coordinates in {coords}")
    return tuple(int(i) for i in np.argsort(coords))


def support_subset(
    plan_a: Coupling,
    plan_b: Coupling,
    tol_mass: float = SUPPORT_TOL,
):
    """Whether every above-threshold cell of ``plan_a`` lies in ``plan_b``.

    Returns ``(flag, witness)`` where the witness is a counterexample cell
    (or None).
    """
    if plan_a.space.shape != plan_b.space.shape:
        raise ValueError("plans live on different product grids")
    b_support = set(plan_b.entries)
    for idx in plan_a.support(tol_mass):
        if idx not in b_support:
            return False, idx
    return True, None
