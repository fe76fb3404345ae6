import itertools
import math

import numpy as np
import pytest

from mmotlab import (
    Coulomb1D,
    Coupling,
    DiscreteMarginal,
    DualPotentials,
    InconsistentCouplingError,
    InvalidCertificateError,
    ProductSpace,
    ProductXYZ,
    TwoWell,
    UndefinedRegionError,
    check_c_monotone,
    decompose_graphs,
    region_of,
    solve_exact,
    splitting_support,
    support_subset,
    twist_multiplicity,
)
from mmotlab.experiments import twowell_space


def _uniform(points):
    n = len(points)
    return DiscreteMarginal(points, np.full(n, 1.0 / n))


class TestSplittingSupport:
    def test_solved_coulomb_triple(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        report = splitting_support(Coulomb1D(), space, result.duals)
        assert report.cells == frozenset(itertools.permutations((0, 1, 2)))
        assert report.max_violation <= report.tol_split

    def test_huge_negative_duals_empty(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        duals = DualPotentials([np.full(3, -1e6)] * 3)
        report = splitting_support(Coulomb1D(), space, duals)
        assert report.cells == frozenset()

    def test_overshooting_duals_rejected(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        duals = DualPotentials([np.full(3, 10.0)] * 3)
        with pytest.raises(InvalidCertificateError):
            splitting_support(Coulomb1D(), space, duals)

    def test_twowell_zero_duals_give_the_two_graphs(self):
        space = twowell_space(20)
        zero = DualPotentials([np.zeros(s) for s in space.shape])
        report = splitting_support(TwoWell(), space, zero, tol_split=1e-12)
        pts = [ax.points[:, 0] for ax in space.axes]
        expected = set()
        for i, x in enumerate(pts[0]):
            for j, y in enumerate(pts[1]):
                for k, z in enumerate(pts[2]):
                    on_graph1 = math.isclose(y, x, abs_tol=1e-12) and math.isclose(
                        z, x, abs_tol=1e-12
                    )
                    on_graph2 = math.isclose(y, x, abs_tol=1e-12) and math.isclose(
                        z, x + 0.5, abs_tol=1e-12
                    )
                    if on_graph1 or on_graph2:
                        expected.add((i, j, k))
        assert report.cells == frozenset(expected)

    def test_contains_solver_support(self):
        m = _uniform([0.0, 0.3, 0.7, 1.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        report = splitting_support(Coulomb1D(), space, result.duals)
        assert set(result.plan.support()) <= report.cells


class TestCheckCMonotone:
    def test_singleton_no_violations(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        assert check_c_monotone(Coulomb1D(), {(0, 1, 2)}, space) == []

    def test_xyz_known_violation(self):
        m = DiscreteMarginal([0.2, 0.8], [0.5, 0.5])
        space = ProductSpace([m, m, m])
        violations = check_c_monotone(ProductXYZ(), {(0, 0, 0), (1, 1, 1)}, space)
        assert violations, "the diagonal pair must violate the exchange inequality"
        # swapping only the first axis: 0.2^3 + 0.8^3 > 2 * 0.2 * 0.8 * ...
        defects = {v.positive_part: v.defect for v in violations}
        assert (0,) in defects
        assert defects[(0,)] == pytest.approx(0.52 - 0.16, abs=1e-12)

    def test_solver_support_is_monotone(self):
        m = _uniform([0.0, 0.25, 0.5, 0.75, 1.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        assert check_c_monotone(Coulomb1D(), result.plan.support(), space) == []

    def test_infinite_swap_side_skipped(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m, m])
        # swapping (0,1) and (1,0) puts both on the diagonal: cost +inf,
        # which never counts as a violation
        assert check_c_monotone(Coulomb1D(), {(0, 1), (1, 0)}, space) == []

    def test_too_many_axes_rejected(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m] * 7)
        with pytest.raises(ValueError, match="n <= 6"):
            check_c_monotone(Coulomb1D(), set(), space)


class TestDecomposeGraphs:
    def test_single_bijection(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        entries = {(0, 1, 2): 1 / 3, (1, 2, 0): 1 / 3, (2, 0, 1): 1 / 3}
        decomp = decompose_graphs(Coupling(entries, space))
        assert decomp.k == 1
        for branches in decomp.branches.values():
            assert len(branches) == 1
            assert branches[0].alpha == pytest.approx(1.0)
            assert branches[0].graph_label == 1

    def test_two_branch_fibres(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m, m])
        plan = Coupling({(0, 0): 0.25, (0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.25}, space)
        decomp = decompose_graphs(plan)
        assert decomp.k == 2
        for branches in decomp.branches.values():
            assert [b.alpha for b in branches] == pytest.approx([0.5, 0.5])
            assert [b.graph_label for b in branches] == [1, 2]

    def test_labels_sorted_by_target_coordinates(self):
        m = DiscreteMarginal([2.0, 1.0], [0.5, 0.5])  # descending points
        space = ProductSpace([_uniform([0.0]), m])
        plan = Coupling({(0, 0): 0.5, (0, 1): 0.5}, space)
        decomp = decompose_graphs(plan)
        targets = [b.target for b in decomp.branches[0]]
        assert targets == [(1,), (0,)]  # coordinate 1.0 before 2.0

    def test_reconstruct_round_trip(self):
        m = _uniform([0.0, 0.5, 1.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        decomp = decompose_graphs(result.plan)
        rebuilt = decompose_graphs(decomp.reconstruct())
        assert decomp.branches.keys() == rebuilt.branches.keys()
        for i1 in decomp.branches:
            a = [(b.target, b.graph_label) for b in decomp.branches[i1]]
            b = [(b.target, b.graph_label) for b in rebuilt.branches[i1]]
            assert a == b
        for idx, mass in result.plan.entries.items():
            assert decomp.reconstruct().mass(idx) == pytest.approx(mass, abs=1e-12)

    def test_missing_fibre_rejected(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m, m])
        # a positive-weight first-axis point with no mass anywhere is not a
        # coupling of mu_1; the constructor only checks total mass, so this
        # sneaks through until decomposition
        plan = Coupling({(1, 0): 0.5, (1, 1): 0.5}, space)
        with pytest.raises(InconsistentCouplingError, match="no support cell"):
            decompose_graphs(plan)

    def test_zero_weight_fibres_skipped(self):
        m1 = DiscreteMarginal([0.0, 1.0], [0.0, 1.0])
        m2 = _uniform([0.0, 1.0])
        space = ProductSpace([m1, m2])
        plan = Coupling({(1, 0): 0.5, (1, 1): 0.5}, space)
        decomp = decompose_graphs(plan)
        assert list(decomp.branches) == [1]
        assert decomp.k == 2


class TestTwistMultiplicity:
    def test_symmetric_swap_cluster(self):
        m = _uniform([0.0, 1.0, 2.0])
        space = ProductSpace([m, m, m])
        report = twist_multiplicity(Coulomb1D(), {(0, 1, 2), (0, 2, 1)}, space)
        assert report.max_multiplicity == 2
        assert report.witness is not None
        assert set(report.witness.cells) == {(0, 1, 2), (0, 2, 1)}
        assert report.witness.gradient[0] == pytest.approx(1.25)

    def test_distinct_gradients_stay_apart(self):
        m = _uniform([0.0, 1.0, 2.0, 3.0])
        space = ProductSpace([m, m, m])
        report = twist_multiplicity(Coulomb1D(), {(0, 1, 2), (0, 1, 3)}, space)
        assert report.max_multiplicity == 1

    def test_nondifferentiable_cells_flagged(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m, m])
        report = twist_multiplicity(Coulomb1D(), {(0, 0), (0, 1)}, space)
        assert report.flagged_cells == ((0, 0),)
        assert report.max_multiplicity == 1

    def test_invariant_under_relabeling_of_later_axes(self):
        m = _uniform([0.0, 0.4, 1.1, 2.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        split = splitting_support(Coulomb1D(), space, result.duals)
        base = twist_multiplicity(Coulomb1D(), split, space)
        swapped = {(c[0], c[2], c[1]) for c in split.cells}
        other = twist_multiplicity(Coulomb1D(), swapped, space)
        assert base.max_multiplicity == other.max_multiplicity

    def test_graph_count_bounded_by_multiplicity(self):
        m = _uniform([0.0, 0.25, 0.5, 0.75, 1.0])
        space = ProductSpace([m, m, m])
        result = solve_exact(Coulomb1D(), space)
        split = splitting_support(Coulomb1D(), space, result.duals)
        twist = twist_multiplicity(Coulomb1D(), split, space)
        k = decompose_graphs(result.plan).k
        assert k <= twist.max_multiplicity

    def test_empty_cells(self):
        m = _uniform([0.0, 1.0])
        space = ProductSpace([m, m])
        report = twist_multiplicity(Coulomb1D(), set(), space)
        assert report.max_multiplicity == 0 and report.witness is None


class TestRegionOf:
    def test_identity(self):
        assert region_of(([0.0], [1.0], [2.0])) == (0, 1, 2)

    def test_swap(self):
        assert region_of(([1.0], [0.0], [2.0])) == (1, 0, 2)

    def test_coincident_rejected(self):
        with pytest.raises(UndefinedRegionError):
            region_of(([1.0], [1.0], [2.0]))

    def test_multidimensional_rejected(self):
        with pytest.raises(ValueError, match="d = 1"):
            region_of(([0.0, 0.0], [1.0, 1.0]))


class TestSupportSubset:
    def setup_method(self):
        m = _uniform([0.0, 1.0])
        self.space = ProductSpace([m, m])

    def test_plan_vs_itself(self):
        plan = Coupling({(0, 1): 0.5, (1, 0): 0.5}, self.space)
        flag, witness = support_subset(plan, plan)
        assert flag and witness is None

    def test_single_cell_inside_product(self):
        delta = Coupling({(0, 0): 1.0}, self.space)
        product = Coupling(
            {(i, j): 0.25 for i in range(2) for j in range(2)}, self.space
        )
        flag, witness = support_subset(delta, product)
        assert flag and witness is None

    def test_witness_on_failure(self):
        a = Coupling({(0, 1): 0.5, (1, 0): 0.5}, self.space)
        b = Coupling({(0, 0): 0.5, (1, 1): 0.5}, self.space)
        flag, witness = support_subset(a, b)
        assert not flag and witness == (0, 1)

    def test_shape_mismatch_rejected(self):
        m3 = _uniform([0.0, 1.0, 2.0])
        other = ProductSpace([m3, m3])
        a = Coupling({(0, 1): 0.5, (1, 0): 0.5}, self.space)
        b = Coupling({(0, 1): 1.0}, other)
        with pytest.raises(ValueError, match="different product grids"):
            support_subset(a, b)
