import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fringe_fcs import (BinGrid, Lattice, Snapshot, brute_force_probability, coarsen, correlator,
                        exact_probabilities, exact_probability, generating_function,
                        lambda_lattice_probability, partial_probability)
from fringe_fcs.binning import snapshot_matrix
from fringe_fcs.exceptions import DomainError, QuadratureError
from fringe_fcs.fcs import (OverlapKernel, QuadratureSpec, binned_pair_correlation,
                            theta_averaged_probability)
from fringe_fcs.physics import TWO_PI, default_state

from conftest import coarse_state, disjoint_state

WIDE = Lattice(-60.0, 60.0, 6145)


def orthogonal_state(n1, n2):
    """Clouds at ±6 that interfere after expansion but overlap only at 1e-16 initially."""
    return default_state(n1, n2, offset=6.0, lattice=WIDE)


class TestClosedForm:
    @pytest.mark.parametrize("n1, n2, k", [(1, 1, 2), (1, 2, 3), (2, 2, 2)])
    def test_matches_bruteforce_and_lambda(self, n1, n2, k):
        s = default_state(n1, n2)
        bins = BinGrid.uniform(s.lattice, k)
        for counts in snapshot_matrix(s.n, k):
            snap = Snapshot(counts)
            p = exact_probability(s, bins, snap)
            assert p == pytest.approx(brute_force_probability(s, bins, snap), abs=1e-6)
            assert p == pytest.approx(lambda_lattice_probability(s, bins, snap), abs=1e-8)

    @pytest.mark.parametrize("n1, n2, points", [(1, 1, 41), (2, 1, 41), (2, 2, 31)])
    def test_matches_direct_tensor_integration(self, n1, n2, points):
        s = coarse_state(n1, n2, points=points)
        bins = BinGrid.uniform(s.lattice, 2)
        snaps = snapshot_matrix(s.n, 2)
        exact = exact_probabilities(s, bins, snaps)
        tensor = np.array([brute_force_probability(s, bins, Snapshot(c), method="tensor") for c in snaps])
        separable = np.array([brute_force_probability(s, bins, Snapshot(c)) for c in snaps])
        np.testing.assert_allclose(tensor, separable, atol=1e-12)
        np.testing.assert_allclose(exact, tensor, atol=1e-6)

    def test_reference_value_three_bins(self):
        s = default_state(2, 1)
        bins = BinGrid.uniform(s.lattice, 3)
        p = exact_probability(s, bins, Snapshot([1, 1, 1]))
        assert p == pytest.approx(brute_force_probability(s, bins, Snapshot([1, 1, 1])), abs=1e-6)
        assert 0 < p < 1

    @pytest.mark.parametrize("n1, n2", [(1, 1), (1, 2), (2, 2), (1, 3), (3, 1)])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_normalised_on_simplex(self, n1, n2, k):
        s = default_state(n1, n2)
        bins = BinGrid.uniform(s.lattice, k)
        assert exact_probabilities(s, bins, snapshot_matrix(s.n, k)).sum() == pytest.approx(1.0, abs=1e-6)

    def test_one_bin_holds_both(self):
        s = default_state(1, 1)
        assert exact_probability(s, BinGrid.uniform(s.lattice, 1), Snapshot([2])) == pytest.approx(1, abs=1e-6)

    @given(st.lists(st.integers(0, 4), min_size=3, max_size=3).filter(lambda c: sum(c) != 3))
    @settings(max_examples=20, deadline=None)
    def test_wrong_total_is_exactly_zero(self, counts):
        s = default_state(1, 2)
        bins = BinGrid.uniform(s.lattice, 3)
        assert exact_probability(s, bins, Snapshot(counts)) == 0.0

    def test_lambda_lattice_has_no_superselection_shortcut(self):
        s = default_state(1, 1)
        bins = BinGrid.uniform(s.lattice, 2)
        assert abs(lambda_lattice_probability(s, bins, Snapshot([2, 1]))) < 1e-10
        assert abs(lambda_lattice_probability(s, bins, Snapshot([0, 1]))) < 1e-10

    def test_disjoint_clouds_stay_put(self):
        s = disjoint_state(2, 2)
        bins = BinGrid.uniform(s.lattice, 2)
        for counts in snapshot_matrix(4, 2):
            want = 1.0 if tuple(counts) == (2, 2) else 0.0
            assert brute_force_probability(s, bins, Snapshot(counts)) == pytest.approx(want, abs=1e-8)
            assert exact_probability(s, bins, Snapshot(counts)) == pytest.approx(want, abs=1e-8)

    @pytest.mark.parametrize("n1, n2", [(1, 2), (3, 1), (2, 2)])
    def test_swap_symmetry(self, n1, n2):
        s = default_state(n1, n2)
        bins = BinGrid.uniform(s.lattice, 3)
        snaps = snapshot_matrix(s.n, 3)
        np.testing.assert_allclose(exact_probabilities(s, bins, snaps),
                                   exact_probabilities(s.swapped(), bins, snaps), atol=1e-8)

    @pytest.mark.parametrize("n1, n2", [(1, 1), (1, 2), (2, 2)])
    def test_coarse_grain_consistency(self, n1, n2):
        s = default_state(n1, n2)
        fine = BinGrid.uniform(s.lattice, 4)
        coarse = fine.coarsen([0, 0, 1, 1])
        fine_snaps = snapshot_matrix(s.n, 4)
        p_fine = exact_probabilities(s, fine, fine_snaps)
        pushed = {}
        for counts, p in zip(fine_snaps, p_fine):
            key = tuple(coarsen(Snapshot(counts), [0, 0, 1, 1]).counts)
            pushed[key] = pushed.get(key, 0.0) + p
        for counts in snapshot_matrix(s.n, 2):
            assert pushed[tuple(counts)] == pytest.approx(exact_probability(s, coarse, Snapshot(counts)), abs=1e-8)

    def test_log_domain_for_larger_n(self):
        s = orthogonal_state(30, 30)
        bins = BinGrid.uniform(s.lattice, 3)
        p = exact_probabilities(s, bins, snapshot_matrix(60, 3))
        assert np.all(np.isfinite(p)) and np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-6)

    def test_norm_drift_follows_overlap(self):
        # non-orthogonal modes shift <Ψ|Ψ> by N1 N2 |ε|^2 with ε the scaled overlap
        s = default_state(30, 30, lattice=WIDE)
        bins = BinGrid.uniform(s.lattice, 3)
        total = exact_probabilities(s, bins, snapshot_matrix(60, 3)).sum()
        assert total - 1 == pytest.approx(s.n1 * s.n2 * s.overlap_scaled**2, rel=0.05)


class TestQuadrature:
    def test_gauss_legendre_agrees_with_periodic_rule(self):
        s = default_state(2, 1)
        bins = BinGrid.uniform(s.lattice, 3)
        snaps = snapshot_matrix(3, 3)
        gl = exact_probabilities(s, bins, snaps, QuadratureSpec(rule="gauss-legendre"))
        np.testing.assert_allclose(gl, exact_probabilities(s, bins, snaps), atol=1e-10)

    def test_under_resolved_panels_raise(self):
        s = default_state(2, 2)
        bins = BinGrid.uniform(s.lattice, 3)
        quad = QuadratureSpec(rule="gauss-legendre", theta_nodes=16, panel_nodes=2)
        with pytest.raises(QuadratureError):
            exact_probabilities(s, bins, snapshot_matrix(4, 3), quad)

    def test_periodic_rule_needs_enough_nodes(self):
        with pytest.raises(QuadratureError):
            QuadratureSpec(theta_nodes=16).nodes(20, 20)

    def test_gauss_legendre_weights_normalised(self):
        nodes, w = QuadratureSpec(rule="gauss-legendre").nodes(2, 3)
        assert len(nodes) == 64 * 5
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert nodes.min() > 0 and nodes.max() < TWO_PI * 5

    def test_node_count_floor(self):
        with pytest.raises(ValueError):
            QuadratureSpec(theta_nodes=8)


class TestOverlapKernel:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 20 * math.pi))
    def test_diagonal_is_binned_density(self, theta):
        s = default_state(2, 3)
        bins = BinGrid.uniform(s.lattice, 8)
        mu = OverlapKernel(s, bins)(theta, theta)
        assert np.all(np.abs(mu.imag) < 1e-12)
        assert np.all(mu.real > -1e-12)
        assert mu.real.sum() == pytest.approx(s.n, abs=2 * abs(s.overlap) + 1e-5)


class TestGeneratingFunction:
    def test_unit_at_zero(self):
        s = orthogonal_state(1, 1)
        assert abs(generating_function(s, BinGrid.uniform(s.lattice, 2), [0, 0]) - 1) < 1e-8

    @pytest.mark.parametrize("c", [0.3, 1.7, 5.0])
    def test_constant_tag_is_global_phase(self, c):
        s = orthogonal_state(2, 1)
        phi = generating_function(s, BinGrid.uniform(s.lattice, 3), [c, c, c])
        assert abs(phi - cmath.exp(1j * c * 3)) < 1e-8

    def test_fourier_sum_of_bruteforce(self):
        s = default_state(1, 1)
        bins = BinGrid.uniform(s.lattice, 2)
        lam = np.array([math.pi, 0.0])
        ref = sum(brute_force_probability(s, bins, Snapshot(c)) * cmath.exp(1j * lam @ c)
                  for c in snapshot_matrix(2, 2))
        assert abs(generating_function(s, bins, lam) - ref) < 1e-6

    def test_pair_correlation_from_finite_differences(self):
        s = default_state(1, 1)
        i0 = s.lattice.index_of(0.0)
        bins = BinGrid(s.lattice, np.array([0, i0 - 4, i0, i0 + 4, s.lattice.points - 1]))
        eps = 1e-3

        def phi(ea, eb):
            return generating_function(s, bins, [0.0, ea, eb, 0.0])

        mixed = (phi(eps, eps) - phi(eps, -eps) - phi(-eps, eps) + phi(-eps, -eps)) / (4 * eps * eps)
        want = binned_pair_correlation(s, bins, 1, 2)
        assert -mixed.real == pytest.approx(want, rel=1e-4)


class TestOracleDomains:
    def test_lambda_oracle_bin_limit(self):
        s = default_state(1, 1)
        with pytest.raises(DomainError):
            lambda_lattice_probability(s, BinGrid.uniform(s.lattice, 4), Snapshot([1, 1, 0, 0]))

    def test_lambda_oracle_aliasing(self):
        s = default_state(2, 2)
        with pytest.raises(DomainError, match="alias"):
            lambda_lattice_probability(s, BinGrid.uniform(s.lattice, 2), Snapshot([2, 2]),
                                       QuadratureSpec(lambda_nodes=4))

    def test_bruteforce_size_limit(self):
        s = default_state(3, 2)
        with pytest.raises(DomainError):
            brute_force_probability(s, BinGrid.uniform(s.lattice, 2), Snapshot([3, 2]))


class TestPartialAndCorrelator:
    def test_single_bin(self):
        s = default_state(7, 9)
        assert partial_probability(s, BinGrid.uniform(s.lattice, 1), Snapshot([16]), 0.4) == pytest.approx(1.0)

    def test_fair_two_bin_multinomial(self):
        s = default_state(1, 1)
        bins = BinGrid.uniform(s.lattice, 2)
        assert partial_probability(s, bins, Snapshot([1, 1]), 0.0) == pytest.approx(0.5, abs=1e-12)
        assert partial_probability(s, bins, Snapshot([2, 0]), 0.0) == pytest.approx(0.25, abs=1e-12)
        assert partial_probability(s, bins, Snapshot([0, 2]), 0.0) == pytest.approx(0.25, abs=1e-12)

    def test_partial_normalised(self):
        s = default_state(2, 2)
        bins = BinGrid.uniform(s.lattice, 3)
        total = sum(partial_probability(s, bins, Snapshot(c), 2.2) for c in snapshot_matrix(4, 3))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_mixture_approaches_exact_at_moderate_n(self):
        s = default_state(20, 20)
        bins = BinGrid.uniform(s.lattice, 4)
        snaps = snapshot_matrix(40, 4)
        exact = exact_probabilities(s, bins, snaps)
        for i in np.argsort(exact)[::-1][:10]:
            mix = theta_averaged_probability(s, bins, Snapshot(snaps[i]), nodes=64)
            assert mix == pytest.approx(exact[i], rel=0.02)

    def test_first_order_is_incoherent(self):
        s = default_state(3, 4)
        x = 1.25
        i = s.lattice.index_of(x)
        want = abs(s.mode1.values[i]) ** 2 + abs(s.mode2.values[i]) ** 2
        assert correlator(s, [x], 1) == pytest.approx(want, rel=1e-14)

    def test_second_order_bunching_coefficient(self):
        s = default_state(1, 1)
        i = s.lattice.index_of(0.0)
        p = abs(s.mode1.values[i] * s.mode2.values[i]) ** 2
        # ordered pairs: twice the same-cell probability density 2|φ1φ2|^2
        assert correlator(s, [0.0, 0.0], 2) == pytest.approx(4 * p, rel=1e-12)

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            correlator(default_state(1, 1), [0.0], 3)
