"""Module to test the stats.py file."""
from unittest import TestCase

import numpy as np

from attribute_fusion.exceptions import ValidationException
from attribute_fusion.stats import (ContingencyTable, contingency_table,
                                    entropy, mutual_information,
                                    pairwise_mutual_information,
                                    rank_relevance, select_relevant)
from tests.helpers import (get_catalog_mocked, get_labels_mocked,
                           get_spec_mocked)


class TestEntropy(TestCase):
    """Tests for the entropy of count vectors."""

    def test_fair_binary(self):
        """Test a fair binary variable has one bit."""
        self.assertEqual(entropy([5, 5]), 1.0)

    def test_deterministic(self):
        """Test a single state has no entropy."""
        self.assertEqual(entropy([10]), 0.0)

    def test_skewed(self):
        """Test [3, 1] against the hand-computed value."""
        self.assertAlmostEqual(entropy([3, 1]), 0.8113, places=4)

    def test_zero_counts_are_ignored(self):
        """Test that 0 log 0 counts as 0."""
        self.assertEqual(entropy([4, 0, 4]), 1.0)

    def test_all_zero(self):
        """Test an all-zero vector is rejected."""
        with self.assertRaises(ValidationException):
            entropy([0, 0])


class TestMutualInformation(TestCase):
    """Tests for the plug-in mutual information."""

    def test_independent(self):
        """Test an independent table has zero MI."""
        table = ContingencyTable(['a', 'b'], ['x', 'y'], [[1, 1], [1, 1]])
        self.assertEqual(mutual_information(table), 0.0)

    def test_perfectly_dependent(self):
        """Test a diagonal table carries one bit."""
        table = ContingencyTable(['a', 'b'], ['x', 'y'], [[3, 0], [0, 3]])
        self.assertAlmostEqual(mutual_information(table), 1.0, places=12)

    def test_partial_dependence(self):
        """Test [[2, 1], [1, 2]] against the hand-computed value."""
        table = ContingencyTable(['a', 'b'], ['x', 'y'], [[2, 1], [1, 2]])
        self.assertAlmostEqual(mutual_information(table), 0.0817, places=4)

    def test_empty_table(self):
        """Test MI needs at least one counted record."""
        table = ContingencyTable(['a'], ['x'], [[0]])
        with self.assertRaises(ValidationException):
            mutual_information(table)

    def test_negative_counts(self):
        """Test negative counts are rejected."""
        with self.assertRaises(ValidationException):
            ContingencyTable(['a'], ['x', 'y'], [[1, -1]])

    def test_symmetry_and_bounds(self):
        """Test MI is symmetric and bounded by both marginal entropies."""
        rng = np.random.default_rng(7)
        for _ in range(200):
            shape = tuple(rng.integers(1, 6, 2))
            counts = rng.integers(0, 6, shape)
            counts[0, 0] += 1
            table = ContingencyTable(range(shape[0]), range(shape[1]),
                                     counts)
            value = mutual_information(table)
            self.assertEqual(value, mutual_information(table.transpose()))
            self.assertGreaterEqual(value, 0.0)
            bound = min(entropy(table.row_marginal()),
                        entropy(table.column_marginal()))
            self.assertLessEqual(value, bound + 1e-12)

    def test_copy_equals_entropy(self):
        """Test the MI of a variable with its copy is its entropy."""
        rng = np.random.default_rng(3)
        values = list(rng.choice(['a', 'b', 'c', 'd'], 500))
        table = contingency_table(values, values)
        self.assertAlmostEqual(mutual_information(table),
                               entropy(table.row_marginal()), delta=1e-12)


class TestContingencyTable(TestCase):
    """Tests for building tables from value sequences."""

    def test_pairwise_deletion(self):
        """Test records missing either value are excluded and counted."""
        first = ['a', None, 'b', 'a', 'b']
        second = ['x', 'y', None, 'x', 'y']
        table = contingency_table(first, second)
        self.assertEqual(table.rows, ['a', 'b'])
        self.assertEqual(table.columns, ['x', 'y'])
        self.assertEqual(table.counts.tolist(), [[2, 0], [0, 1]])
        self.assertEqual(table.excluded, 2)
        self.assertEqual(table.total + table.excluded, len(first))

    def test_length_mismatch(self):
        """Test sequences of different lengths are rejected."""
        with self.assertRaises(ValidationException):
            contingency_table(['a'], ['x', 'y'])

    def test_transpose(self):
        """Test the transpose swaps labels and counts."""
        table = ContingencyTable(['a', 'b'], ['x'], [[1], [2]])
        transposed = table.transpose()
        self.assertEqual(transposed.rows, ['x'])
        self.assertEqual(transposed.counts.tolist(), [[1, 2]])

    def test_pairwise_mutual_information(self):
        """Test every unordered pair gets one weight."""
        columns = {'b': ['x', 'y', 'x'], 'a': ['p', 'q', 'p'],
                   'c': [None, None, None]}
        weights = pairwise_mutual_information(columns)
        self.assertEqual(sorted(weights), [('a', 'b'), ('a', 'c'),
                                           ('b', 'c')])
        self.assertEqual(weights[('a', 'c')], 0.0)
        self.assertGreater(weights[('a', 'b')], 0.9)


class TestSelectRelevant(TestCase):
    """Tests for the relevance ranking of local characteristics."""

    def setUp(self):
        """Build a catalog with two copies of the target and a noisy one."""
        rng = np.random.default_rng(11)
        target = list(rng.choice(['coke zero', 'fanta'], 60))
        noise = list(rng.choice(['u', 'v'], 60))
        rows = []
        for index, label in enumerate(target):
            rows.append((f'p{index}',
                         {'zeta': label, 'alpha': label.upper(),
                          'gamma': noise[index]}, []))
        self.catalog = get_catalog_mocked(rows)
        self.labels = get_labels_mocked(
            labels={f'p{index}': label for index, label in enumerate(target)})
        self.spec = get_spec_mocked()

    def test_ties_are_lexicographic(self):
        """Test equally relevant characteristics come out sorted by name."""
        selected = select_relevant(self.catalog, self.labels, self.spec, 2)
        self.assertEqual(selected, ['alpha', 'zeta'])

    def test_eta_equals_m(self):
        """Test eta = M returns every characteristic, copies first."""
        selected = select_relevant(self.catalog, self.labels, self.spec, 3)
        self.assertEqual(selected, ['alpha', 'zeta', 'gamma'])

    def test_invalid_eta(self):
        """Test eta must be within 1..M."""
        for eta in (0, -1, 4):
            with self.assertRaises(ValidationException):
                select_relevant(self.catalog, self.labels, self.spec, eta)

    def test_unlabeled_records_are_ignored(self):
        """Test only labeled records enter the ranking."""
        labels = self.labels.subset(['p0', 'p1', 'p2', 'p3'])
        ranking = rank_relevance(
            {'zeta': self.catalog.column('zeta', labels.ids()),
             'brand': [labels.get(record_id) for record_id in labels.ids()]},
            'brand')
        self.assertEqual([name for name, _ in ranking], ['zeta'])

    def test_copy_ranks_first(self):
        """Test an exact copy of the target reaches H(target)."""
        columns = {'brand': [self.labels.get(record_id)
                             for record_id in self.catalog.ids()],
                   'zeta': self.catalog.column('zeta'),
                   'gamma': self.catalog.column('gamma')}
        ranking = rank_relevance(columns, 'brand')
        self.assertEqual(ranking[0][0], 'zeta')
        target_entropy = entropy(np.unique(columns['brand'],
                                           return_counts=True)[1])
        self.assertAlmostEqual(ranking[0][1], target_entropy, delta=1e-12)
