"""Module to test the tbn.py file."""
import math
from itertools import combinations, product
from unittest import TestCase

import networkx as nx
import numpy as np
import pytest

from attribute_fusion import settings
from attribute_fusion.exceptions import ModelException, ValidationException
from attribute_fusion.ingest import random_tree_network, sample_network
from attribute_fusion.tbn import (EXHAUSTIVE, WeightedGraph,
                                  brute_force_posterior, exact_marginal,
                                  fit_cpts, infer_posterior, joint_probability,
                                  joint_table, learn_cpts, learn_structure,
                                  max_spanning_tree, orient_tree,
                                  penalized_log_likelihood, total_weight,
                                  tree_to_string)
from tests.helpers import (get_catalog_mocked, get_labels_mocked,
                           get_random_net, get_spec_mocked, get_tree_net)


def sampled_columns(net, count, seed):
    """Return node -> list of state labels drawn from a network."""
    samples = sample_network(net, count, np.random.default_rng(seed))
    return {node: np.array(net.states[node])[indices].tolist()
            for node, indices in samples.items()}


class TestWeightedGraph(TestCase):
    """Tests for the weighted graph."""

    def test_self_edge(self):
        """Test self-edges are rejected."""
        with self.assertRaises(ValidationException):
            WeightedGraph.from_weights(['a'], {('a', 'a'): 1.0})

    def test_unknown_endpoint(self):
        """Test edges must join known nodes."""
        with self.assertRaises(ValidationException):
            WeightedGraph.from_weights(['a'], {('a', 'b'): 1.0})

    def test_asymmetric_weights(self):
        """Test a pair given twice must carry one weight."""
        with self.assertRaises(ValidationException):
            WeightedGraph.from_weights(['a', 'b'], {('a', 'b'): 1.0,
                                                    ('b', 'a'): 2.0})

    def test_weight(self):
        """Test the weight is readable in both directions."""
        graph = WeightedGraph.from_weights(['a', 'b'], {('a', 'b'): 0.5})
        self.assertEqual(graph.weight('b', 'a'), 0.5)


class TestMaxSpanningTree(TestCase):
    """Tests for the maximum-weight spanning tree."""

    def test_triangle(self):
        """Test the lightest edge of a triangle is dropped."""
        graph = WeightedGraph.from_weights(
            ['a', 'b', 'c'], {('a', 'b'): 3, ('b', 'c'): 2, ('a', 'c'): 1})
        self.assertEqual(max_spanning_tree(graph), [('a', 'b'), ('b', 'c')])

    def test_ties_are_lexicographic(self):
        """Test equal weights keep the lexicographically first edges."""
        graph = WeightedGraph.from_weights(
            ['c', 'b', 'a'], {('c', 'b'): 1, ('b', 'a'): 1, ('c', 'a'): 1})
        self.assertEqual(max_spanning_tree(graph), [('a', 'b'), ('a', 'c')])

    def test_single_node(self):
        """Test a single node has an empty tree."""
        graph = WeightedGraph.from_weights(['G'], {})
        self.assertEqual(max_spanning_tree(graph), [])

    def test_disconnected(self):
        """Test a disconnected graph is rejected."""
        graph = WeightedGraph.from_weights(['a', 'b', 'c'], {('a', 'b'): 1})
        with self.assertRaises(ValidationException):
            max_spanning_tree(graph)

    def test_empty(self):
        """Test an empty graph is rejected."""
        with self.assertRaises(ValidationException):
            max_spanning_tree(WeightedGraph())

    @pytest.mark.medium
    def test_optimal_against_every_tree(self):
        """Test the tree weight equals the best of all spanning trees."""
        rng = np.random.default_rng(1)
        for size in range(3, 7):
            for _ in range(25):
                names = [f'n{index}' for index in range(size)]
                weights = {pair: float(rng.random())
                           for pair in combinations(names, 2)}
                graph = WeightedGraph.from_weights(names, weights)
                tree = max_spanning_tree(graph)
                self.assertEqual(len(tree), size - 1)

                best = -math.inf
                for sequence in product(range(size), repeat=size - 2):
                    candidate = nx.from_prufer_sequence(list(sequence))
                    edges = [(names[first], names[second])
                             for first, second in candidate.edges()]
                    best = max(best, total_weight(edges, graph))
                self.assertEqual(total_weight(tree, graph), best)


class TestOrientTree(TestCase):
    """Tests for the orientation of a learned tree."""

    tree = [('G', 'L1'), ('L1', 'L2'), ('G', 'L3')]

    def test_rooted_at_target(self):
        """Test every edge points away from the target."""
        self.assertEqual(orient_tree(self.tree, 'G'),
                         {'G': None, 'L1': 'G', 'L2': 'L1', 'L3': 'G'})

    def test_every_root_keeps_the_skeleton(self):
        """Test any rooting is a directed tree on the same edges."""
        skeleton = {frozenset(edge) for edge in self.tree}
        for root in ('G', 'L1', 'L2', 'L3'):
            parents = orient_tree(self.tree, root)
            self.assertIsNone(parents[root])
            self.assertEqual(sum(parent is None
                                 for parent in parents.values()), 1)
            self.assertEqual({frozenset((child, parent))
                              for child, parent in parents.items()
                              if parent is not None}, skeleton)

    def test_single_node(self):
        """Test a lone target is its own root."""
        self.assertEqual(orient_tree([], 'G'), {'G': None})

    def test_invalid_trees(self):
        """Test cycles, foreign targets and unknown modes are rejected."""
        with self.assertRaises(ValidationException):
            orient_tree(self.tree, 'X')
        with self.assertRaises(ValidationException):
            orient_tree([('a', 'b'), ('b', 'c'), ('c', 'a')], 'a')
        with self.assertRaises(ValidationException):
            orient_tree(self.tree, 'G', 'sideways')
        with self.assertRaises(ValidationException):
            orient_tree(self.tree, 'G', EXHAUSTIVE)

    def test_exhaustive_picks_the_best_score(self):
        """Test the exhaustive mode keeps the best scored rooting."""
        def scorer(parents):
            return 1.0 if parents['L2'] is None else 0.0

        parents = orient_tree(self.tree, 'G', EXHAUSTIVE, scorer)
        self.assertIsNone(parents['L2'])

    def test_exhaustive_ties_keep_the_target(self):
        """Test equal scores keep the target rooting."""
        parents = orient_tree(self.tree, 'G', EXHAUSTIVE, lambda _: 0.0)
        self.assertIsNone(parents['G'])

    def test_weight_does_not_depend_on_the_root(self):
        """Test every rooting of a tree has the same total weight."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            size = int(rng.integers(2, 9))
            names = [f'n{index}' for index in range(size)]
            graph = WeightedGraph.from_weights(
                names, {pair: float(rng.random())
                        for pair in combinations(names, 2)})
            sequence = rng.integers(0, size, size - 2).tolist()
            edges = [(names[first], names[second]) for first, second
                     in nx.from_prufer_sequence(sequence).edges()]
            weights = {total_weight(orient_tree(edges, root), graph)
                       for root in names}
            self.assertEqual(len(weights), 1)

    def test_tree_to_string(self):
        """Test the nested rendering of a parent map."""
        parents = orient_tree(self.tree, 'G')
        self.assertEqual(tree_to_string(parents), 'G(L1(L2) L3)')
        self.assertEqual(tree_to_string({'G': None}), 'G')


class TestFitCpts(TestCase):
    """Tests for the CPT estimation."""

    structure = {'L1': None, 'G': 'L1'}
    columns = {'L1': ['p'] * 4, 'G': ['a', 'a', 'a', 'b']}
    fixed = {'G': ['a', 'b']}

    def test_unsmoothed(self):
        """Test alpha = 0 gives raw frequencies and uniform UNSEEN rows."""
        net = fit_cpts(self.structure, self.columns, 'G', 0.0, self.fixed)
        self.assertEqual(net.states['L1'], ['p', settings.UNSEEN])
        self.assertEqual(net.states['G'], ['a', 'b'])
        np.testing.assert_allclose(net.cpts['G'], [[0.75, 0.25],
                                                   [0.5, 0.5]])
        np.testing.assert_allclose(net.cpts['L1'], [1.0, 0.0])

    def test_laplace(self):
        """Test alpha = 1 adds one to every cell."""
        net = fit_cpts(self.structure, self.columns, 'G', 1.0, self.fixed)
        np.testing.assert_allclose(net.cpts['G'], [[4 / 6, 2 / 6],
                                                   [0.5, 0.5]])
        np.testing.assert_allclose(net.cpts['L1'], [5 / 6, 1 / 6])

    def test_missing_values_are_skipped(self):
        """Test pairs with a missing value are not counted."""
        columns = {'L1': ['p', 'p', None, 'p'], 'G': ['a', None, 'b', 'b']}
        net = fit_cpts(self.structure, columns, 'G', 0.0, self.fixed)
        np.testing.assert_allclose(net.cpts['G'][0], [0.5, 0.5])
        np.testing.assert_allclose(net.cpts['L1'], [1.0, 0.0])

    def test_invalid_inputs(self):
        """Test negative alpha, missing nodes and empty data."""
        with self.assertRaises(ValidationException):
            fit_cpts(self.structure, self.columns, 'G', -1.0)
        with self.assertRaises(ValidationException):
            fit_cpts(self.structure, {'G': ['a']}, 'G')
        with self.assertRaises(ValidationException):
            fit_cpts(self.structure, {'L1': [], 'G': []}, 'G')

    def test_learn_cpts_keeps_every_target_state(self):
        """Test states absent from training still get a uniform row."""
        spec = get_spec_mocked(states=['coke zero', 'fanta', 'sprite'])
        labels = get_labels_mocked(spec)
        net = learn_cpts({'brand': None, 'flavor': 'brand'},
                         get_catalog_mocked(), labels)
        self.assertEqual(net.states['brand'], spec.states)
        self.assertEqual(net.states['flavor'],
                         ['cola', 'orange', settings.UNSEEN])
        np.testing.assert_allclose(net.cpts['flavor'][2], [1 / 3] * 3)
        np.testing.assert_allclose(net.cpts['brand'], [3 / 6, 2 / 6, 1 / 6])

    def test_learn_cpts_unknown_node(self):
        """Test structure nodes must be local characteristics."""
        with self.assertRaises(ValidationException):
            learn_cpts({'brand': None, 'size': 'brand'},
                       get_catalog_mocked(), get_labels_mocked())


class TestInferPosterior(TestCase):
    """Tests for the exact posterior of the target."""

    def test_two_nodes(self):
        """Test Bayes' rule on G -> L."""
        net = get_tree_net()
        posterior = infer_posterior(net, {'L': 'x'})
        expected = 0.54 / 0.62
        np.testing.assert_allclose(posterior, [expected, 1 - expected])

    def test_without_evidence(self):
        """Test missing evidence gives the prior."""
        net = get_tree_net()
        np.testing.assert_allclose(infer_posterior(net, {}), [0.6, 0.4])
        np.testing.assert_allclose(infer_posterior(net, {'L': None}),
                                   [0.6, 0.4])

    def test_invalid_evidence(self):
        """Test target evidence, unknown nodes and unknown values."""
        net = get_tree_net()
        with self.assertRaises(ValidationException):
            infer_posterior(net, {'G': 'a'})
        with self.assertRaises(ValidationException):
            infer_posterior(net, {'size': 'x'})
        with self.assertRaises(ModelException):
            infer_posterior(net, {'L': 'never seen'})

    def test_unseen_values(self):
        """Test a value unseen in training acts as the UNSEEN state."""
        columns = {'G': ['a', 'a', 'b', 'b'], 'L': ['x', 'y', 'y', 'y']}
        net = fit_cpts({'G': None, 'L': 'G'}, columns, 'G', 1.0)
        np.testing.assert_allclose(
            infer_posterior(net, {'L': 'zzz'}),
            infer_posterior(net, {'L': settings.UNSEEN}))
        np.testing.assert_allclose(
            infer_posterior(net, {'L': 'zzz'}),
            brute_force_posterior(net, {'L': settings.UNSEEN}))

    def test_smoothing_keeps_every_state_possible(self):
        """Test alpha > 0 leaves no posterior entry at exactly zero."""
        columns = {'G': ['a', 'a', 'b', 'b'], 'L1': ['x', 'x', 'y', 'y'],
                   'L2': ['u', 'u', 'v', 'v']}
        parents = {'G': None, 'L1': 'G', 'L2': 'L1'}
        unsmoothed = fit_cpts(parents, columns, 'G', 0.0)
        self.assertEqual(infer_posterior(unsmoothed, {'L1': 'x'})[1], 0.0)

        net = fit_cpts(parents, columns, 'G', 1.0)
        for first, second in product(net.states['L1'] + ['zzz', None],
                                     net.states['L2'] + ['zzz', None]):
            posterior = infer_posterior(net, {'L1': first, 'L2': second})
            self.assertTrue((posterior > 0).all(), (first, second))

    @pytest.mark.medium
    def test_matches_brute_force(self):
        """Test message passing against the full joint on random trees."""
        for seed in range(200):
            net = get_random_net(seed)
            rng = np.random.default_rng(seed)
            others = [node for node in net.nodes if node != net.target]
            for size in range(len(others) + 1):
                for observed in combinations(others, size):
                    evidence = {node: net.states[node][
                        int(rng.integers(0, len(net.states[node])))]
                        for node in observed}
                    np.testing.assert_allclose(
                        infer_posterior(net, evidence),
                        brute_force_posterior(net, evidence),
                        rtol=0, atol=1e-9)

    def test_orientation_does_not_change_the_posterior(self):
        """Test every rooting fitted on the same data gives one posterior."""
        source = get_random_net(3, nodes=5)
        columns = sampled_columns(source, 3000, 3)
        tree = [tuple(edge) for edge in source.skeleton()]
        evidence = {node: columns[node][0] for node in source.nodes
                    if node != 'G'}
        posteriors = []
        for root in source.nodes:
            net = fit_cpts(orient_tree(tree, root), columns, 'G', 0.0,
                           {'G': source.states['G']})
            posteriors.append(infer_posterior(net, evidence))
        for posterior in posteriors[1:]:
            np.testing.assert_allclose(posterior, posteriors[0], atol=1e-9)


class TestJoint(TestCase):
    """Tests for the joint distribution helpers."""

    def test_joint_sums_to_one(self):
        """Test the joint tensor is a distribution matching each cell."""
        net = get_random_net(8, nodes=4, max_states=3)
        nodes, joint = joint_table(net)
        self.assertAlmostEqual(joint.sum(), 1.0, delta=1e-12)
        assignment = {node: net.states[node][-1] for node in nodes}
        self.assertAlmostEqual(
            joint[tuple(-1 for _ in nodes)],
            joint_probability(net, assignment), delta=1e-15)

    def test_exact_marginal_of_root(self):
        """Test the marginal of the root is its CPT."""
        net = get_tree_net()
        np.testing.assert_allclose(exact_marginal(net, 'G'), [0.6, 0.4])
        np.testing.assert_allclose(exact_marginal(net, 'L'),
                                   [0.62, 0.38])


class TestLearnStructure(TestCase):
    """Tests for the structure learning pipeline."""

    def test_rooted_structure(self):
        """Test the learned tree is rooted at the target."""
        source = get_random_net(4, nodes=4, max_states=3)
        columns = sampled_columns(source, 2000, 4)
        parents, selected, graph = learn_structure(columns, 'G', eta=3)
        self.assertIsNone(parents['G'])
        self.assertEqual(sorted(selected), ['L1', 'L2', 'L3'])
        self.assertEqual(graph.number_of_edges(), 6)

    def test_eta_limits_the_nodes(self):
        """Test only the selected characteristics enter the tree."""
        source = get_random_net(5, nodes=4, max_states=3)
        columns = sampled_columns(source, 2000, 5)
        parents, selected, _ = learn_structure(columns, 'G', eta=1)
        self.assertEqual(sorted(parents), sorted(selected + ['G']))

    def test_invalid_eta(self):
        """Test eta must be within 1..M."""
        columns = {'G': ['a', 'b'], 'L1': ['x', 'y']}
        for eta in (0, 2):
            with self.assertRaises(ValidationException):
                learn_structure(columns, 'G', eta=eta)

    def test_exhaustive_keeps_the_skeleton(self):
        """Test the exhaustive mode reorients the rooted tree only."""
        source = get_random_net(6, nodes=4, max_states=3)
        columns = sampled_columns(source, 1000, 6)
        rooted, _, _ = learn_structure(columns, 'G', eta=3)
        exhaustive, _, _ = learn_structure(columns, 'G', eta=3,
                                           mode=EXHAUSTIVE)

        def skeleton(parents):
            return {frozenset((child, parent))
                    for child, parent in parents.items() if parent}

        self.assertEqual(skeleton(rooted), skeleton(exhaustive))
        scores = [penalized_log_likelihood(parents, columns, 'G')
                  for parents in (rooted, exhaustive)]
        self.assertGreaterEqual(scores[1], scores[0])

    @pytest.mark.large
    def test_recovers_the_generating_tree(self):
        """Test the skeleton of sampled networks is recovered."""
        names = ['G'] + [f'L{index}' for index in range(1, 8)]
        recovered = 0
        for seed in range(100):
            source = random_tree_network(names, [3] * 8,
                                         np.random.default_rng(seed),
                                         strength=0.5)
            columns = sampled_columns(source, 50000, seed)
            parents, _, _ = learn_structure(columns, 'G', eta=7)
            learned = {frozenset((child, parent))
                       for child, parent in parents.items() if parent}
            recovered += learned == source.skeleton()
        self.assertGreaterEqual(recovered, 95)
