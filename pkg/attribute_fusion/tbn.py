"""Supervised Bayesian model: a tree network over local characteristics.

Structure learning keeps the ``eta`` characteristics most informative about
the target, builds the complete mutual-information graph over them and the
target, takes its maximum-weight spanning tree (Kruskal) and orients it.
Parameters are Laplace-smoothed counts; the posterior over the target is
computed exactly by passing messages towards the target node.
"""
import math
from functools import partial

import networkx as nx
import numpy as np
from networkx.utils import UnionFind

from attribute_fusion import log, settings
from attribute_fusion.exceptions import ModelException, ValidationException
from attribute_fusion.models import TreeBayesNet
from attribute_fusion.stats import (encode_column, pairwise_mutual_information,
                                    rank_relevance)

ROOTED = 'rooted'
EXHAUSTIVE = 'exhaustive'
ORIENTATIONS = (ROOTED, EXHAUSTIVE)


class WeightedGraph(nx.Graph):
    """Complete undirected graph with symmetric edge weights."""

    @classmethod
    def from_weights(cls, nodes, weights):
        """Create a graph from {(a, b): weight}.

        Raises:
            ValidationException: on self-edges, unknown nodes or a pair
                given twice with different weights.

        """
        graph = cls()
        graph.add_nodes_from(nodes)
        for (first, second), weight in weights.items():
            if first == second:
                raise ValidationException(f'self-edge on {first}')
            if first not in graph or second not in graph:
                raise ValidationException(
                    f'edge ({first}, {second}) has an unknown endpoint')
            if graph.has_edge(first, second) and \
                    graph[first][second]['weight'] != weight:
                raise ValidationException(
                    f'asymmetric weights on ({first}, {second})')
            graph.add_edge(first, second, weight=float(weight))
        return graph

    def weight(self, first, second):
        """Return W(first, second)."""
        return self[first][second]['weight']


def _edge(first, second):
    return (first, second) if first <= second else (second, first)


def max_spanning_tree(graph):
    """Return the maximum-weight spanning tree of a weighted graph.

    Edges are considered by descending weight, then by the lexicographic
    endpoint pair, so the result is deterministic.

    Returns:
        list: sorted (a, b) edge tuples with a < b.

    Raises:
        ValidationException: on an empty or disconnected graph.

    """
    if graph.number_of_nodes() < 1:
        raise ValidationException('spanning tree needs at least one node')
    candidates = sorted((_edge(first, second) for first, second
                         in graph.edges()),
                        key=lambda edge: (-graph.weight(*edge), edge))
    subtrees = UnionFind(graph.nodes())
    tree = []
    for first, second in candidates:
        if subtrees[first] != subtrees[second]:
            subtrees.union(first, second)
            tree.append((first, second))
    if len(tree) != graph.number_of_nodes() - 1:
        raise ValidationException('graph is not connected')
    return sorted(tree)


def total_weight(tree, graph):
    """Return the summed weight of a tree's edges.

    Args:
        tree: either an edge list or a parent map (node -> parent, None for
              the root).
        graph (WeightedGraph): the weights.

    """
    if isinstance(tree, dict):
        edges = [(child, parent) for child, parent in tree.items()
                 if parent is not None]
    else:
        edges = list(tree)
    return math.fsum(graph.weight(first, second) for first, second in edges)


def _root_at(skeleton, root):
    parents = {root: None}
    for child, parent in nx.bfs_predecessors(skeleton, root):
        parents[child] = parent
    return dict(sorted(parents.items()))


def orient_tree(tree, target, mode=ROOTED, scorer=None):
    """Direct the edges of an undirected tree.

    In ``rooted`` mode every edge points away from the target. In
    ``exhaustive`` mode every rooting of the tree is scored with ``scorer``
    (a callable taking a parent map) and the best one is returned; ties go
    to the target rooting.

    Returns:
        dict: node -> parent, None for the root.

    """
    skeleton = nx.Graph()
    skeleton.add_node(target)
    skeleton.add_edges_from(tree)
    if tree and target not in {node for edge in tree for node in edge}:
        raise ValidationException(f'target {target} is not in the tree')
    if not nx.is_tree(skeleton):
        raise ValidationException('edges do not form a tree')
    if mode not in ORIENTATIONS:
        raise ValidationException(f'unknown orientation mode {mode!r}')

    best = _root_at(skeleton, target)
    if mode == ROOTED:
        return best

    if skeleton.number_of_nodes() > settings.MAX_EXHAUSTIVE_NODES:
        raise ValidationException(
            f'exhaustive orientation is limited to '
            f'{settings.MAX_EXHAUSTIVE_NODES} nodes')
    if scorer is None:
        raise ValidationException('exhaustive orientation needs a scorer')
    best_score = scorer(best)
    for root in sorted(skeleton.nodes()):
        if root == target:
            continue
        candidate = _root_at(skeleton, root)
        score = scorer(candidate)
        log.debug('orientation rooted at %s scores %s', root, score)
        if score > best_score:
            best, best_score = candidate, score
    return best


def _node_states(columns, fixed_states):
    states = {}
    for node, values in columns.items():
        if node in fixed_states:
            states[node] = list(fixed_states[node])
        else:
            states[node] = encode_column(values)[0] + [settings.UNSEEN]
    return states


def _codes(values, states):
    lookup = {state: code for code, state in enumerate(states)}
    return np.fromiter((lookup.get(value, -1) if value is not None else -1
                        for value in values), dtype=np.int64,
                       count=len(values))


def _count_tables(parents, columns, states):
    codes = {node: _codes(columns[node], states[node]) for node in parents}
    counts = {}
    for node, parent in parents.items():
        size = len(states[node])
        if parent is None:
            present = codes[node][codes[node] >= 0]
            counts[node] = np.bincount(present, minlength=size)
            continue
        rows = len(states[parent])
        present = (codes[node] >= 0) & (codes[parent] >= 0)
        flat = codes[parent][present] * size + codes[node][present]
        counts[node] = np.bincount(
            flat, minlength=rows * size).reshape(rows, size)
    return counts


def _smooth(counts, alpha):
    counts = counts.astype(float)
    totals = counts.sum(axis=-1, keepdims=True)
    size = counts.shape[-1]
    with np.errstate(invalid='ignore', divide='ignore'):
        cpt = (counts + alpha) / (totals + alpha * size)
    return np.where(totals > 0, cpt, 1.0 / size) if alpha == 0 else cpt


def fit_cpts(parents, columns, target, alpha=settings.ALPHA,
             fixed_states=None):
    """Learn the CPTs of a directed tree from value columns.

    Every node gets the states seen in ``columns`` plus UNSEEN, except the
    nodes listed in ``fixed_states`` which keep the given state list.
    A cell is (count + alpha) / (row total + alpha * states); rows with no
    observation are uniform.

    Args:
        parents (dict): node -> parent, None for the root.
        columns (dict): node -> list of values (None for missing).
        target (str): the target node.
        alpha (float): smoothing constant.
        fixed_states (dict): node -> state list.

    Raises:
        ValidationException: on a negative alpha or empty columns.

    """
    if alpha < 0:
        raise ValidationException(f'alpha must be >= 0, got {alpha}')
    missing = set(parents) - set(columns)
    if missing:
        raise ValidationException(
            f'no data for nodes {", ".join(sorted(missing))}')
    if not any(len(columns[node]) for node in parents):
        raise ValidationException('no training records')
    states = _node_states({node: columns[node] for node in parents},
                          fixed_states or {})
    counts = _count_tables(parents, columns, states)
    cpts = {node: _smooth(table, alpha) for node, table in counts.items()}
    return TreeBayesNet(target, states, parents, cpts, alpha)


def training_columns(catalog, labels, nodes, target):
    """Return node -> values for the labeled records of a catalog."""
    ids = [record_id for record_id in catalog.ids() if record_id in labels]
    columns = {node: catalog.column(node, ids)
               for node in nodes if node != target}
    columns[target] = [labels.get(record_id) for record_id in ids]
    return columns


def learn_cpts(structure, catalog, labels, alpha=settings.ALPHA):
    """Learn the network parameters on the labeled records of a catalog.

    The target keeps the full state list of the attribute spec so that the
    posterior covers states absent from training.
    """
    target = labels.attribute
    unknown = [node for node in structure
               if node != target and node not in catalog.schema]
    if unknown:
        raise ValidationException(
            f'nodes {", ".join(unknown)} are not local characteristics')
    columns = training_columns(catalog, labels, structure, target)
    if not columns[target]:
        raise ValidationException('no labeled training records')
    return fit_cpts(structure, columns, target, alpha,
                    {target: labels.spec.states})


def penalized_log_likelihood(parents, columns, target, alpha=settings.ALPHA,
                             fixed_states=None):
    """Score a parent map by its penalized training log-likelihood in bits.

    The score is the log-likelihood of the observed (parent, child) pairs
    under the smoothed CPTs minus half the free-parameter count times
    log2 of the number of records.
    """
    net = fit_cpts(parents, columns, target, alpha, fixed_states)
    counts = _count_tables(parents, columns, net.states)
    likelihood = 0.0
    parameters = 0
    for node, table in counts.items():
        cpt = net.cpts[node]
        present = table > 0
        likelihood += float((table[present] * np.log2(cpt[present])).sum())
        size = len(net.states[node])
        parent = parents[node]
        parameters += (size - 1) * (len(net.states[parent]) if parent else 1)
    records = max(len(columns[target]), 1)
    return likelihood - 0.5 * parameters * math.log2(records)


def learn_structure(columns, target, eta=settings.ETA, mode=ROOTED,
                    alpha=settings.ALPHA, fixed_states=None):
    """Select characteristics and learn an oriented tree over them.

    Returns:
        tuple: (parent map, selected characteristics, WeightedGraph).

    """
    if eta <= 0:
        raise ValidationException(f'eta must be positive, got {eta}')
    ranking = rank_relevance(columns, target)
    if eta > len(ranking):
        raise ValidationException(
            f'eta={eta} exceeds the {len(ranking)} local characteristics')
    selected = [name for name, _ in ranking[:eta]]
    nodes = selected + [target]
    weights = pairwise_mutual_information(
        {node: columns[node] for node in nodes})
    graph = WeightedGraph.from_weights(nodes, weights)
    tree = max_spanning_tree(graph)
    scorer = partial(penalized_log_likelihood, columns=columns, target=target,
                     alpha=alpha, fixed_states=fixed_states)
    parents = orient_tree(tree, target, mode, scorer)
    log.info('learned tree %s (TW=%.6f bits)', tree_to_string(parents),
             total_weight(parents, graph))
    return parents, selected, graph


def tree_to_string(tree):
    """Render a parent map (or network) as ``Root(Child(Grandchild) Leaf)``."""
    parents = tree.parents if isinstance(tree, TreeBayesNet) else tree
    children = {}
    for child, parent in sorted(parents.items()):
        children.setdefault(parent, []).append(child)

    def render(node):
        below = children.get(node)
        if not below:
            return node
        return f'{node}({" ".join(render(child) for child in below)})'

    return render(children[None][0])


def _evidence_vectors(net, evidence):
    vectors = {}
    for node, value in evidence.items():
        if node not in net.parents:
            raise ValidationException(f'{node} is not a node of the network')
        if node == net.target:
            raise ValidationException('the target cannot be evidence')
        if value is None:
            continue
        vector = np.zeros(len(net.states[node]))
        vector[net.state_index(node, value)] = 1.0
        vectors[node] = vector
    return vectors


def infer_posterior(net, evidence):
    """Return P(target | evidence) by exact message passing on the tree.

    Unobserved nodes (absent or None in ``evidence``) are summed out; values
    unseen in training count as the UNSEEN state.

    Raises:
        ModelException: when the network is invalid.

    """
    net.validate()
    vectors = _evidence_vectors(net, evidence)
    skeleton = nx.Graph()
    skeleton.add_nodes_from(net.parents)
    skeleton.add_edges_from(net.skeleton())

    def local(node):
        belief = vectors.get(node, np.ones(len(net.states[node])))
        if net.parents[node] is None:
            belief = belief * net.cpts[node]
        return belief

    beliefs = {}
    for node in nx.dfs_postorder_nodes(skeleton, net.target):
        beliefs[node] = local(node)
    upward = dict(nx.bfs_predecessors(skeleton, net.target))
    for node in nx.dfs_postorder_nodes(skeleton, net.target):
        if node == net.target:
            break
        towards = upward[node]
        if net.parents[node] == towards:
            # edge factor indexed [towards state, node state]
            message = net.cpts[node] @ beliefs[node]
        else:
            message = beliefs[node] @ net.cpts[towards]
        total = message.sum()
        if total > 0:
            message = message / total
        beliefs[towards] = beliefs[towards] * message

    posterior = beliefs[net.target]
    total = posterior.sum()
    if total <= 0:
        log.debug('evidence %s has zero probability', evidence)
        return np.full(len(posterior), 1.0 / len(posterior))
    return posterior / total


def joint_table(net):
    """Return (node order, full joint probability tensor) of a network."""
    nodes = net.nodes
    axis = {node: index for index, node in enumerate(nodes)}
    shape = [len(net.states[node]) for node in nodes]
    joint = np.ones(shape)
    for node in nodes:
        parent = net.parents[node]
        view = [1] * len(nodes)
        view[axis[node]] = shape[axis[node]]
        if parent is None:
            joint = joint * net.cpts[node].reshape(view)
            continue
        view[axis[parent]] = shape[axis[parent]]
        cpt = net.cpts[node]
        if axis[parent] > axis[node]:
            cpt = cpt.T
        joint = joint * cpt.reshape(view)
    return nodes, joint


def joint_probability(net, assignment):
    """Return the probability of a full assignment node -> value."""
    probability = 1.0
    for node, parent in net.parents.items():
        child = net.state_index(node, assignment[node])
        if parent is None:
            probability *= net.cpts[node][child]
        else:
            probability *= net.cpts[node][
                net.state_index(parent, assignment[parent]), child]
    return probability


def brute_force_posterior(net, evidence, node=None):
    """Return P(node | evidence) by summing the full joint distribution."""
    node = net.target if node is None else node
    nodes, joint = joint_table(net)
    index = []
    for name in nodes:
        value = evidence.get(name)
        index.append(slice(None) if value is None
                     else net.state_index(name, value))
    conditioned = joint[tuple(index)]
    kept = [name for name in nodes if evidence.get(name) is None]
    axes = tuple(position for position, name in enumerate(kept)
                 if name != node)
    marginal = conditioned.sum(axis=axes) if axes else conditioned
    total = marginal.sum()
    if total <= 0:
        raise ModelException('evidence has zero probability')
    return marginal / total


def exact_marginal(net, node):
    """Return the marginal distribution of one node."""
    return brute_force_posterior(net, {}, node)
