"""Module to help to create tests."""
import numpy as np

from attribute_fusion import settings
from attribute_fusion.ingest import random_tree_network
from attribute_fusion.main import build_parser
from attribute_fusion.models import (Catalog, GlobalAttributeSpec, LabelSet,
                                     ModelBundle, PredictionOutcome,
                                     ProductRecord, TreeBayesNet)
from attribute_fusion.stats import select_relevant
from attribute_fusion.tbn import learn_cpts, learn_structure, training_columns


def get_spec_mocked(**kwargs):
    """Return a GlobalAttributeSpec.

    Args:
        name (str): attribute name. Defaults to "brand".
        states (list): state labels. Defaults to coke zero / fanta.
    """
    return GlobalAttributeSpec(kwargs.get('name', 'brand'),
                               kwargs.get('states', ['coke zero', 'fanta']))


def get_catalog_mocked(rows=None, schema=None):
    """Return a Catalog built from (id, {locals}, [descriptions]) rows."""
    if rows is None:
        rows = [('p1', {'flavor': 'cola', 'pack': 'can'},
                 ['coke zero can', 'coke zero bottle']),
                ('p2', {'flavor': 'orange', 'pack': 'can'},
                 ['fanta orange 330ml']),
                ('p3', {'flavor': 'cola', 'pack': None}, [])]
    if schema is None:
        schema = sorted({name for _, values, _ in rows for name in values})
    return Catalog(schema, [ProductRecord(record_id, values, descriptions)
                            for record_id, values, descriptions in rows])


def get_labels_mocked(spec=None, labels=None):
    """Return a LabelSet; defaults match get_catalog_mocked."""
    spec = spec or get_spec_mocked()
    if labels is None:
        labels = {'p1': 'coke zero', 'p2': 'fanta', 'p3': 'coke zero'}
    return LabelSet(spec, labels)


def get_tree_net(**kwargs):
    """Return the two-node network G -> L.

    Args:
        prior (list): P(G). Defaults to [0.6, 0.4].
        likelihood (list): P(L=x | G) per state of G.
                           Defaults to [0.9, 0.2].
    """
    prior = kwargs.get('prior', [0.6, 0.4])
    likelihood = kwargs.get('likelihood', [0.9, 0.2])
    cpt = np.array([[value, 1 - value] for value in likelihood])
    return TreeBayesNet('G', {'G': ['a', 'b'], 'L': ['x', 'y']},
                        {'G': None, 'L': 'G'},
                        {'G': np.array(prior), 'L': cpt}, alpha=0.0)


def get_random_net(seed, nodes=None, max_states=5):
    """Return a random tree network, target first, for property tests."""
    rng = np.random.default_rng(seed)
    size = nodes or int(rng.integers(2, 7))
    names = ['G'] + [f'L{index}' for index in range(1, size)]
    counts = [int(count) for count in rng.integers(2, max_states + 1, size)]
    return random_tree_network(names, counts, rng, strength=0.5)


def get_bundle_mocked(**kwargs):
    """Return a ModelBundle around get_tree_net."""
    spec = kwargs.get('spec', GlobalAttributeSpec('G', ['a', 'b']))
    return ModelBundle(spec=spec, net=kwargs.get('net', get_tree_net()),
                       characteristics=kwargs.get('characteristics', ['L']),
                       tau=kwargs.get('tau', settings.TAU),
                       provenance=kwargs.get('provenance'))


def get_trained_bundle(catalog, labels, **kwargs):
    """Return a ModelBundle learned on every labeled record of a catalog."""
    eta = kwargs.get('eta', len(catalog.schema))
    target = labels.attribute
    selected = select_relevant(catalog, labels, labels.spec, eta)
    columns = training_columns(catalog, labels, selected + [target], target)
    parents, _, _ = learn_structure(columns, target, eta)
    net = learn_cpts(parents, catalog, labels)
    return ModelBundle(spec=labels.spec, net=net, characteristics=selected,
                       eta=eta, temperature=kwargs.get('temperature', 0.2),
                       tau=kwargs.get('tau', settings.TAU))


def get_outcome_mocked(record_id, cop, predicted=0, states=2):
    """Return a PredictionOutcome carrying a given CoP and prediction."""
    combined = np.full(states, 1.0 / states)
    return PredictionOutcome(record_id, combined, combined, combined,
                             predicted=predicted, cop=cop,
                             abstained=False)


def get_args(command, *argv):
    """Return the parsed arguments of an attribute-fusion command."""
    return build_parser().parse_args([command, *argv])

