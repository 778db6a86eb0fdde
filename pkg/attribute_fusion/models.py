"""Classes used across the attribute fusion pipeline."""
import hashlib
import math

import networkx as nx
import numpy as np

from attribute_fusion import settings
from attribute_fusion.exceptions import ModelException, ValidationException
from attribute_fusion.uts import normalize_label


class ProductRecord:
    """Class to represent one product of a local catalog."""

    def __init__(self, record_id, local_values=None, descriptions=None):
        """Create a product record.

        Args:
            record_id (str): catalog key of the product.(Required)
            local_values (dict): local characteristic name -> categorical
                                 value, None when missing. Default is {}.
            descriptions (list): raw retailer description strings.
                                 Default is [].

        Raises:
            ValidationException: raised when the id is empty.

        """
        if not record_id:
            raise ValidationException('record id is required.')
        self.id = record_id  # pylint: disable=invalid-name
        self.locals = dict(local_values or {})
        self.descriptions = list(descriptions or [])

    def value(self, name):
        """Return the value of a local characteristic, None if missing."""
        return self.locals.get(name)

    def as_dict(self):
        """Return a dictionary representing this record."""
        return {'id': self.id,
                'locals': dict(self.locals),
                'descriptions': list(self.descriptions)}

    @classmethod
    def from_dict(cls, data):
        """Return a ProductRecord from a dict."""
        return cls(data['id'], data.get('locals'), data.get('descriptions'))

    def __eq__(self, other):
        if not isinstance(other, ProductRecord):
            return False
        return (self.id == other.id and self.locals == other.locals and
                self.descriptions == other.descriptions)

    def __repr__(self):
        return f'ProductRecord({self.id}, {len(self.descriptions)} desc)'


class Catalog:
    """Local catalog: ProductRecords in file order plus their schema."""

    def __init__(self, schema, records=()):
        """Create a catalog.

        Raises:
            ValidationException: on duplicate ids or on local
                characteristics that are not part of the schema.

        """
        self.schema = list(schema)
        self._records = {}
        for record in records:
            self._add(record)

    def _add(self, record):
        if record.id in self._records:
            raise ValidationException(f'duplicate record id {record.id}')
        unknown = set(record.locals) - set(self.schema)
        if unknown:
            raise ValidationException(
                f'record {record.id} has characteristics outside the '
                f'schema: {", ".join(sorted(unknown))}')
        self._records[record.id] = record

    def ids(self):
        """Return the record ids in file order."""
        return list(self._records)

    def get(self, record_id):
        """Return the record with the given id, or None."""
        return self._records.get(record_id)

    def column(self, name, ids=None):
        """Return the values of one characteristic, in record order."""
        ids = self.ids() if ids is None else ids
        return [self._records[record_id].value(name) for record_id in ids]

    def subset(self, ids):
        """Return a new catalog holding only the given ids, in file order."""
        wanted = set(ids)
        return Catalog(self.schema, (record for record in self
                                     if record.id in wanted))

    def __contains__(self, record_id):
        return record_id in self._records

    def __iter__(self):
        return iter(self._records.values())

    def __len__(self):
        return len(self._records)

    def __eq__(self, other):
        if not isinstance(other, Catalog):
            return False
        return (self.schema == other.schema and
                self._records == other._records)

    def __repr__(self):
        return f'Catalog({len(self)} records, schema={self.schema})'


class GlobalAttributeSpec:
    """A global characteristic and the ordered labels of its states."""

    def __init__(self, name, states):
        """Create the spec of a global attribute.

        Raises:
            ValidationException: when the name is empty, when fewer than two
                states are given or when two states normalize to the same
                label.

        """
        self.name = name
        self.states = list(states)
        self._validate()
        self._by_label = {state: index
                          for index, state in enumerate(self.states)}
        self._by_normalized = {normalize_label(state): index
                               for index, state in enumerate(self.states)}

    def _validate(self):
        if not self.name:
            raise ValidationException('attribute name is required.')
        if len(self.states) < 2:
            raise ValidationException(
                f'attribute {self.name} needs at least two states.')
        seen = {}
        for state in self.states:
            normalized = normalize_label(state)
            if not normalized:
                raise ValidationException(
                    f'state label {state!r} of {self.name} is empty.')
            if normalized in seen:
                raise ValidationException(
                    f'states {seen[normalized]!r} and {state!r} of '
                    f'{self.name} are duplicates.')
            seen[normalized] = state

    @classmethod
    def from_labels(cls, name, labels):
        """Derive a spec whose states are the sorted distinct labels."""
        return cls(name, sorted(set(labels)))

    def index(self, label):
        """Return the state index of a label.

        Raises:
            ValidationException: when the label is not a state.

        """
        if label in self._by_label:
            return self._by_label[label]
        try:
            return self._by_normalized[normalize_label(label)]
        except KeyError:
            raise ValidationException(
                f'label {label!r} is not a state of {self.name}') from None

    def __contains__(self, label):
        return (label in self._by_label or
                normalize_label(label) in self._by_normalized)

    def __len__(self):
        return len(self.states)

    def as_dict(self):
        """Return a dictionary representing this spec."""
        return {'name': self.name, 'states': list(self.states)}

    @classmethod
    def from_dict(cls, data):
        """Return a GlobalAttributeSpec from a dict."""
        return cls(data['name'], data['states'])

    def __eq__(self, other):
        if not isinstance(other, GlobalAttributeSpec):
            return False
        return self.name == other.name and self.states == other.states

    def __repr__(self):
        return f'GlobalAttributeSpec({self.name}, {len(self)} states)'


class LabelSet:
    """Known global attribute labels of some catalog records."""

    def __init__(self, spec, labels=None):
        """Create a label set; labels are stored in their canonical form.

        Raises:
            ValidationException: when a label is not a state of ``spec``.

        """
        self.spec = spec
        self._labels = {}
        for record_id, label in (labels or {}).items():
            try:
                index = spec.index(label)
            except ValidationException as exc:
                raise ValidationException(
                    f'record {record_id}: {exc}') from None
            self._labels[record_id] = spec.states[index]

    @property
    def attribute(self):
        """Return the name of the labeled attribute."""
        return self.spec.name

    def get(self, record_id):
        """Return the label of a record, or None."""
        return self._labels.get(record_id)

    def index_of(self, record_id):
        """Return the state index of a record's label."""
        return self.spec.index(self._labels[record_id])

    def ids(self):
        """Return the labeled ids in insertion order."""
        return list(self._labels)

    def items(self):
        """Return (id, label) pairs."""
        return self._labels.items()

    def subset(self, ids):
        """Return a label set restricted to the given ids."""
        return LabelSet(self.spec, {record_id: self._labels[record_id]
                                    for record_id in ids
                                    if record_id in self._labels})

    def __contains__(self, record_id):
        return record_id in self._labels

    def __len__(self):
        return len(self._labels)

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return False
        return self.spec == other.spec and self._labels == other._labels

    def __repr__(self):
        return f'LabelSet({self.attribute}, {len(self)} labels)'


class DatasetSplit:
    """Disjoint train / validation / test id lists."""

    parts = ('train', 'validation', 'test')

    def __init__(self, train, validation, test, **kwargs):
        """Create a split.

        Args:
            train, validation, test (list): record ids.
            ratios (tuple): fractions the split was drawn with.
            seed (int): shuffle seed. Default is None.
            ordered (bool): whether the split follows file order, None when
                            unknown.

        Raises:
            ValidationException: when an id appears in two parts.

        """
        self.train = list(train)
        self.validation = list(validation)
        self.test = list(test)
        self.ratios = tuple(kwargs.get('ratios', settings.SPLIT_RATIOS))
        self.seed = kwargs.get('seed', None)
        self.ordered = kwargs.get('ordered', False)
        self._validate()

    def _validate(self):
        seen = set()
        for part in self.parts:
            for record_id in self.part(part):
                if record_id in seen:
                    raise ValidationException(
                        f'record {record_id} appears in two splits')
                seen.add(record_id)

    def part(self, name):
        """Return the ids of one part of the split."""
        if name not in self.parts:
            raise ValidationException(f'unknown split part {name!r}')
        return getattr(self, name)

    def all_ids(self):
        """Return every id of the split."""
        return self.train + self.validation + self.test

    def as_dict(self):
        """Return a dictionary representing this split."""
        return {'ratios': list(self.ratios),
                'seed': self.seed,
                'ordered': self.ordered,
                'train': list(self.train),
                'validation': list(self.validation),
                'test': list(self.test)}

    @classmethod
    def from_dict(cls, data):
        """Return a DatasetSplit from a dict."""
        return cls(data['train'], data['validation'], data['test'],
                   ratios=data.get('ratios', settings.SPLIT_RATIOS),
                   seed=data.get('seed'), ordered=data.get('ordered', False))

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return False
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        return (f'DatasetSplit({len(self.train)}/{len(self.validation)}/'
                f'{len(self.test)})')


class TreeBayesNet:
    """Bayesian network whose structure is a directed tree.

    The root CPT is a probability vector over its states; every other CPT is
    a matrix with one row per parent state and one column per child state.
    """

    def __init__(self, target, states, parents, cpts, alpha=settings.ALPHA):
        """Create a network.

        Args:
            target (str): name of the queried global attribute node.
            states (dict): node -> ordered list of state labels.
            parents (dict): node -> parent node, None for the root.
            cpts (dict): node -> numpy array as described above.
            alpha (float): smoothing constant the CPTs were learned with.

        Raises:
            ModelException: when the network is not a valid tree network.

        """
        self.target = target
        self.states = {node: list(values) for node, values in states.items()}
        self.parents = dict(parents)
        self.cpts = {node: np.asarray(cpt, dtype=float)
                     for node, cpt in cpts.items()}
        self.alpha = alpha
        self._index = {node: {state: index
                              for index, state in enumerate(values)}
                       for node, values in self.states.items()}
        self.validate()

    @property
    def nodes(self):
        """Return the node names, sorted."""
        return sorted(self.parents)

    @property
    def root(self):
        """Return the node without a parent."""
        return next(node for node in self.nodes
                    if self.parents[node] is None)

    def children(self, node):
        """Return the children of a node, sorted."""
        return [child for child in self.nodes if self.parents[child] == node]

    def skeleton(self):
        """Return the undirected edges as a set of frozensets."""
        return {frozenset((child, parent))
                for child, parent in self.parents.items()
                if parent is not None}

    def state_index(self, node, value):
        """Return the index of a value, mapping unknown values to UNSEEN.

        Raises:
            ModelException: when the value is unknown and the node has no
                UNSEEN state.

        """
        index = self._index[node]
        if value in index:
            return index[value]
        if settings.UNSEEN in index:
            return index[settings.UNSEEN]
        raise ModelException(f'value {value!r} is not a state of {node}')

    def validate(self):
        """Check the parent map is a tree and every CPT row sums to one.

        Raises:
            ModelException: message with error detail.

        """
        nodes = set(self.parents)
        if self.target not in nodes:
            raise ModelException(f'target {self.target} is not a node')
        if set(self.states) != nodes or set(self.cpts) != nodes:
            raise ModelException('states, parents and CPTs disagree on nodes')

        graph = nx.DiGraph()
        graph.add_nodes_from(nodes)
        for child, parent in self.parents.items():
            if parent is None:
                continue
            if parent not in nodes:
                raise ModelException(f'parent {parent} of {child} is unknown')
            graph.add_edge(parent, child)
        if not nx.is_arborescence(graph):
            raise ModelException('parent map is not a directed tree')

        for node, cpt in self.cpts.items():
            parent = self.parents[node]
            size = len(self.states[node])
            if parent is None:
                shape = (size,)
            else:
                shape = (len(self.states[parent]), size)
            if cpt.shape != shape:
                raise ModelException(
                    f'CPT of {node} has shape {cpt.shape}, expected {shape}')
            if (cpt < 0).any():
                raise ModelException(f'CPT of {node} has negative entries')
            if not np.allclose(cpt.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
                raise ModelException(f'CPT of {node} is not normalized')

    def as_dict(self):
        """Return a dictionary representing this network."""
        return {'target': self.target,
                'alpha': self.alpha,
                'nodes': [{'name': node,
                           'parent': self.parents[node],
                           'states': list(self.states[node]),
                           'cpt': self.cpts[node].tolist()}
                          for node in self.nodes]}

    @classmethod
    def from_dict(cls, data):
        """Return a TreeBayesNet from a dict."""
        nodes = data['nodes']
        return cls(data['target'],
                   {node['name']: node['states'] for node in nodes},
                   {node['name']: node['parent'] for node in nodes},
                   {node['name']: node['cpt'] for node in nodes},
                   data.get('alpha', settings.ALPHA))

    def __eq__(self, other):
        if not isinstance(other, TreeBayesNet):
            return False
        return (self.target == other.target and
                self.parents == other.parents and
                self.states == other.states and
                all(np.array_equal(self.cpts[node], other.cpts[node])
                    for node in self.nodes))

    def __repr__(self):
        return f'TreeBayesNet({self.target}, {len(self.parents)} nodes)'


class PredictionOutcome:
    """Ensemble prediction for one record."""

    def __init__(self, record_id, sbm, uts, combined, **kwargs):
        """Create an outcome.

        Args:
            record_id (str): predicted record.
            sbm (numpy.ndarray): p, the network posterior.
            uts (numpy.ndarray): q, the textual distribution.
            combined (numpy.ndarray): P, the normalized combination.
            predicted (int): argmax of P.
            cop (float): confidence of prediction.
            abstained (bool): whether CoP is at or below tau.

        """
        self.record_id = record_id
        self.sbm = np.asarray(sbm, dtype=float)
        self.uts = np.asarray(uts, dtype=float)
        self.combined = np.asarray(combined, dtype=float)
        self.predicted = kwargs.get('predicted',
                                    int(np.argmax(self.combined)))
        self.cop = kwargs.get('cop', 0.0)
        self.abstained = kwargs.get('abstained', False)

    def top(self, count=3):
        """Return the ``count`` most probable (state index, probability)."""
        order = sorted(range(len(self.combined)),
                       key=lambda index: (-self.combined[index], index))
        return [(index, float(self.combined[index]))
                for index in order[:count]]

    def as_dict(self):
        """Return a dictionary representing this outcome."""
        return {'id': self.record_id,
                'sbm': self.sbm.tolist(),
                'uts': self.uts.tolist(),
                'combined': self.combined.tolist(),
                'predicted': self.predicted,
                'cop': self.cop,
                'abstained': self.abstained}

    def __repr__(self):
        return (f'PredictionOutcome({self.record_id}, {self.predicted}, '
                f'cop={self.cop:.4f}, abstained={self.abstained})')


class Metrics:
    """Evaluation metrics at one threshold."""

    def __init__(self, tau, pc_pct, pi_pct, np_pct, **kwargs):
        self.tau = tau
        self.pc_pct = pc_pct
        self.pi_pct = pi_pct
        self.np_pct = np_pct
        self.accuracy_on_predicted = kwargs.get('accuracy_on_predicted',
                                                math.nan)
        self.overall_accuracy = kwargs.get('overall_accuracy', math.nan)
        self.count = kwargs.get('count', 0)

    def as_dict(self):
        """Return a dictionary representing these metrics."""
        return {'tau': self.tau,
                'accuracy_on_predicted': self.accuracy_on_predicted,
                'pc_pct': self.pc_pct,
                'pi_pct': self.pi_pct,
                'np_pct': self.np_pct,
                'overall_accuracy': self.overall_accuracy,
                'count': self.count}

    def __repr__(self):
        return (f'Metrics(tau={self.tau}, P-C={self.pc_pct:.2f}%, '
                f'P-I={self.pi_pct:.2f}%, NP={self.np_pct:.2f}%)')


class CalibrationReport:
    """Per-threshold category percentages and the selected threshold."""

    def __init__(self, rows, selected_tau, **kwargs):
        """Create a report.

        Args:
            rows (list): dicts with keys tau, pc_pct, pi_pct, np_pct and
                         objective, in ascending tau order.
            selected_tau (float): threshold maximizing the objective.
            lambda_pi, lambda_np (float): penalty weights used.
            step (float): grid step used.

        """
        self.rows = list(rows)
        self.selected_tau = selected_tau
        self.lambda_pi = kwargs.get('lambda_pi', settings.LAMBDA_PI)
        self.lambda_np = kwargs.get('lambda_np', settings.LAMBDA_NP)
        self.step = kwargs.get('step', settings.TAU_STEP)

    @property
    def taus(self):
        """Return the threshold grid."""
        return [row['tau'] for row in self.rows]

    def row_for(self, tau):
        """Return the grid row closest to ``tau``."""
        return min(self.rows, key=lambda row: abs(row['tau'] - tau))

    @property
    def selected(self):
        """Return the row of the selected threshold."""
        return self.row_for(self.selected_tau)

    def as_dict(self):
        """Return a dictionary representing this report."""
        return {'rows': [dict(row) for row in self.rows],
                'selected_tau': self.selected_tau,
                'lambda_pi': self.lambda_pi,
                'lambda_np': self.lambda_np,
                'step': self.step}

    def __repr__(self):
        return (f'CalibrationReport({len(self.rows)} taus, '
                f'selected={self.selected_tau})')


class ModelBundle:
    """Everything needed to predict one global attribute."""

    required_attributes = ['spec', 'net', 'characteristics']

    def __init__(self, **kwargs):
        """Create a bundle.

        Args:
            spec (GlobalAttributeSpec): the predicted attribute.(Required)
            net (TreeBayesNet): the learned network.(Required)
            characteristics (list): relevant local characteristics, most
                                    relevant first.(Required)
            eta (int): number of characteristics asked for.
            orientation (str): orientation mode the tree was learned with.
            ngram_max (int): longest description n-gram.
            temperature (float): softmax temperature.
            tau (float): abstention threshold.
            lambda_pi, lambda_np (float): calibration penalty weights.
            provenance (dict): digests, seed, ratios and split manifest of
                               the training run.

        Raises:
            ValidationException: raised when a required attribute is missing.

        """
        for attribute in self.required_attributes:
            if kwargs.get(attribute) is None:
                raise ValidationException(f'{attribute} is required.')
        self.spec = kwargs['spec']
        self.net = kwargs['net']
        self.characteristics = list(kwargs['characteristics'])
        self.eta = kwargs.get('eta', settings.ETA)
        self.orientation = kwargs.get('orientation', settings.ORIENTATION)
        self.ngram_max = kwargs.get('ngram_max', settings.NGRAM_MAX)
        self.temperature = kwargs.get('temperature', settings.TEMPERATURE)
        self.tau = kwargs.get('tau', settings.TAU)
        self.lambda_pi = kwargs.get('lambda_pi', settings.LAMBDA_PI)
        self.lambda_np = kwargs.get('lambda_np', settings.LAMBDA_NP)
        self.provenance = dict(kwargs.get('provenance') or {})

    @property
    def target(self):
        """Return the name of the predicted attribute."""
        return self.spec.name

    def update(self, **kwargs):
        """Return a copy of this bundle with some attributes replaced."""
        data = {'spec': self.spec, 'net': self.net,
                'characteristics': self.characteristics,
                'eta': self.eta, 'orientation': self.orientation,
                'ngram_max': self.ngram_max,
                'temperature': self.temperature, 'tau': self.tau,
                'lambda_pi': self.lambda_pi, 'lambda_np': self.lambda_np,
                'provenance': self.provenance}
        for attribute in kwargs:
            if attribute not in data:
                raise ValidationException(
                    f'The attribute "{attribute}" is invalid.')
        data.update(kwargs)
        return ModelBundle(**data)

    def as_dict(self):
        """Return a dictionary representing this bundle, version first."""
        return {'version': settings.BUNDLE_VERSION,
                'target': self.target,
                'spec': self.spec.as_dict(),
                'eta': self.eta,
                'characteristics': list(self.characteristics),
                'orientation': self.orientation,
                'uts': {'ngram_max': self.ngram_max,
                        'temperature': self.temperature},
                'tau': self.tau,
                'lambda_pi': self.lambda_pi,
                'lambda_np': self.lambda_np,
                'net': self.net.as_dict(),
                'provenance': self.provenance}

    @classmethod
    def from_dict(cls, data):
        """Return a ModelBundle from a dict.

        Raises:
            ModelException: when the bundle version is not supported.

        """
        version = data.get('version')
        if version != settings.BUNDLE_VERSION:
            raise ModelException(f'unsupported bundle version {version}')
        uts = data.get('uts', {})
        return cls(spec=GlobalAttributeSpec.from_dict(data['spec']),
                   net=TreeBayesNet.from_dict(data['net']),
                   characteristics=data['characteristics'],
                   eta=data.get('eta', settings.ETA),
                   orientation=data.get('orientation', settings.ORIENTATION),
                   ngram_max=uts.get('ngram_max', settings.NGRAM_MAX),
                   temperature=uts.get('temperature', settings.TEMPERATURE),
                   tau=data.get('tau', settings.TAU),
                   lambda_pi=data.get('lambda_pi', settings.LAMBDA_PI),
                   lambda_np=data.get('lambda_np', settings.LAMBDA_NP),
                   provenance=data.get('provenance'))

    def __repr__(self):
        return f'ModelBundle({self.target}, tau={self.tau})'


def descriptions_digest(descriptions):
    """Return a short, stable digest of a record's descriptions."""
    text = '\n'.join(descriptions).encode('utf-8')
    return hashlib.sha256(text).hexdigest()[:16]


class QueueEntry:
    """One record routed to human annotation."""

    def __init__(self, record_id, digest, top, cop, annotation=None):
        self.record_id = record_id
        self.digest = digest
        self.top = list(top)
        self.cop = cop
        self.annotation = annotation

    def __repr__(self):
        return f'QueueEntry({self.record_id}, cop={self.cop:.4f})'


class AbstentionQueue:
    """Records whose confidence of prediction did not clear tau."""

    def __init__(self, entries=()):
        self.entries = list(entries)

    @classmethod
    def from_outcomes(cls, outcomes, catalog, spec):
        """Build the queue from the abstained outcomes, in input order."""
        entries = []
        for outcome in outcomes:
            if not outcome.abstained:
                continue
            record = catalog.get(outcome.record_id)
            top = [(spec.states[index], probability)
                   for index, probability in outcome.top(3)]
            entries.append(QueueEntry(outcome.record_id,
                                      descriptions_digest(record.descriptions),
                                      top, outcome.cop))
        return cls(entries)

    def ids(self):
        """Return the queued record ids."""
        return [entry.record_id for entry in self.entries]

    def annotations(self):
        """Return id -> label for the entries an annotator filled in."""
        return {entry.record_id: entry.annotation for entry in self.entries
                if entry.annotation}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f'AbstentionQueue({len(self)} records)'
