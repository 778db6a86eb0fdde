"""Load, validate, split and synthesize local catalogs and labels.

Catalog files are delimited text with a header ``id,<characteristics...>,
description`` and one row per (record, description) pair. An empty cell is a
missing value; any other text, "NA" included, is a value.
"""
import csv
import hashlib
import math
from pathlib import Path

import networkx as nx
import numpy as np

from attribute_fusion import log, settings
from attribute_fusion.exceptions import IngestException, ValidationException
from attribute_fusion.models import (Catalog, DatasetSplit,
                                     GlobalAttributeSpec, LabelSet,
                                     ProductRecord, TreeBayesNet)


def file_digest(path):
    """Return the sha256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def delimited_rows(handle):
    """Yield (line, row) for every row of a delimited file opened as bytes.

    The line is where the row starts, so rows with quoted line breaks are
    reported where they begin.

    Raises:
        IngestException: on bytes that are not UTF-8 or a row the csv module
            cannot parse.

    """
    reader = csv.reader((raw.decode('utf-8') for raw in handle),
                        delimiter=settings.DELIMITER)
    while True:
        line = reader.line_num + 1
        try:
            row = next(reader)
        except StopIteration:
            return
        except (UnicodeDecodeError, csv.Error) as exc:
            raise IngestException(f'unreadable row: {exc}',
                                  line=line) from None
        yield line, row


def _writer(handle):
    return csv.writer(handle, delimiter=settings.DELIMITER,
                      lineterminator='\n')


def read_header(path):
    """Return the header row of a delimited file."""
    with open(path, 'rb') as handle:
        first = next(delimited_rows(handle), None)
    if first is None:
        raise IngestException(f'{path} is empty', line=1)
    return first[1]


def load_local_catalog(path, schema=None):
    """Load a catalog file.

    Rows sharing an id are merged into one record whose descriptions are
    collected in file order; their local values must agree.

    Args:
        path: catalog file.
        schema (list): expected local characteristic names. Default is the
                       header's columns between id and description.

    Raises:
        IngestException: on a header that does not match the schema, a
            malformed row (with its line number) or conflicting local values
            for one id (naming the id).

    """
    path = Path(path)
    if not path.exists():
        raise IngestException(f'catalog {path} does not exist')

    records = {}
    with open(path, 'rb') as handle:
        rows = delimited_rows(handle)
        first = next(rows, None)
        if first is None:
            raise IngestException(f'{path} is empty', line=1)
        header = first[1]
        columns = _check_header(header, schema)
        if schema is None:
            schema = columns
        position = {name: header.index(name) for name in header}

        for line, row in rows:
            if not row:
                continue
            if len(row) != len(header):
                raise IngestException(
                    f'expected {len(header)} fields, found {len(row)}',
                    line=line)
            record_id = row[position[settings.ID_COLUMN]]
            if not record_id:
                raise IngestException('empty id', line=line)
            values = {name: row[position[name]] or None for name in schema}
            description = row[position[settings.DESCRIPTION_COLUMN]]

            record = records.get(record_id)
            if record is None:
                record = records[record_id] = ProductRecord(record_id, values)
            elif record.locals != values:
                conflicts = sorted(name for name in schema
                                   if record.locals[name] != values[name])
                raise IngestException(
                    f'record {record_id} has conflicting values for '
                    f'{", ".join(conflicts)}', line=line, record_id=record_id)
            if description:
                record.descriptions.append(description)

    log.info('loaded %d records from %s', len(records), path)
    return Catalog(schema, records.values())


def _check_header(header, schema):
    for required in (settings.ID_COLUMN, settings.DESCRIPTION_COLUMN):
        if required not in header:
            raise IngestException(f'header lacks the {required} column',
                                  line=1)
    if len(set(header)) != len(header):
        raise IngestException('header repeats a column', line=1)
    columns = [name for name in header
               if name not in (settings.ID_COLUMN,
                               settings.DESCRIPTION_COLUMN)]
    if schema is not None and set(columns) != set(schema):
        missing = sorted(set(schema) - set(columns))
        extra = sorted(set(columns) - set(schema))
        raise IngestException(
            f'header does not match the schema (missing: {missing}, '
            f'unexpected: {extra})', line=1)
    return columns


def write_local_catalog(catalog, path, extra=None):
    """Write a catalog; description-less records get one empty-description row.

    Args:
        catalog (Catalog): records to write.
        path: output file.
        extra (tuple): optional (column name, {id: value}) written after the
                       local characteristics, empty for absent ids.

    """
    column, extra_values = extra or (None, {})
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = _writer(handle)
        writer.writerow([settings.ID_COLUMN, *catalog.schema,
                         *([column] if column else []),
                         settings.DESCRIPTION_COLUMN])
        for record in catalog:
            values = [record.value(name) or '' for name in catalog.schema]
            if column:
                values.append(extra_values.get(record.id, ''))
            for description in record.descriptions or ['']:
                writer.writerow([record.id, *values, description])


def load_labels(path, spec=None):
    """Load a label file ``id,<attribute>``.

    Empty label cells mark unlabeled records and are skipped. Without a
    spec, the state list is derived from the labels found.

    Raises:
        IngestException: on a malformed row or a label outside the spec
            (naming the label and its line).

    """
    with open(path, 'rb') as handle:
        rows = delimited_rows(handle)
        first = next(rows, None)
        if first is None:
            raise IngestException(f'{path} is empty', line=1)
        header = first[1]
        if len(header) != 2 or header[0] != settings.ID_COLUMN:
            raise IngestException(
                f'label header must be "{settings.ID_COLUMN},<attribute>"',
                line=1)
        attribute = header[1]
        if spec is not None and spec.name != attribute:
            raise IngestException(
                f'labels are for {attribute}, expected {spec.name}', line=1)

        labels = {}
        for line, row in rows:
            if not row:
                continue
            if len(row) != 2 or not row[0]:
                raise IngestException('malformed label row', line=line)
            record_id, label = row
            if not label:
                continue
            if spec is not None and label not in spec:
                raise IngestException(
                    f'label {label!r} is not a state of {attribute}',
                    line=line, record_id=record_id)
            if record_id in labels and labels[record_id] != label:
                raise IngestException(
                    f'record {record_id} has two labels', line=line,
                    record_id=record_id)
            labels[record_id] = label

    if spec is None:
        spec = GlobalAttributeSpec.from_labels(attribute, labels.values())
    return LabelSet(spec, labels)


def write_labels(labels, path):
    """Write a label file."""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = _writer(handle)
        writer.writerow([settings.ID_COLUMN, labels.attribute])
        for record_id, label in labels.items():
            writer.writerow([record_id, label])


def load_attribute_spec(path):
    """Load a spec file: the attribute name, then one state per line."""
    lines = []
    with open(path, 'rb') as handle:
        for line, raw in enumerate(handle, start=1):
            try:
                lines.append(raw.decode('utf-8').strip())
            except UnicodeDecodeError as exc:
                raise IngestException(f'unreadable line: {exc}',
                                      line=line) from None
    lines = [line for line in lines if line]
    if not lines:
        raise IngestException(f'{path} is empty', line=1)
    return GlobalAttributeSpec(lines[0], lines[1:])


def write_attribute_spec(spec, path):
    """Write a spec file."""
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write('\n'.join([spec.name, *spec.states]) + '\n')


def _split_sizes(count, ratios):
    validation = math.floor(count * ratios[1] + 1e-9)
    test = math.floor(count * ratios[2] + 1e-9)
    return count - validation - test, validation, test


def split_dataset(catalog, labels, ratios=settings.SPLIT_RATIOS,
                  seed=settings.SEED, ordered=False):
    """Split the labeled records into train, validation and test.

    Validation and test sizes are floored; train takes the remainder. With
    ``ordered`` the parts follow file order, otherwise a seeded shuffle.

    Raises:
        ValidationException: when the ratios do not sum to one or fewer than
            three records are labeled.

    """
    ratios = tuple(float(ratio) for ratio in ratios)
    if len(ratios) != 3 or any(ratio < 0 for ratio in ratios) or \
            abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationException(
            f'ratios must be three fractions summing to 1, got {ratios}')
    ids = [record_id for record_id in catalog.ids() if record_id in labels]
    if len(ids) < 3:
        raise ValidationException(
            f'need at least 3 labeled records, found {len(ids)}')
    if not ordered:
        order = np.random.default_rng(seed).permutation(len(ids))
        ids = [ids[index] for index in order]
    train, validation, _ = _split_sizes(len(ids), ratios)
    return DatasetSplit(ids[:train], ids[train:train + validation],
                        ids[train + validation:], ratios=ratios, seed=seed,
                        ordered=ordered)


def write_split(split, path):
    """Write a split manifest ``id,split``."""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = _writer(handle)
        writer.writerow([settings.ID_COLUMN, settings.SPLIT_COLUMN])
        for part in DatasetSplit.parts:
            for record_id in split.part(part):
                writer.writerow([record_id, part])


def load_split(path):
    """Load a split manifest.

    A manifest only lists ids, so the ratios, seed and ordering it was drawn
    with are recorded as unknown.
    """
    parts = {part: [] for part in DatasetSplit.parts}
    with open(path, 'rb') as handle:
        rows = delimited_rows(handle)
        next(rows, None)
        for line, row in rows:
            if not row:
                continue
            if len(row) != 2 or not row[0] or row[1] not in parts:
                raise IngestException('malformed split row', line=line)
            parts[row[1]].append(row[0])
    return DatasetSplit(parts['train'], parts['validation'], parts['test'],
                        ratios=(), ordered=None)


# Synthetic catalogs.

LABEL_HEADS = ['amber', 'birch', 'cobalt', 'dune', 'ember', 'fjord',
               'granite', 'harbor', 'indigo', 'juniper', 'kestrel', 'lagoon']
LABEL_TAILS = ['fizz', 'tonic', 'spritz', 'brew', 'nectar', 'cordial',
               'splash', 'quencher', 'elixir', 'punch', 'soda', 'mist']
DISTRACTORS = ['330ml', '500ml', 'can', 'bottle', 'pack', '6x', 'glass',
               'promo', 'chilled', 'retail', 'multipack', 'pet', 'new',
               'offer', 'single', 'crate']


def state_labels(count):
    """Return ``count`` distinct multi-word state labels."""
    heads, tails = len(LABEL_HEADS), len(LABEL_TAILS)
    labels = []
    for index in range(count):
        # 5 is coprime with 12: the first 12 labels share no word
        tail = (5 * index + index // heads) % tails
        label = f'{LABEL_HEADS[index % heads]} {LABEL_TAILS[tail]}'
        if index >= heads * tails:
            label = f'{label} {index}'
        labels.append(label)
    return labels


class SyntheticConfig:
    """Parameters of a synthetic catalog."""

    def __init__(self, **kwargs):
        """Create a generator config.

        Args:
            nodes (int): network size, target included. Default is 6.
            states (int|list): states per node, or one count per node with
                               the target first. Default is 3.
            samples (int): number of records. Default is 1000.
            noise (float): probability that none of a record's descriptions
                           carries its true label.
            seed (int): generator seed.
            descriptions (int): descriptions per record. Default is 3.
            local_noise (float): probability a local value is replaced by a
                                 uniformly drawn state. Default is 0.
            strength (float): weight of the preferred child state in every
                              CPT row. Default is 0.6.
            target (str): name of the global attribute. Default is 'G'.
            sort_by_target (bool): emit records grouped by target state, so
                                   an ordered split trains on few states.

        Raises:
            ValidationException: on invalid sizes or rates.

        """
        self.nodes = kwargs.get('nodes', 6)
        self.states = kwargs.get('states', 3)
        self.samples = kwargs.get('samples', 1000)
        self.noise = kwargs.get('noise', 0.1)
        self.seed = kwargs.get('seed', settings.SEED)
        self.descriptions = kwargs.get('descriptions', 3)
        self.local_noise = kwargs.get('local_noise', 0.0)
        self.strength = kwargs.get('strength', 0.6)
        self.target = kwargs.get('target', 'G')
        self.sort_by_target = kwargs.get('sort_by_target', False)
        self._validate()

    def _validate(self):
        if self.nodes < 2:
            raise ValidationException('a synthetic network needs >= 2 nodes')
        if self.samples < 1:
            raise ValidationException('sample count must be at least 1')
        counts = self.state_counts()
        if len(counts) != self.nodes:
            raise ValidationException('one state count per node is needed')
        if min(counts) < 2:
            raise ValidationException('every node needs at least 2 states')
        for name in ('noise', 'local_noise', 'strength'):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationException(f'{name} must be within [0, 1]')
        if self.descriptions < 0:
            raise ValidationException('description count must be >= 0')

    def state_counts(self):
        """Return the state count of every node, target first."""
        if isinstance(self.states, int):
            return [self.states] * self.nodes
        return list(self.states)

    def node_names(self):
        """Return the node names, target first."""
        return [self.target] + [f'L{index}' for index in range(1, self.nodes)]


def random_tree_network(names, counts, rng, strength=0.6, target=None,
                        labels=None):
    """Draw a random directed tree network.

    The skeleton comes from a uniformly drawn Pruefer sequence and is rooted
    at a random node. Each CPT row puts ``strength`` on a preferred child
    state (a random permutation of the parent states) and spreads the rest
    with a Dirichlet draw.
    """
    size = len(names)
    if size == 2:
        skeleton = nx.Graph([(0, 1)])
    else:
        skeleton = nx.from_prufer_sequence(
            [int(node) for node in rng.integers(0, size, size - 2)])
    root = int(rng.integers(0, size))
    parents = {names[root]: None}
    for child, parent in nx.bfs_predecessors(skeleton, root):
        parents[names[child]] = names[parent]

    labels = labels or {}
    states = {name: labels.get(name) or
              [f'{name.lower()}_{index}' for index in range(count)]
              for name, count in zip(names, counts)}
    cpts = {}
    for name in names:
        size = len(states[name])
        parent = parents[name]
        if parent is None:
            cpts[name] = rng.dirichlet(np.full(size, 2.0))
            continue
        rows = len(states[parent])
        preferred = rng.permutation(max(rows, size))[:rows] % size
        noise = rng.dirichlet(np.full(size, 2.0), rows)
        cpt = (1 - strength) * noise
        cpt[np.arange(rows), preferred] += strength
        cpts[name] = cpt / cpt.sum(axis=1, keepdims=True)
    return TreeBayesNet(target or names[0], states, parents, cpts, alpha=0.0)


def sample_network(net, count, rng):
    """Draw ``count`` joint samples by ancestral sampling.

    Returns:
        dict: node -> numpy array of state indices.

    """
    samples = {}
    pending = [net.root]
    while pending:
        node = pending.pop(0)
        parent = net.parents[node]
        cpt = net.cpts[node]
        rows = cpt[np.newaxis, :] if parent is None else cpt[samples[parent]]
        cumulative = np.cumsum(rows, axis=1)
        draws = rng.random(count)[:, np.newaxis]
        indices = (draws >= cumulative).sum(axis=1)
        samples[node] = np.minimum(indices, cpt.shape[-1] - 1)
        pending.extend(net.children(node))
    return samples


def _description(label, include, rng):
    words = list(rng.choice(DISTRACTORS, size=int(rng.integers(2, 5)),
                            replace=False))
    if include:
        position = int(rng.integers(0, len(words) + 1))
        words.insert(position, label.upper() if rng.random() < 0.3 else label)
    return ' '.join(words)


def generate_synthetic(config):
    """Generate a catalog, its labels and the network that produced them.

    Returns:
        tuple: (Catalog, LabelSet, TreeBayesNet).

    """
    rng = np.random.default_rng(config.seed)
    names = config.node_names()
    counts = config.state_counts()
    target_labels = state_labels(counts[0])
    net = random_tree_network(names, counts, rng, config.strength,
                              config.target, {config.target: target_labels})
    samples = sample_network(net, config.samples, rng)

    order = np.arange(config.samples)
    if config.sort_by_target:
        order = np.argsort(samples[config.target], kind='stable')

    width = len(str(config.samples))
    schema = names[1:]
    records, labels = [], {}
    for position, sample in enumerate(order):
        record_id = f'p{position:0{width}d}'
        values = {}
        for name in schema:
            index = samples[name][sample]
            if rng.random() < config.local_noise:
                index = int(rng.integers(0, len(net.states[name])))
            values[name] = net.states[name][index]
        label = target_labels[samples[config.target][sample]]
        include = rng.random() >= config.noise
        descriptions = [_description(label, include, rng)
                        for _ in range(config.descriptions)]
        records.append(ProductRecord(record_id, values, descriptions))
        labels[record_id] = label

    spec = GlobalAttributeSpec(config.target, target_labels)
    log.info('generated %d synthetic records over %d nodes', config.samples,
             config.nodes)
    return Catalog(schema, records), LabelSet(spec, labels), net


def generate_benchmark(attributes, config):
    """Generate one independent synthetic problem per global attribute.

    Problem k uses the config with seed ``config.seed + k`` and target
    ``G<k+1>``.

    Returns:
        list: (Catalog, LabelSet, TreeBayesNet) tuples.

    """
    if attributes < 1:
        raise ValidationException('a benchmark needs at least 1 attribute')
    problems = []
    for index in range(attributes):
        variant = SyntheticConfig(
            nodes=config.nodes, states=config.states, samples=config.samples,
            noise=config.noise, seed=config.seed + index,
            descriptions=config.descriptions,
            local_noise=config.local_noise, strength=config.strength,
            target=f'G{index + 1}', sort_by_target=config.sort_by_target)
        problems.append(generate_synthetic(variant))
    return problems
