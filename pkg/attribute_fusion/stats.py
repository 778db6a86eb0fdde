"""Categorical statistics: contingency tables, entropy, mutual information."""
import math
from itertools import combinations

import numpy as np

from attribute_fusion import log
from attribute_fusion.exceptions import ValidationException


class ContingencyTable:
    """Joint counts of two categorical variables."""

    def __init__(self, rows, columns, counts, excluded=0):
        """Create a table.

        Args:
            rows (list): states of the first variable.
            columns (list): states of the second variable.
            counts (array-like): non-negative integer count matrix.
            excluded (int): records dropped because either value was
                            missing.

        Raises:
            ValidationException: on negative counts or a shape mismatch.

        """
        self.rows = list(rows)
        self.columns = list(columns)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(
            len(self.rows), len(self.columns))
        self.excluded = excluded
        if (self.counts < 0).any():
            raise ValidationException('contingency counts must be >= 0')

    @property
    def total(self):
        """Return N, the number of counted records."""
        return int(self.counts.sum())

    def row_marginal(self):
        """Return the counts of the first variable."""
        return self.counts.sum(axis=1)

    def column_marginal(self):
        """Return the counts of the second variable."""
        return self.counts.sum(axis=0)

    def transpose(self):
        """Return the table with the two variables swapped."""
        return ContingencyTable(self.columns, self.rows, self.counts.T,
                                self.excluded)

    def __repr__(self):
        return (f'ContingencyTable({len(self.rows)}x{len(self.columns)}, '
                f'N={self.total})')


def encode_column(values):
    """Map categorical values to integer codes.

    Returns:
        tuple: (sorted distinct states, numpy array of codes with -1 for
        missing values).

    """
    states = sorted({value for value in values if value is not None})
    lookup = {state: code for code, state in enumerate(states)}
    codes = np.fromiter((lookup.get(value, -1) if value is not None else -1
                         for value in values), dtype=np.int64,
                        count=len(values))
    return states, codes


def _table_from_codes(rows, row_codes, columns, column_codes):
    present = (row_codes >= 0) & (column_codes >= 0)
    flat = row_codes[present] * len(columns) + column_codes[present]
    counts = np.bincount(flat, minlength=len(rows) * len(columns))
    return ContingencyTable(rows, columns, counts,
                            excluded=int((~present).sum()))


def contingency_table(first, second):
    """Count the joint values of two equally long value sequences.

    Records with a missing value in either sequence are left out of the
    table and counted in ``excluded``.
    """
    if len(first) != len(second):
        raise ValidationException('value sequences differ in length')
    rows, row_codes = encode_column(first)
    columns, column_codes = encode_column(second)
    return _table_from_codes(rows, row_codes, columns, column_codes)


def entropy(counts):
    """Return the entropy in bits of a count vector."""
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValidationException('counts must be non-negative')
    total = counts.sum()
    if total <= 0:
        raise ValidationException('entropy needs at least one positive count')
    probabilities = counts[counts > 0] / total
    return max(0.0, -math.fsum(probabilities * np.log2(probabilities)))


def mutual_information(table):
    """Return the plug-in mutual information of a table, in bits.

    Zero cells contribute nothing; the sum is computed exactly rounded, so
    a table and its transpose give the same value.
    """
    total = table.total
    if total < 1:
        raise ValidationException('mutual information needs N >= 1')
    joint = table.counts / total
    row = table.row_marginal() / total
    column = table.column_marginal() / total
    expected = np.outer(row, column)
    present = table.counts > 0
    terms = joint[present] * np.log2(joint[present] / expected[present])
    return max(0.0, math.fsum(terms))


def pairwise_mutual_information(columns):
    """Return {(a, b): MI} for every unordered pair of named columns.

    Args:
        columns (dict): name -> list of values (None for missing).

    """
    encoded = {name: encode_column(values)
               for name, values in columns.items()}
    weights = {}
    for first, second in combinations(sorted(columns), 2):
        table = _table_from_codes(*encoded[first], *encoded[second])
        weights[(first, second)] = (mutual_information(table)
                                    if table.total else 0.0)
    return weights


def rank_relevance(columns, target):
    """Rank characteristics by mutual information with the target column.

    Returns:
        list: (name, MI) pairs, highest MI first, ties by name.

    """
    target_states, target_codes = encode_column(columns[target])
    ranking = []
    for name in sorted(columns):
        if name == target:
            continue
        table = _table_from_codes(*encode_column(columns[name]),
                                  target_states, target_codes)
        score = mutual_information(table) if table.total else 0.0
        ranking.append((name, score))
    ranking.sort(key=lambda item: (-item[1], item[0]))
    return ranking


def select_relevant(catalog, labels, target, eta):
    """Return the ``eta`` local characteristics most relevant to the target.

    Only records carrying a label are used, so passing the training
    catalog and training labels keeps the selection on the training split.

    Args:
        catalog (Catalog): records to learn from.
        labels (LabelSet): known labels of ``target``.
        target (GlobalAttributeSpec): the global attribute.
        eta (int): number of characteristics to keep.

    Raises:
        ValidationException: when eta is not in 1..M.

    """
    if eta <= 0:
        raise ValidationException(f'eta must be positive, got {eta}')
    if eta > len(catalog.schema):
        raise ValidationException(
            f'eta={eta} exceeds the {len(catalog.schema)} local '
            'characteristics')
    ids = [record_id for record_id in catalog.ids() if record_id in labels]
    columns = {name: catalog.column(name, ids) for name in catalog.schema}
    if target.name in columns:
        raise ValidationException(
            f'target {target.name} is also a local characteristic')
    columns[target.name] = [labels.get(record_id) for record_id in ids]
    ranking = rank_relevance(columns, target.name)
    log.debug('relevance of %s: %s', target.name, ranking)
    return [name for name, _ in ranking[:eta]]
