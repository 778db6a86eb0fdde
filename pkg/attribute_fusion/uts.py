"""Unsupervised textual similarity between descriptions and state labels.

A record's retailer descriptions are cut into word n-grams. Every state
label of the global attribute is matched against those n-grams with the
Jaro-Winkler similarity, the best match is weighted by how many of the
record's descriptions contain it, and the weighted scores are turned into
a distribution over the states with a softmax.
"""
import re
from collections import Counter

import numpy as np
from rapidfuzz.distance import JaroWinkler

from attribute_fusion import settings
from attribute_fusion.exceptions import ValidationException

_TOKEN = re.compile(r'[^\W_]+')


class NgramIndex:
    """Word n-grams of one record with their description frequency."""

    def __init__(self, record_id=None, frequencies=None, description_count=0):
        """Create an index.

        Args:
            record_id (str): id of the indexed record.
            frequencies (dict): n-gram -> fraction of the record's
                descriptions containing it.
            description_count (int): number of descriptions indexed.
        """
        self.record_id = record_id
        self.frequencies = dict(frequencies or {})
        self.description_count = description_count

    @property
    def empty(self):
        """Return True when no n-gram was extracted."""
        return not self.frequencies

    def frequency(self, ngram):
        """Return the frequency of an n-gram, 0.0 when absent."""
        return self.frequencies.get(ngram, 0.0)

    def __len__(self):
        return len(self.frequencies)

    def __eq__(self, other):
        if not isinstance(other, NgramIndex):
            return False
        return (self.frequencies == other.frequencies and
                self.description_count == other.description_count)

    def __repr__(self):
        return f'NgramIndex({self.record_id}, {len(self)} n-grams)'


class StateMatch:
    """Best n-gram found for one state label."""

    def __init__(self, state, ngram, similarity, score):
        self.state = state
        self.ngram = ngram
        self.similarity = similarity
        self.score = score

    def __eq__(self, other):
        if not isinstance(other, StateMatch):
            return False
        return ((self.state, self.ngram, self.similarity, self.score) ==
                (other.state, other.ngram, other.similarity, other.score))

    def __repr__(self):
        return (f'StateMatch({self.state}, {self.ngram!r}, '
                f'{self.similarity:.4f}, {self.score:.4f})')


def tokenize(text):
    """Lowercase a text and split it on runs of non-alphanumerics."""
    if not text:
        return []
    return _TOKEN.findall(text.lower())


def normalize_label(label):
    """Return the tokenized, space-joined form of a label."""
    return ' '.join(tokenize(label))


def extract_ngrams(descriptions, n_max=settings.NGRAM_MAX, record_id=None):
    """Index the word n-grams of a record's descriptions.

    Each description contributes the set of its contiguous token sequences
    of length 1..n_max; the frequency of an n-gram is the number of
    descriptions containing it divided by the number of descriptions.
    """
    if n_max < 1:
        raise ValidationException(f'n_max must be at least 1, got {n_max}')

    counts = Counter()
    for description in descriptions:
        tokens = tokenize(description)
        seen = set()
        for size in range(1, n_max + 1):
            for start in range(len(tokens) - size + 1):
                seen.add(' '.join(tokens[start:start + size]))
        counts.update(seen)

    total = len(descriptions)
    frequencies = {ngram: count / total for ngram, count in counts.items()}
    return NgramIndex(record_id, frequencies, total)


def jaro_winkler(first, second):
    """Return the Jaro-Winkler similarity of two strings, in [0, 1].

    The common-prefix boost is only applied when the Jaro similarity is
    above 0.7, so weak matches keep their plain Jaro score.
    """
    if not first and not second:
        return 1.0
    if not first or not second:
        return 0.0
    return JaroWinkler.similarity(first, second,
                                  prefix_weight=settings.JW_PREFIX_WEIGHT)


def score_states(index, spec):
    """Match every state label of ``spec`` against the n-gram index.

    For each state the n-gram with the highest similarity is chosen (ties go
    to the more frequent n-gram, then to the lexicographically smaller one)
    and its similarity is multiplied by that n-gram's frequency.

    Returns:
        list: one StateMatch per state, in state order.

    """
    labels = [normalize_label(state) for state in spec.states]
    ngrams = sorted(index.frequencies)
    matches = []
    for state, label in enumerate(labels):
        best, best_key = None, (-1.0, -1.0)
        for ngram in ngrams:
            key = (jaro_winkler(label, ngram), index.frequencies[ngram])
            if key > best_key:
                best, best_key = ngram, key
        if best is None:
            matches.append(StateMatch(state, None, 0.0, 0.0))
        else:
            similarity, frequency = best_key
            matches.append(StateMatch(state, best, similarity,
                                      similarity * frequency))
    return matches


def softmax_scale(scores, temperature=settings.TEMPERATURE):
    """Turn per-state scores into a probability distribution."""
    if temperature <= 0:
        raise ValidationException(
            f'temperature must be positive, got {temperature}')
    scaled = np.asarray(scores, dtype=float) / temperature
    weights = np.exp(scaled - scaled.max())
    return weights / weights.sum()


def uts_distribution(descriptions, spec, n_max=settings.NGRAM_MAX,
                     temperature=settings.TEMPERATURE, record_id=None):
    """Return q, the textual distribution over the states, and the matches."""
    index = extract_ngrams(descriptions, n_max, record_id)
    matches = score_states(index, spec)
    return softmax_scale([match.score for match in matches],
                         temperature), matches
