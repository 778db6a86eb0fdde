"""Module to handle model bundles and prediction outputs on disk."""
import csv
import io
import json
import os
import tempfile
import threading
from pathlib import Path

from attribute_fusion import log, settings
from attribute_fusion.exceptions import IngestException, ModelException
from attribute_fusion.ingest import delimited_rows
from attribute_fusion.models import (AbstentionQueue, ModelBundle,
                                     QueueEntry)

PREDICTION_COLUMNS = ('id', 'predicted', 'cop', 'abstained', 'p_sbm',
                      'q_uts', 'combined')
QUEUE_COLUMNS = ('id', 'descriptions_digest', 'top1', 'p1', 'top2', 'p2',
                 'top3', 'p3', 'cop', 'annotation')


def _joined(dist):
    return '|'.join(f'{value:.6f}' for value in dist)


class ModelStore:
    """Read and write bundles and prediction files below one directory."""

    def __init__(self, directory='.'):
        """Create a store rooted at ``directory``."""
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def path(self, name):
        """Return the path of a file of the store."""
        path = Path(name)
        return path if path.is_absolute() else self.directory / path

    def _write_atomic(self, name, text):
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            log.debug('Lock %s acquired.', self._lock)
            handle, temporary = tempfile.mkstemp(dir=target.parent,
                                                 prefix=f'.{target.name}.')
            try:
                with os.fdopen(handle, 'w', encoding='utf-8',
                               newline='') as stream:
                    stream.write(text)
                os.replace(temporary, target)
            except BaseException:
                os.unlink(temporary)
                raise
        log.debug('Lock %s released.', self._lock)
        return target

    def save_json(self, data, name):
        """Write a JSON document, keys in insertion order."""
        return self._write_atomic(name, json.dumps(data, indent=1) + '\n')

    def save_bundle(self, bundle, name):
        """Save a bundle as JSON, version field first."""
        path = self.save_json(bundle.as_dict(), name)
        log.info('Bundle %s for %s was saved.', path, bundle.target)
        return path

    def load_bundle(self, name):
        """Load a bundle.

        Raises:
            ModelException: when the file is not a valid bundle.

        """
        path = self.path(name)
        try:
            with open(path, encoding='utf-8') as handle:
                data = json.load(handle)
        except FileNotFoundError:
            raise ModelException(f'bundle {path} does not exist') from None
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelException(f'bundle {path} is not JSON: {exc}') from None
        if not isinstance(data, dict):
            raise ModelException(f'bundle {path} is not an object')
        try:
            bundle = ModelBundle.from_dict(data)
        except KeyError as exc:
            raise ModelException(f'bundle {path} lacks {exc}') from None
        bundle.net.validate()
        log.debug('Bundle %s was loaded.', path)
        return bundle

    def list_bundles(self):
        """Return the names of the bundle files of the store."""
        return sorted(path.name for path in self.directory.glob('*.json'))

    def save_predictions(self, outcomes, spec, name):
        """Write the committed predictions, one row per record."""
        rows = [PREDICTION_COLUMNS]
        for outcome in outcomes:
            if outcome.abstained:
                continue
            rows.append((outcome.record_id, spec.states[outcome.predicted],
                         f'{outcome.cop:.6f}', '0', _joined(outcome.sbm),
                         _joined(outcome.uts), _joined(outcome.combined)))
        return self._write_atomic(name, _delimited(rows))

    def save_queue(self, queue, name):
        """Write an abstention queue with an empty annotation column."""
        rows = [QUEUE_COLUMNS]
        for entry in queue:
            top = list(entry.top) + [('', None)] * (3 - len(entry.top))
            cells = [entry.record_id, entry.digest]
            for state, probability in top[:3]:
                cells += [state, '' if probability is None
                          else f'{probability:.6f}']
            cells += [f'{entry.cop:.6f}', entry.annotation or '']
            rows.append(cells)
        return self._write_atomic(name, _delimited(rows))

    def load_queue(self, name):
        """Read an abstention queue back, annotations included."""
        path = self.path(name)
        entries = []
        with open(path, 'rb') as handle:
            rows = delimited_rows(handle)
            first = next(rows, None)
            if first is None or tuple(first[1]) != QUEUE_COLUMNS:
                raise IngestException(f'{path} is not an abstention queue',
                                      line=1)
            for line, row in rows:
                if not row:
                    continue
                if len(row) != len(QUEUE_COLUMNS):
                    raise IngestException('malformed queue row', line=line)
                try:
                    top = [(row[index], float(row[index + 1]))
                           for index in (2, 4, 6) if row[index]]
                    cop = float(row[8])
                except ValueError:
                    raise IngestException('malformed probability',
                                          line=line) from None
                entries.append(QueueEntry(row[0], row[1], top, cop,
                                          row[9] or None))
        return AbstentionQueue(entries)


def _delimited(rows):
    buffer = io.StringIO()
    csv.writer(buffer, delimiter=settings.DELIMITER,
               lineterminator='\n').writerows(rows)
    return buffer.getvalue()
