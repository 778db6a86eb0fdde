"""Module responsible for running per-record work on a worker pool."""
from concurrent.futures import ThreadPoolExecutor

from attribute_fusion import log, settings
from attribute_fusion.exceptions import ValidationException


class PredictionPool:
    """Bounded pool of worker threads.

    Results always come back in input order, so anything written from them
    is identical for every worker count.
    """

    def __init__(self, workers=settings.WORKERS):
        """Create a new pool with ``workers`` threads."""
        if workers < 1:
            raise ValidationException(
                f'worker count must be at least 1, got {workers}')
        self.workers = workers
        self.executor = ThreadPoolExecutor(max_workers=workers,
                                           thread_name_prefix='fusion')

    def map_ordered(self, function, items):
        """Apply ``function`` to every item and return results in order.

        The first exception raised by a job is re-raised here.
        """
        items = list(items)
        log.debug('dispatching %d jobs to %d workers', len(items),
                  self.workers)
        if self.workers == 1:
            return [function(item) for item in items]
        return list(self.executor.map(function, items))

    def shutdown(self):
        """Shutdown the pool, waiting for running jobs."""
        self.executor.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.shutdown()
