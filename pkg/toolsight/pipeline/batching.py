"""Seeded minibatches prepared on a background thread."""

import logging
import queue
import threading
from typing import Callable, Generic, Iterator, List, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

K_ = TypeVar("K_")
S_ = TypeVar("S_")

_DONE = object()


def sample_seed(seed: int, epoch: int, index: int) -> int:
    """Augmentation seed of one sample, fixed by (seed, epoch, position)."""
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


class BatchLoader(Generic[K_, S_]):
    """
    Shuffles sample keys per epoch and builds batches ahead of the consumer.

    ``make_sample(key, seed)`` runs on a worker thread; at most
    ``prefetch`` batches wait in the queue. Errors raised while building a
    batch are re-raised in the consuming thread.
    """

    def __init__(
        self,
        keys: Sequence[K_],
        make_sample: Callable[[K_, int], S_],
        batch_size: int,
        seed: int,
        shuffle: bool = True,
        prefetch: int = 2,
    ):
        self.keys = list(keys)
        self.make_sample = make_sample
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.prefetch = prefetch

    def __len__(self) -> int:
        return (len(self.keys) + self.batch_size - 1) // self.batch_size

    def order(self, epoch: int) -> List[K_]:
        if not self.shuffle:
            return list(self.keys)
        permutation = np.random.default_rng([self.seed, epoch]).permutation(len(self.keys))
        return [self.keys[i] for i in permutation]

    def epoch(self, epoch: int) -> Iterator[List[S_]]:
        """Yield the batches of one epoch in a deterministic order."""
        keys = self.order(epoch)
        batches: "queue.Queue" = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()

        def produce():
            try:
                for start in range(0, len(keys), self.batch_size):
                    batch = [
                        self.make_sample(key, sample_seed(self.seed, epoch, start + offset))
                        for offset, key in enumerate(keys[start : start + self.batch_size])
                    ]
                    while not stop.is_set():
                        try:
                            batches.put(batch, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    if stop.is_set():
                        return
            except Exception as e:  # handed to the consumer
                batches.put(e)
                return
            batches.put(_DONE)

        worker = threading.Thread(target=produce, name=f"batch-loader-{epoch}", daemon=True)
        worker.start()
        try:
            while True:
                item = batches.get()
                if item is _DONE:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            worker.join(timeout=5)
