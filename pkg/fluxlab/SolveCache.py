# fluxlab/SolveCache.py

import threading
from collections import OrderedDict
from typing import Any, Hashable, Optional


class SolveCache:
    """
    Thread-safe process-wide cache of stationary solves, keyed by
    (drift key, eps, grid). Oldest entries are evicted first.
    """
    _instance = None
    _lock = threading.Lock()

    def __new__(cls, max_entries: int = 32):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super(SolveCache, cls).__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self, max_entries: int = 32):
        if getattr(self, '_initialized', False):
            return

        self._cache: 'OrderedDict[Hashable, Any]' = OrderedDict()
        self._cache_lock = threading.Lock()
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0
        self._initialized = True

    @staticmethod
    def make_key(drift_key: str, eps: float, grid: Any) -> Hashable:
        grid_key = tuple(grid) if isinstance(grid, (list, tuple)) else (grid,)
        return (drift_key, float(eps), grid_key)

    def get(self, cache_key: Hashable) -> Optional[Any]:
        with self._cache_lock:
            if cache_key in self._cache:
                self.hits += 1
                return self._cache[cache_key]
            self.misses += 1
        return None

    def set(self, cache_key: Hashable, value: Any):
        with self._cache_lock:
            self._cache[cache_key] = value
            self._cache.move_to_end(cache_key)
            while len(self._cache) > self.max_entries:
                self._cache.popitem(last=False)

    def clear(self):
        with self._cache_lock:
            self._cache.clear()
            self.hits = 0
            self.misses = 0

    def remove(self, cache_key: Hashable):
        with self._cache_lock:
            self._cache.pop(cache_key, None)

    def __contains__(self, cache_key: Hashable) -> bool:
        with self._cache_lock:
            return cache_key in self._cache

    def __len__(self) -> int:
        with self._cache_lock:
            return len(self._cache)
