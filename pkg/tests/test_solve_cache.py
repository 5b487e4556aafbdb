from fluxlab.SolveCache import SolveCache


def test_singleton_and_eviction(monkeypatch):
    cache = SolveCache()
    assert SolveCache() is cache
    monkeypatch.setattr(cache, 'max_entries', 2)
    first = SolveCache.make_key('{"preset": "cos1d"}', 0.5, (64,))
    second = SolveCache.make_key('{"preset": "cos1d"}', 0.3, [64])
    third = SolveCache.make_key('{"preset": "cos1d"}', 0.2, 64)
    assert second == ('{"preset": "cos1d"}', 0.3, (64,))
    assert third == ('{"preset": "cos1d"}', 0.2, (64,))

    cache.set(first, 'a')
    cache.set(second, 'b')
    cache.set(third, 'c')
    assert len(cache) == 2
    assert first not in cache
    assert cache.get(first) is None
    assert cache.get(third) == 'c'
    assert (cache.hits, cache.misses) == (1, 1)

    cache.remove(second)
    assert second not in cache
    cache.clear()
    assert len(cache) == 0 and cache.hits == 0
