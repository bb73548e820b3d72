# -*- coding: utf-8 -*-
#
#  heap_cache.py
#  label_audit
#
#  Created by Lars Yencken on 30-08-2010.
#  Copyright 2010 Lars Yencken. All rights reserved.
#
#  Revised by Aurélien Nioche on 23-03-2019
#  Reworked for label auditing.

"""
Caches to aid neighbour search, efficiently maintaining only the k most
similar auxiliary examples of each query.
"""

import heapq


class TopNHeap(object):
    """
    A heap which only keeps the top-n items and their weights. Among equal
    weights the smaller item wins, so the kept set is deterministic.
    """
    __slots__ = '_n', '_backing_list'

    def __init__(self, n):
        self._n = n
        self._backing_list = []

    def add(self, item, weight):
        heapq.heappush(self._backing_list, (weight, -item))
        if len(self._backing_list) > self._n:
            heapq.heappop(self._backing_list)

    def __len__(self):
        return len(self._backing_list)

    def get_contents(self):
        """(weight, item) pairs, best first."""
        return [(w, -i) for (w, i) in sorted(self._backing_list, reverse=True)]


class NeighbourCache(object):
    """
    Keeps the top-n most similar auxiliary items of every query, plus
    the running mean of the similarities offered to it.
    """
    def __init__(self, n):
        self._n = n
        self._heaps = {}
        self._sum = 0.0
        self._n_seen = 0

    def add(self, query, item, similarity):
        """
        Attempt to add this similarity to the query's heap. If there are
        already n closer neighbours it will be discarded.
        """
        self.get_heap(query).add(item, similarity)
        self._n_seen += 1
        self._sum += similarity

    def __getitem__(self, query):
        return self.get_heap(query)

    def __contains__(self, query):
        return query in self._heaps

    def get_heap(self, query):
        heap = self._heaps.get(query)
        if heap is None:
            heap = self._heaps.setdefault(query, TopNHeap(self._n))
        return heap

    def get_mean(self):
        return self._sum / self._n_seen if self._n_seen else float('nan')

    @property
    def n_seen(self):
        return self._n_seen
