"""Independent reference implementations shared by the test modules."""

from collections import deque

import numpy as np


def bfs_labels(graph, values):
    """Reference labeling: breadth-first search over same-sign interior neighbours."""
    sign = {int(v): int(np.sign(x)) for v, x in zip(graph.interior_ids, values)}
    nbrs = {v: [] for v in sign}
    for e in graph.edges:
        if e.j in sign and e.n in sign:
            nbrs[e.j].append(e.n)
            nbrs[e.n].append(e.j)
    labels = {}
    count = 0
    for start in sorted(sign):
        if sign[start] == 0 or start in labels:
            continue
        labels[start] = count
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in nbrs[v]:
                if w not in labels and sign[w] == sign[start]:
                    labels[w] = count
                    queue.append(w)
        count += 1
    return labels, count


def same_partition(graph, part, labels):
    mine = {int(v): int(part.labels[v]) for v in graph.interior_ids if part.labels[v] >= 0}
    if mine.keys() != labels.keys():
        return False
    pairs = {(mine[v], labels[v]) for v in mine}
    return len(pairs) == len({a for a, _ in pairs}) == len({b for _, b in pairs})
