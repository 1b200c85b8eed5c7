"""Shared builders and independent oracles used across the test suite."""

from __future__ import annotations

import itertools
import json

from restcarver.model import ApiCall, ApiSequence, HttpRequest, HttpResponse
from restcarver.similarity import KeyTree


def make_call(method, url, payload=None, status=200, mime="application/json",
              req_headers=(), resp_headers=(), body=None, req_mime=None, index=0):
    """Build an ApiCall; payload may be a JSON-able object or raw bytes."""
    if payload is None:
        resp_body = None
        resp_mime = None
    elif isinstance(payload, bytes):
        resp_body = payload
        resp_mime = mime
    else:
        resp_body = json.dumps(payload).encode("utf-8")
        resp_mime = mime
    headers = tuple(resp_headers)
    if resp_body is not None and not any(n.lower() == "content-type" for n, _ in headers):
        headers += (("Content-Type", resp_mime),)
    return ApiCall(
        HttpRequest(method, url, tuple(req_headers), body, req_mime),
        HttpResponse(status, headers, resp_body, resp_mime),
        sequence_index=index,
    )


def make_sequence(base_url, specs):
    """specs: iterable of (method, path, payload[, status]) tuples."""
    calls = []
    for i, spec in enumerate(specs):
        method, path, payload = spec[:3]
        status = spec[3] if len(spec) > 3 else 200
        calls.append(make_call(method, base_url + path, payload, status, index=i))
    return ApiSequence(base_url, calls)


# -- brute-force ordered tree edit distance ----------------------------------
#
# Independent oracle: enumerate every valid ordered-tree mapping (one-to-one,
# postorder-preserving, ancestorship-preserving) and take the cheapest edit
# script it induces. This never shares code with the production algorithm.


def _postorder(tree: KeyTree):
    order = []

    def assign(node):
        kids = [assign(child) for child in node.children]
        index = len(order)
        order.append((node.label, kids))
        return index

    assign(tree)
    ancestor = [[False] * len(order) for _ in order]

    def mark(index):
        _, kids = order[index]
        covered = []
        for kid in kids:
            covered.extend(mark(kid))
        for c in covered:
            ancestor[index][c] = True
        return covered + [index]

    mark(len(order) - 1)
    labels = [label for label, _ in order]
    return labels, ancestor


def oracle_tree_edit_distance(t1: KeyTree, t2: KeyTree) -> int:
    labels1, anc1 = _postorder(t1)
    labels2, anc2 = _postorder(t2)
    n1, n2 = len(labels1), len(labels2)
    best = n1 + n2  # empty mapping: delete everything, insert everything
    for k in range(1, min(n1, n2) + 1):
        for combo1 in itertools.combinations(range(n1), k):
            for combo2 in itertools.combinations(range(n2), k):
                valid = True
                for a in range(k):
                    for b in range(a + 1, k):
                        i1, i2 = combo1[a], combo1[b]
                        j1, j2 = combo2[a], combo2[b]
                        if anc1[i2][i1] != anc2[j2][j1]:
                            valid = False
                            break
                    if not valid:
                        break
                if not valid:
                    continue
                renames = sum(
                    1 for a in range(k) if labels1[combo1[a]] != labels2[combo2[a]]
                )
                cost = renames + (n1 - k) + (n2 - k)
                if cost < best:
                    best = cost
    return best


# -- exhaustive ordered tree enumeration --------------------------------------


def tree_shapes(n: int):
    """All ordered tree shapes with exactly n nodes, as nested child-count lists."""
    if n == 1:
        return [()]
    shapes = []
    for forest in _forests(n - 1):
        shapes.append(tuple(forest))
    return shapes


def _forests(m: int):
    if m == 0:
        return [[]]
    out = []
    for first_size in range(1, m + 1):
        for first in tree_shapes(first_size):
            for rest in _forests(m - first_size):
                out.append([first] + rest)
    return out


def shape_size(shape) -> int:
    return 1 + sum(shape_size(child) for child in shape)


def label_tree(shape, labels, counter=None) -> KeyTree:
    """Assign labels to a shape in preorder, cycling through ``labels``."""
    if counter is None:
        counter = itertools.count()
    label = labels[next(counter) % len(labels)]
    return KeyTree(label, tuple(label_tree(child, labels, counter) for child in shape))


def all_labeled_trees(max_nodes: int, alphabet=("a", "b")):
    """Every ordered tree with <= max_nodes nodes labeled over the alphabet."""
    trees = []
    for n in range(1, max_nodes + 1):
        for shape in tree_shapes(n):
            for labeling in itertools.product(alphabet, repeat=n):
                it = iter(labeling)
                trees.append(_apply_labels(shape, it))
    return trees


def _apply_labels(shape, label_iter) -> KeyTree:
    label = next(label_iter)
    return KeyTree(label, tuple(_apply_labels(child, label_iter) for child in shape))


# -- random JSON payloads ------------------------------------------------------


def random_json(rng, depth=0):
    roll = rng.random()
    if depth >= 3 or roll < 0.35:
        return rng.choice([
            rng.randint(-1000, 1000),
            rng.random() * 100,
            "s" + str(rng.randint(0, 99)),
            rng.random() < 0.5,
            None,
        ])
    if roll < 0.7:
        return {
            f"k{rng.randint(0, 9)}": random_json(rng, depth + 1)
            for _ in range(rng.randint(1, 4))
        }
    return [random_json(rng, depth + 1) for _ in range(rng.randint(0, 3))]


def mutate_scalars(value, rng):
    """Replace every scalar with a different scalar of the same JSON kind."""
    if isinstance(value, dict):
        return {k: mutate_scalars(v, rng) for k, v in value.items()}
    if isinstance(value, list):
        return [mutate_scalars(v, rng) for v in value]
    if isinstance(value, bool):
        return not value
    if isinstance(value, (int, float)) and value is not None:
        return value + 1
    if isinstance(value, str):
        return value + "x"
    return value  # null stays null: no other value of the same kind
