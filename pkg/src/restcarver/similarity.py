"""Structural similarity of response payloads via key trees and tree edit distance."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from .model import canonical_mime

ROOT_LABEL = "$"
ARRAY_LABEL = "[]"

JSON_MIMES = frozenset({"text/json", "application/json"})
XML_MIMES = frozenset({"text/xml", "application/xml"})


class PayloadError(ValueError):
    """Raised when a payload cannot be parsed into a key tree."""


@dataclass(frozen=True)
class KeyTree:
    """A payload's structural skeleton: keys only, values discarded.

    Children are kept sorted by label so serialization order of the source
    document never influences comparisons.
    """

    label: str
    children: tuple["KeyTree", ...] = ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def render(self) -> str:
        if not self.children:
            return self.label
        return self.label + "(" + ",".join(c.render() for c in self.children) + ")"


def _sorted(children) -> tuple[KeyTree, ...]:
    return tuple(sorted(children, key=lambda t: t.label))


def _merge_trees(trees: list[KeyTree], label: str) -> KeyTree:
    """Union a list of key trees into one: children grouped by label, recursively."""
    groups: dict[str, list[KeyTree]] = {}
    for tree in trees:
        for child in tree.children:
            groups.setdefault(child.label, []).append(child)
    children = tuple(_merge_trees(group, name) for name, group in sorted(groups.items()))
    return KeyTree(label, children)


def _from_json(value, label: str) -> KeyTree:
    if isinstance(value, dict):
        return KeyTree(label, _sorted(_from_json(v, k) for k, v in value.items()))
    if isinstance(value, list):
        # Canonicalize arrays: one "[]" child holding the union of element trees,
        # so same-shaped lists of different lengths compare equal.
        element_trees = [_from_json(el, ARRAY_LABEL) for el in value]
        return KeyTree(label, (_merge_trees(element_trees, ARRAY_LABEL),))
    return KeyTree(label)


def _from_xml(elem: ET.Element) -> KeyTree:
    tag = elem.tag if isinstance(elem.tag, str) else str(elem.tag)
    return KeyTree(tag, _sorted(_from_xml(child) for child in elem))


def _decode(body: bytes | str) -> str:
    if isinstance(body, bytes):
        try:
            return body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PayloadError(f"payload is not valid UTF-8: {exc}") from None
    return body


def key_tree(body: bytes | str, mime: str) -> KeyTree:
    """Build the key tree of a JSON or XML payload. Raises PayloadError otherwise."""
    media_type = canonical_mime(mime)
    text = _decode(body)
    if media_type in JSON_MIMES or media_type.endswith("+json"):
        try:
            value = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PayloadError(f"invalid JSON: {exc}") from None
        return _from_json(value, ROOT_LABEL)
    if media_type in XML_MIMES or media_type.endswith("+xml"):
        try:
            root = ET.fromstring(text)
        except ET.ParseError as exc:
            raise PayloadError(f"invalid XML: {exc}") from None
        return KeyTree(ROOT_LABEL, (_from_xml(root),))
    raise PayloadError(f"unsupported MIME type for key tree: {mime!r}")


def _annotate(root: KeyTree):
    """Postorder node list, leftmost-leaf-descendant indices, and keyroots."""
    nodes: list[KeyTree] = []
    lmds: list[int] = []

    def walk(node: KeyTree) -> int:
        leftmost = None
        for child in node.children:
            child_index = walk(child)
            if leftmost is None:
                leftmost = lmds[child_index]
        index = len(nodes)
        nodes.append(node)
        lmds.append(index if leftmost is None else leftmost)
        return index

    walk(root)
    keyroot_for_lmd: dict[int, int] = {}
    for i, lmd in enumerate(lmds):
        keyroot_for_lmd[lmd] = i
    return nodes, lmds, sorted(keyroot_for_lmd.values())


def tree_edit_distance(t1: KeyTree, t2: KeyTree) -> int:
    """Minimum-cost ordered tree edit distance with unit insert/delete/rename costs."""
    nodes1, lmds1, keyroots1 = _annotate(t1)
    nodes2, lmds2, keyroots2 = _annotate(t2)
    n1, n2 = len(nodes1), len(nodes2)
    treedist = [[0] * n2 for _ in range(n1)]

    def rename(a: KeyTree, b: KeyTree) -> int:
        return 0 if a.label == b.label else 1

    for i in keyroots1:
        for j in keyroots2:
            m = i - lmds1[i] + 2
            n = j - lmds2[j] + 2
            fd = [[0] * n for _ in range(m)]
            ioff = lmds1[i] - 1
            joff = lmds2[j] - 1
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, m):
                for y in range(1, n):
                    if lmds1[i] == lmds1[x + ioff] and lmds2[j] == lmds2[y + joff]:
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[x - 1][y - 1] + rename(nodes1[x + ioff], nodes2[y + joff]),
                        )
                        treedist[x + ioff][y + joff] = fd[x][y]
                    else:
                        p = lmds1[x + ioff] - 1 - ioff
                        q = lmds2[y + joff] - 1 - joff
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[p][q] + treedist[x + ioff][y + joff],
                        )
    return treedist[n1 - 1][n2 - 1]


def compare_responses(payload1, payload2, tau: float = 0.0) -> bool:
    """Structural equivalence of two response payloads.

    Payloads are (body, mime) pairs; anything unparseable compares unequal.
    The distance budget is ``tau * max(tree sizes)`` with tau=0 meaning exact
    structural match.
    """
    if payload1 is None or payload2 is None:
        return False
    body1, mime1 = payload1
    body2, mime2 = payload2
    if body1 is None or body2 is None:
        return False
    try:
        t1 = key_tree(body1, mime1)
        t2 = key_tree(body2, mime2)
    except PayloadError:
        return False
    distance = tree_edit_distance(t1, t2)
    return distance <= tau * max(t1.size(), t2.size())
