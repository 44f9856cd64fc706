"""Priority-channel encoding of nested configurations.

A configuration of a depth-k system serializes to a channel word in
pre-order: a node at level i > 0 becomes the letter (state, k - i), and a
sentinel `$` with the top priority k - 1 closes the word. Letters deeper
in the tree carry lower priority, so a letter can be superseded (deleted
in favour of its successor) exactly when it labels a leaf; the channel's
superseding dynamics therefore mirror innermost deletions on the tree,
and their closures coincide with the embedding downset.

Only the configuration encoding and the superseding dynamics live here;
the channel controller that fires rewrite rules by rotating the channel
is a complexity-proof device with no desk-scale content.
"""

import re
from dataclasses import dataclass

from .ncs import NcsConfig, mk_config

DOLLAR = "$"


class Malformed(ValueError):
    """Channel content does not spell a pre-order tree walk."""


@dataclass(frozen=True)
class PcsLetter:
    symbol: str
    priority: int

    def __post_init__(self):
        if self.priority < 0:
            raise ValueError("priority must be non-negative")


@dataclass(frozen=True)
class PcsChannel:
    content: tuple[PcsLetter, ...]

    def __len__(self):
        return len(self.content)

    def __iter__(self):
        return iter(self.content)


def format_channel(ch: PcsChannel) -> str:
    return "".join(f"({l.symbol},{l.priority})" for l in ch.content)


_LETTER = re.compile(r"\(([^,()\s]+),(\d+)\)")


def parse_channel(text: str) -> PcsChannel:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _LETTER.match(text, pos)
        if not m:
            raise ValueError(f"cannot read a letter at {text[pos:]!r}")
        out.append(PcsLetter(m.group(1), int(m.group(2))))
        pos = m.end()
    return PcsChannel(tuple(out))


def encode_config(c: NcsConfig, k: int) -> tuple[str, PcsChannel]:
    """Control state plus the pre-order channel word, children visited
    in canonical order so equal configurations encode equally."""
    letters = []

    def walk(node, level):
        for child in sorted(node.children):
            if level + 1 > k:
                raise ValueError(f"configuration deeper than {k}")
            letters.append(PcsLetter(child.state, k - (level + 1)))
            walk(child, level + 1)

    walk(c, 0)
    letters.append(PcsLetter(DOLLAR, k - 1))
    return c.state, PcsChannel(tuple(letters))


def superseding_steps(ch: PcsChannel) -> set:
    """All channels obtained by deleting one letter whose immediate
    successor carries greater or equal priority."""
    out = set()
    for i in range(len(ch.content) - 1):
        if ch.content[i + 1].priority >= ch.content[i].priority:
            out.add(PcsChannel(ch.content[:i] + ch.content[i + 1:]))
    return out


def decode(control: str, ch: PcsChannel, k: int) -> NcsConfig:
    """Inverse of encode_config; raises Malformed when the priority
    sequence is not a pre-order walk of some depth-k tree."""
    letters = ch.content
    if not letters or letters[-1] != PcsLetter(DOLLAR, k - 1):
        raise Malformed("channel must end with the top-priority sentinel")
    body = letters[:-1]
    if any(l.symbol == DOLLAR for l in body):
        raise Malformed("sentinel letter inside the body")

    def parse_nodes(i, level):
        children = []
        while i < len(body):
            lv = k - body[i].priority
            if lv <= level:
                break
            if lv != level + 1:
                raise Malformed(
                    f"letter at level {lv} has no level-{lv - 1} ancestor")
            state = body[i].symbol
            subs, i = parse_nodes(i + 1, level + 1)
            children.append(mk_config(state, subs))
        return children, i

    children, i = parse_nodes(0, 0)
    if i != len(body):
        raise Malformed("body letter shallower than the root")
    return mk_config(control, children)
