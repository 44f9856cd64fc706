"""Word-correspondence encodings over a three-attribute branching order.

A tiling instance is a finite list of tile pairs (u, v) over a small
alphabet. A solution is a tile sequence whose concatenated u-parts and
v-parts spell the same string, subject to the modified shape: the first
tile is fixed, every strict prefix keeps the u-part strictly shorter,
and the common string has odd length.

A solution is laid out as a data word interleaving the v-part (on barred
letters) with the u-part: v1 u1 v2 u2 ... Attributes x and y chain
consecutive positions within each part (x forward from odd positions, y
forward from even ones) and z links each v position to its mate in the
u-part. The satisfiability question for the generated formula over the
order x < z > y therefore tracks solvability of the instance.
"""

from dataclasses import dataclass
from itertools import product

from .dataword import DataWord
from .formulas import (TRUE, And, Check, Finally, Freeze, Globally, Letter,
                       Next, Not, Or, Until, WeakNext, conj, disj, next_power)
from .order import QuasiOrder, close


class MalformedInstance(ValueError):
    pass


class NotASolution(ValueError):
    pass


MARKS = ("o", "e", "end")


def pcp_order() -> QuasiOrder:
    """Attributes x, y, z with x and y incomparable below z."""
    return close(("x", "y", "z"), (("x", "z"), ("y", "z")))


@dataclass(frozen=True)
class PcpInstance:
    """Tiles as (u, v) string pairs; the first tile is the forced start."""

    tiles: tuple

    def __post_init__(self):
        if not self.tiles:
            raise MalformedInstance("no tiles")
        for u, v in self.tiles:
            if not u and not v:
                raise MalformedInstance("tile with both parts empty")
            for ch in u + v:
                if not (ch.isascii() and ch.isalnum() and len(ch) == 1):
                    raise MalformedInstance(f"bad symbol {ch!r}")
        u0, v0 = self.tiles[0]
        if len(u0) <= 1:
            raise MalformedInstance("first tile needs |u| > 1")
        if len(v0) <= 2:
            raise MalformedInstance("first tile needs |v| > 2")

    @property
    def alphabet(self) -> frozenset:
        return frozenset(ch for u, v in self.tiles for ch in u + v)


def parse_instance(text: str) -> PcpInstance:
    """One `tile <u> <v>` line per tile, `-` for an empty part."""
    tiles = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "tile":
            raise MalformedInstance(f"bad line {line!r}")
        u, v = parts[1], parts[2]
        tiles.append(("" if u == "-" else u, "" if v == "-" else v))
    return PcpInstance(tuple(tiles))


def format_instance(p: PcpInstance) -> str:
    return "\n".join(f"tile {u or '-'} {v or '-'}" for u, v in p.tiles)


# ---------------------------------------------------------------------------
# Letters: one symbol proposition (u<ch> plain, v<ch> barred) plus parity
# and tile-end marks, rendered like the other encodings in this package.


def render_letter(props) -> str:
    return "_".join(sorted(props))


def letter_props(letter: str) -> frozenset:
    return frozenset(letter.split("_"))


def instance_alphabet(p: PcpInstance) -> tuple:
    letters = []
    for ch in sorted(p.alphabet):
        for side in ("u", "v"):
            for parity, end in product(("o", "e"), (False, True)):
                props = {side + ch, parity}
                if end:
                    props.add("end")
                letters.append(render_letter(props))
    return tuple(sorted(letters))


# ---------------------------------------------------------------------------
# Solutions and their data-word layout


def validate_solution(p: PcpInstance, seq) -> bool:
    """Tile indices are 1-based; returns False on any defect."""
    if not seq or any(not (1 <= i <= len(p.tiles)) for i in seq):
        return False
    if seq[0] != 1:
        return False
    ulen = vlen = 0
    for i in seq[:-1]:
        u, v = p.tiles[i - 1]
        ulen += len(u)
        vlen += len(v)
        if ulen >= vlen:
            return False
    u = "".join(p.tiles[i - 1][0] for i in seq)
    v = "".join(p.tiles[i - 1][1] for i in seq)
    return u == v and len(u) % 2 == 1


def _chain_values(i: int) -> tuple:
    # 1-based subword position -> (x, y): odd positions share x forward,
    # even positions share y forward
    x = 2 * ((i + 1) // 2)
    y = 2 * (i // 2) + 1
    return x, y


def encode_solution(p: PcpInstance, seq) -> DataWord:
    """Lay a validated solution out as a data word: per tile the barred
    v letters then the u letters, with x/y chaining each subword and z
    tying the i-th v position to the i-th u position."""
    if not validate_solution(p, seq):
        raise NotASolution(f"{list(seq)} does not solve this instance")
    positions = []
    iu = iv = 0
    for i in seq:
        u, v = p.tiles[i - 1]
        block = []
        for ch in v:
            iv += 1
            x, y = _chain_values(iv)
            block.append(({"v" + ch, "o" if iv % 2 else "e"},
                          {"x": x, "y": y, "z": 10 * iv}))
        for ch in u:
            iu += 1
            x, y = _chain_values(iu)
            block.append(({"u" + ch, "o" if iu % 2 else "e"},
                          {"x": x, "y": y, "z": 10 * iu}))
        block[-1][0].add("end")
        positions.extend(block)
    return DataWord.make(pcp_order(),
                         [(render_letter(pr), val) for pr, val in positions])


def lift_to_order(word: DataWord, bigger: QuasiOrder) -> DataWord:
    """Re-attribute a word over a larger order: existing attributes keep
    their values, new ones all get one shared value unused in the word."""
    old = set(word.order.attrs)
    if not old <= set(bigger.attrs):
        raise ValueError("target order must extend the word's attributes")
    fresh = 1 + max((v for i in range(len(word))
                     for v in word.valuation(i).values()), default=0)
    positions = []
    for i in range(len(word)):
        val = dict(word.valuation(i))
        for a in bigger.attrs:
            if a not in old:
                val[a] = fresh
        positions.append((word.letter(i), val))
    return DataWord.make(bigger, positions)


# ---------------------------------------------------------------------------
# Formula


def _implies(a, b):
    return Or(Not(a), b)


def _iff(a, b):
    return And(_implies(a, b), _implies(b, a))


class _Builder:
    def __init__(self, p: PcpInstance, bounded_until: bool):
        self.p = p
        self.alphabet = instance_alphabet(p)
        self._letters = {s: Letter(s) for s in self.alphabet}
        self._props = {}
        self.scan = (2 * max(max(len(u), len(v)) for u, v in p.tiles)
                     if bounded_until else None)
        self.u_any = disj([self.prop("u" + ch) for ch in sorted(p.alphabet)])
        self.v_any = disj([self.prop("v" + ch) for ch in sorted(p.alphabet)])
        self.end = self.prop("end")

    def prop(self, name):
        if name not in self._props:
            self._props[name] = disj([self._letters[s] for s in self.alphabet
                                      if name in letter_props(s)])
        return self._props[name]

    def until(self, a, b):
        if self.scan is None:
            return Until(a, b)
        steps = []
        for j in range(self.scan + 1):
            steps.append(conj([next_power(a, i) for i in range(j)]
                              + [next_power(b, j)]))
        return disj(steps)

    def tile_formula(self, u, v):
        parts = [next_power(self.prop("v" + ch), i)
                 for i, ch in enumerate(v)]
        parts += [next_power(self.prop("u" + ch), len(v) + i)
                  for i, ch in enumerate(u)]
        span = len(u) + len(v)
        parts += [next_power(Not(self.end), i) for i in range(span - 1)]
        parts.append(next_power(self.end, span - 1))
        return conj(parts)

    def phi_structure(self):
        tiles = [self.tile_formula(u, v) for u, v in self.p.tiles]
        chain = And(tiles[0],
                    Globally(_implies(self.end, WeakNext(disj(tiles)))))
        o, e = self.prop("o"), self.prop("e")
        v0 = self.p.tiles[0][1]
        base = conj([Globally(_iff(e, Not(o))), o, next_power(o, len(v0))])
        alt = []
        for part in (self.u_any, self.v_any):
            for here, nxt in ((o, e), (e, o)):
                step = Or(self.until(Not(part), And(part, nxt)),
                          Globally(Not(part)))
                alt.append(Globally(_implies(And(part, here),
                                             WeakNext(step))))
        return conj([chain, base] + alt)

    def _twice(self, part):
        both = []
        for mine, other in (("x", "y"), ("y", "x")):
            again = Finally(And(part, Check(mine)))
            body = And(Not(Finally(Check(other))),
                       Not(Next(Finally(And(part, And(Check(mine),
                                                      Next(again)))))))
            both.append(Globally(_implies(part, Freeze(mine, body))))
        return conj(both)

    def _links(self, part):
        o, e = self.prop("o"), self.prop("e")
        fwd_o = And(Freeze("x", Finally(conj([Check("x"), part, e]))),
                    Not(Freeze("y", Next(Finally(And(Check("y"), part))))))
        fwd_e = And(Freeze("y", Finally(conj([Check("y"), part, o]))),
                    Not(Freeze("x", Next(Finally(And(Check("x"), part))))))
        return Globally(And(
            _implies(conj([part, o, Next(Finally(part))]), fwd_o),
            _implies(And(part, e), fwd_e)))

    def phi_chain(self):
        return conj([self._twice(self.u_any), self._links(self.u_any),
                     self._twice(self.v_any), self._links(self.v_any)])

    def phi_sync(self):
        v0 = self.p.tiles[0][1]
        first = Freeze("z", next_power(Check("z"), len(v0)))
        match = conj([
            Globally(_implies(
                self.prop("v" + ch),
                Freeze("z", Next(Finally(And(self.prop("u" + ch),
                                             Check("z")))))))
            for ch in sorted(self.p.alphabet)])
        last = Globally(_implies(
            And(self.v_any, Not(Next(Finally(self.v_any)))),
            Freeze("z", Next(Finally(And(Check("z"),
                                         Not(Next(TRUE))))))))
        return conj([first, match, last])

    def build(self):
        return conj([self.phi_structure(), self.phi_chain(),
                     self.phi_sync()])


def tile_encoding(p: PcpInstance, index: int):
    """The formula pinning the next |v|+|u| positions to tile `index`
    (1-based): barred v letters, then u letters, end mark on the last."""
    if not (1 <= index <= len(p.tiles)):
        raise MalformedInstance(f"no tile {index}")
    u, v = p.tiles[index - 1]
    return _Builder(p, False).tile_formula(u, v)


@dataclass(frozen=True)
class PcpFormulaParts:
    structure: object
    chain: object
    sync: object
    order: QuasiOrder
    alphabet: tuple


def build_formula_parts(p: PcpInstance,
                        bounded_until: bool = False) -> PcpFormulaParts:
    b = _Builder(p, bounded_until)
    return PcpFormulaParts(b.phi_structure(), b.phi_chain(), b.phi_sync(),
                           pcp_order(), b.alphabet)


def build_formula(p: PcpInstance, bounded_until: bool = False):
    """The solvability formula and the x < z > y order it lives over."""
    b = _Builder(p, bounded_until)
    return b.build(), pcp_order()
