"""A small SMILES reader producing heavy-atom molecules.

Only the part of the notation needed to recover connectivity, element
symbols and bond kinds is supported. Hydrogens (implicit or written as
bracket atoms) are dropped, and charge, isotope, stereo and atom-class
markers inside brackets are accepted but discarded. Aromaticity is purely
syntactic: lowercase atoms and ``:`` bonds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator


class BondKind(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"


# Fixed one-hot order used everywhere downstream (edge records, data files).
BOND_ORDER = (BondKind.SINGLE, BondKind.DOUBLE, BondKind.TRIPLE, BondKind.AROMATIC)

ELEMENTS = frozenset(
    """
    H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni
    Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe
    Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au
    Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf
    Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og
    """.split()
)

_ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
_AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as", "te"}

_BOND_SYMBOLS = {
    "-": BondKind.SINGLE,
    "/": BondKind.SINGLE,
    "\\": BondKind.SINGLE,
    "=": BondKind.DOUBLE,
    "#": BondKind.TRIPLE,
    ":": BondKind.AROMATIC,
}


class SmilesError(ValueError):
    """Raised when a SMILES string is malformed or outside the supported subset."""

    def __init__(self, message: str, text: str = "", position: int | None = None):
        self.text = text
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}: {text!r}" if text else message)


@dataclass(frozen=True)
class Atom:
    symbol: str
    aromatic: bool = False


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    kind: BondKind


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]

    @property
    def atom_count(self) -> int:
        return len(self.atoms)

    @property
    def bond_count(self) -> int:
        return len(self.bonds)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        # (symbol, aromatic, is_hydrogen)
        self.atoms: list[tuple[str, bool, bool]] = []
        self.bonds: dict[tuple[int, int], BondKind] = {}
        self.prev: int | None = None
        self.pending: str | None = None
        self.pending_pos = 0
        self.branches: list[int] = []
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def error(self, message: str, position: int | None = None) -> SmilesError:
        return SmilesError(message, self.text, self.pos if position is None else position)

    def run(self) -> Molecule:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "[":
                self.bracket_atom()
            elif ch.isalpha():
                self.organic_atom()
            elif ch in _BOND_SYMBOLS:
                if self.prev is None:
                    raise self.error("bond symbol without a preceding atom")
                if self.pending is not None:
                    raise self.error("two consecutive bond symbols")
                self.pending, self.pending_pos = ch, self.pos
                self.pos += 1
            elif ch == "(":
                if self.prev is None:
                    raise self.error("branch opened without a preceding atom")
                if self.pending is not None:
                    raise self.error("bond symbol before branch")
                self.branches.append(self.prev)
                self.pos += 1
            elif ch == ")":
                if not self.branches:
                    raise self.error("unbalanced parentheses: unexpected ')'")
                if self.pending is not None:
                    raise self.error("dangling bond symbol before ')'")
                if text[self.pos - 1] == "(":
                    raise self.error("empty branch")
                self.prev = self.branches.pop()
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                self.ring_closure()
            elif ch == ".":
                if self.prev is None:
                    raise self.error("component separator without a preceding atom")
                if self.pending is not None:
                    raise self.error("dangling bond symbol before '.'")
                if self.branches:
                    raise self.error("component separator inside a branch")
                self.prev = None
                self.pos += 1
            elif ch == "*":
                raise self.error("wildcard atoms are not supported")
            elif ch == ">":
                raise self.error("reaction syntax is not supported")
            elif ch == "$":
                raise self.error("quadruple bonds are not supported")
            else:
                raise self.error(f"unexpected character {ch!r}")

        if self.pending is not None:
            raise self.error("dangling bond symbol at end of input", self.pending_pos)
        if self.branches:
            raise self.error("unbalanced parentheses: unclosed '('", len(text))
        if self.rings:
            num, (_, _, where) = min(self.rings.items())
            raise self.error(f"unmatched ring closure {num}", where)
        if not self.atoms:
            raise self.error("empty atom stream", 0)
        return self._heavy_molecule()

    def organic_atom(self) -> None:
        text, start = self.text, self.pos
        two = text[start : start + 2]
        if two in ("Cl", "Br"):
            symbol, aromatic = two, False
        elif text[start] in _ORGANIC:
            symbol, aromatic = text[start], False
        elif text[start] in _AROMATIC_ORGANIC:
            symbol, aromatic = text[start].upper(), True
        else:
            raise self.error(f"unknown element symbol {text[start]!r} (use brackets for non-organic atoms)")
        self.pos += len(symbol)
        self.add_atom(symbol, aromatic, False)

    def bracket_atom(self) -> None:
        text = self.text
        start = self.pos
        end = text.find("]", start)
        if end < 0:
            raise self.error("malformed bracket atom: missing ']'")
        body = text[start + 1 : end]
        i = 0
        while i < len(body) and body[i].isdigit():
            i += 1
        if i == len(body):
            raise self.error("malformed bracket atom: missing element symbol", start)

        rest = body[i:]
        if rest[:2] in _AROMATIC_BRACKET and rest[:2] != rest[:1]:
            symbol, aromatic, n = rest[:2].capitalize(), True, 2
        elif rest[:1] in _AROMATIC_BRACKET:
            symbol, aromatic, n = rest[:1].upper(), True, 1
        elif rest[:1] == "*":
            raise self.error("wildcard atoms are not supported", start)
        elif rest[:1].isupper():
            if rest[:2] in ELEMENTS and len(rest) > 1 and rest[1].islower():
                symbol, n = rest[:2], 2
            elif rest[:1] in ELEMENTS:
                symbol, n = rest[:1], 1
            else:
                raise self.error(f"unknown element symbol {rest[:2]!r}", start)
            aromatic = False
        else:
            raise self.error(f"malformed bracket atom [{body}]", start)
        if len(rest) > n and rest[n].islower():
            raise self.error(f"unknown element symbol {rest[: n + 1]!r}", start)

        tail = rest[n:]
        j = 0
        # chirality: @, @@, or @TH1/@AL2/@SP3/@TB12/@OH25
        if tail[j : j + 1] == "@":
            j += 1
            if tail[j : j + 1] == "@":
                j += 1
            elif tail[j : j + 2] in ("TH", "AL", "SP", "TB", "OH"):
                j += 2
                while j < len(tail) and tail[j].isdigit():
                    j += 1
        if tail[j : j + 1] == "H":
            j += 1
            while j < len(tail) and tail[j].isdigit():
                j += 1
        if tail[j : j + 1] in ("+", "-"):
            sign = tail[j]
            j += 1
            if j < len(tail) and tail[j].isdigit():
                while j < len(tail) and tail[j].isdigit():
                    j += 1
            else:
                while tail[j : j + 1] == sign:
                    j += 1
        if tail[j : j + 1] == ":":
            j += 1
            if not tail[j : j + 1].isdigit():
                raise self.error(f"malformed bracket atom [{body}]", start)
            while j < len(tail) and tail[j].isdigit():
                j += 1
        if j != len(tail):
            raise self.error(f"malformed bracket atom [{body}]", start)

        self.pos = end + 1
        self.add_atom(symbol, aromatic, symbol == "H")

    def ring_closure(self) -> None:
        text, start = self.text, self.pos
        if self.prev is None:
            raise self.error("ring closure without a preceding atom")
        if text[start] == "%":
            digits = text[start + 1 : start + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise self.error("'%' must be followed by two digits")
            num = int(digits)
            self.pos += 3
        else:
            num = int(text[start])
            self.pos += 1
        symbol, self.pending = self.pending, None
        if num not in self.rings:
            self.rings[num] = (self.prev, symbol, start)
            return
        partner, other_symbol, _ = self.rings.pop(num)
        if partner == self.prev:
            raise self.error(f"ring closure {num} bonds an atom to itself", start)
        if symbol and other_symbol and _BOND_SYMBOLS[symbol] != _BOND_SYMBOLS[other_symbol]:
            raise self.error(f"conflicting bond symbols on ring closure {num}", start)
        self.add_bond(partner, self.prev, symbol or other_symbol, start)

    def add_atom(self, symbol: str, aromatic: bool, is_h: bool) -> None:
        idx = len(self.atoms)
        self.atoms.append((symbol, aromatic, is_h))
        if self.prev is not None:
            symbol_ = self.pending
            self.pending = None
            self.add_bond(self.prev, idx, symbol_, self.pos)
        self.prev = idx

    def add_bond(self, i: int, j: int, symbol: str | None, position: int) -> None:
        key = (min(i, j), max(i, j))
        if key in self.bonds:
            raise self.error("duplicate bond between the same pair of atoms", position)
        if symbol is not None:
            kind = _BOND_SYMBOLS[symbol]
        elif self.atoms[i][1] and self.atoms[j][1]:
            kind = BondKind.AROMATIC
        else:
            kind = BondKind.SINGLE
        self.bonds[key] = kind

    def _heavy_molecule(self) -> Molecule:
        remap: dict[int, int] = {}
        atoms = []
        for idx, (symbol, aromatic, is_h) in enumerate(self.atoms):
            if not is_h:
                remap[idx] = len(atoms)
                atoms.append(Atom(symbol, aromatic))
        if not atoms:
            raise self.error("empty atom stream (hydrogens only)", 0)
        bonds = tuple(
            Bond(remap[i], remap[j], kind)
            for (i, j), kind in self.bonds.items()
            if i in remap and j in remap
        )
        return Molecule(tuple(atoms), bonds)


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a heavy-atom :class:`Molecule`.

    Raises:
        SmilesError: on malformed input or constructs outside the supported subset.
    """
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    text = text.strip()
    if not text:
        raise SmilesError("empty SMILES string")
    if not text.isascii():
        raise SmilesError("SMILES must be ASCII", text)
    return _Parser(text).run()


def read_smiles_csv(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield ``(compound_id, smiles)`` pairs from a two-column CSV.

    A header row is skipped when its second cell is literally ``smiles``
    (case-insensitive). Blank lines are ignored.
    """
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            if lineno == 1 and row[1].strip().lower() == "smiles":
                continue
            yield row[0].strip(), row[1].strip()
