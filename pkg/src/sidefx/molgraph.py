"""Molecular graph encoding: element-group node matrix, bond-typed edges, targets."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .smiles import BOND_ORDER, Molecule

NUM_GROUPS = 15
NUM_BOND_KINDS = len(BOND_ORDER)

_GROUPS = {
    1: ("C",),
    2: ("N",),
    3: ("O",),
    4: ("S", "Se"),
    5: ("F",),
    6: ("P",),
    7: ("Cl",),
    8: ("I",),
    9: ("Br",),
    10: ("Na", "K", "Li"),
    11: ("Ca", "Mg", "Ba", "Sr"),
    12: ("Co", "Tc", "Mn", "Fe"),
    13: ("Au", "Ag", "Pt", "Zn"),
    14: ("B", "Ge", "In", "Tl"),
    15: ("La", "Gd"),
}

ELEMENT_GROUPS: Mapping[str, int] = MappingProxyType(
    {symbol: group for group, symbols in _GROUPS.items() for symbol in symbols}
)


class UnmappedElement(KeyError):
    """An element symbol has no group in the grouping table."""

    def __init__(self, symbol: str):
        self.symbol = symbol
        super().__init__(symbol)

    def __str__(self) -> str:
        return f"element {self.symbol!r} has no group in the grouping table"


def group_element(symbol: str, grouping: Mapping[str, int] = ELEMENT_GROUPS) -> int:
    """Return the 1-based group id of ``symbol``."""
    try:
        return grouping[symbol]
    except KeyError:
        raise UnmappedElement(symbol) from None


@dataclass
class MolGraph:
    """Learning representation of one molecule.

    ``nodes`` is an ``N x 15`` one-hot matrix. ``edges`` is an ``E x 6`` integer
    array of ``(source, target, single, double, triple, aromatic)`` records,
    with each chemical bond present in both directions. ``target`` is the
    binary side-effect vector.
    """

    nodes: np.ndarray
    edges: np.ndarray
    target: np.ndarray
    compound_id: str = ""
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def groups(self) -> np.ndarray:
        """0-based group index of every node."""
        return self.nodes.argmax(axis=1)

    def validate(self) -> None:
        n = self.num_nodes
        if self.nodes.shape[1:] != (NUM_GROUPS,):
            raise ValueError(f"node matrix must have {NUM_GROUPS} columns")
        if not np.array_equal(self.nodes.sum(axis=1), np.ones(n)):
            raise ValueError("every node row must be one-hot")
        if self.edges.shape[1:] != (2 + NUM_BOND_KINDS,):
            raise ValueError("edge records must have length 6")
        if self.num_edges:
            if self.edges[:, :2].min() < 0 or self.edges[:, :2].max() >= n:
                raise ValueError("edge endpoint out of range")
            if not np.array_equal(self.edges[:, 2:].sum(axis=1), np.ones(self.num_edges)):
                raise ValueError("every edge bond label must be one-hot")
            forward = {tuple(r) for r in self.edges.tolist()}
            for h, k, *b in forward:
                if (k, h, *b) not in forward:
                    raise ValueError(f"edge ({h}, {k}) lacks its reverse")
        if not np.isin(self.target, (0, 1)).all():
            raise ValueError("target entries must be 0 or 1")

    def with_target(self, target: np.ndarray) -> "MolGraph":
        return MolGraph(self.nodes, self.edges, np.asarray(target, dtype=np.int8), self.compound_id)


def molecule_to_graph(
    mol: Molecule,
    num_classes: int = 0,
    grouping: Mapping[str, int] = ELEMENT_GROUPS,
    compound_id: str = "",
) -> MolGraph:
    """Encode ``mol`` as a :class:`MolGraph` with an all-zero target."""
    nodes = np.zeros((mol.atom_count, NUM_GROUPS), dtype=np.int8)
    for n, atom in enumerate(mol.atoms):
        nodes[n, group_element(atom.symbol, grouping) - 1] = 1

    edges = np.zeros((2 * mol.bond_count, 2 + NUM_BOND_KINDS), dtype=np.int64)
    for e, bond in enumerate(mol.bonds):
        col = 2 + BOND_ORDER.index(bond.kind)
        edges[2 * e, :2] = bond.i, bond.j
        edges[2 * e + 1, :2] = bond.j, bond.i
        edges[2 * e, col] = edges[2 * e + 1, col] = 1

    return MolGraph(nodes, edges, np.zeros(num_classes, dtype=np.int8), compound_id)
