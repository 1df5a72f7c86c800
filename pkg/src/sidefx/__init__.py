"""Drug side-effect prediction from molecular graphs with a recurrent GNN."""

__version__ = "0.1.0"

from .gnn import GnnParams, gnn_backward, gnn_forward, predict
from .molgraph import ELEMENT_GROUPS, MolGraph, UnmappedElement, group_element, molecule_to_graph
from .smiles import Molecule, SmilesError, parse_smiles

__all__ = [
    "ELEMENT_GROUPS",
    "GnnParams",
    "MolGraph",
    "Molecule",
    "SmilesError",
    "UnmappedElement",
    "gnn_backward",
    "gnn_forward",
    "group_element",
    "molecule_to_graph",
    "parse_smiles",
    "predict",
]
