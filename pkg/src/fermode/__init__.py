"""Exact simulation of fermionic and bosonic mode entanglement under the parity superselection rule."""

__version__ = "0.1.0"
