"""Infinitary term rewriting with proof terms.

Rational infinite terms, ordinal-indexed reduction sequences, proof terms
with machine-checkable permutation-equivalence derivations, and the
condensation / factorisation / compression transformations, each of which
emits an equivalence certificate.
"""

from .ordinal import Ordinal, ZERO, ONE, OMEGA, ord_add, ord_cmp, ord_inf_sum, \
    ord_decompose, ord_cofinal_split
from .errors import (IrwError, OrdinalOverflow, UnsupportedFamily,
                     PreconditionViolated, MalformedTerm, PositionOutOfDomain,
                     ArityMismatch, NonConvergent, MalformedStep,
                     NotComposable, DerivationInvalid, ParseError)

__version__ = "0.1.0"
