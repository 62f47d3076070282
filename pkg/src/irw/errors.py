"""Exception types shared across the library."""


class IrwError(Exception):
    """Base class for all library errors."""


class OrdinalOverflow(IrwError):
    """An ordinal operation would need an exponent that is itself >= w."""


class UnsupportedFamily(IrwError):
    """An indexed family has no declared pattern, or its declared pattern
    fails verification at the sampled indices."""


class PreconditionViolated(IrwError):
    pass


class MalformedTerm(IrwError):
    def __init__(self, node, reason):
        super().__init__(f"node {node}: {reason}")
        self.node = node
        self.reason = reason


class PositionOutOfDomain(IrwError):
    pass


class ArityMismatch(IrwError):
    pass


class NonConvergent(IrwError):
    """The denoted activity admits no strongly convergent realization.

    `witness` points at the offending cycle or family when known.
    """

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class MalformedStep(IrwError):
    pass


class NotComposable(IrwError):
    def __init__(self, path, left_tgt=None, right_src=None):
        super().__init__(f"composition mismatch at {path}")
        self.path = path
        self.left_tgt = left_tgt
        self.right_src = right_src


class DerivationInvalid(IrwError):
    def __init__(self, path, reason):
        super().__init__(f"at {path}: {reason}")
        self.path = path
        self.reason = reason


class ParseError(IrwError):
    def __init__(self, line, col, expected):
        super().__init__(f"line {line}, col {col}: expected {expected}")
        self.line = line
        self.col = col
        self.expected = expected
