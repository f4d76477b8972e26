"""Exception hierarchy shared by all vtr modules."""


class VtrError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(VtrError, ValueError):
    """Operand dimensions are inconsistent (matmul dims, patch divisibility, shift range)."""


class BlockSizeError(VtrError, ValueError):
    """Block sizes of blocked operands disagree, or a block size is invalid."""


class ConfigError(VtrError, ValueError):
    """A model or accelerator configuration violates its invariants."""


class FormatError(VtrError):
    """A container file (VTRW/VTRT/PGM/manifest) is malformed."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FormatError):
    """Container format version is not supported."""


class TruncatedError(FormatError):
    """File ends before the declared payload does."""


class BadDirectoryError(FormatError):
    """Tensor directory is inconsistent (unknown names, bad shapes, gaps or overlaps)."""
