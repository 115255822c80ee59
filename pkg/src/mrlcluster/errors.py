"""Exception hierarchy shared by all mrlcluster modules."""


class MrlError(Exception):
    """Base class for all errors raised by this package."""


class ZeroPrefixNorm(MrlError):
    """A prefix slice (or centroid) has zero norm, so cosine is undefined."""


class DimOutOfRange(MrlError):
    """A requested prefix length is outside [1, d]."""


class UnknownDocumentId(MrlError):
    """A pair references a document id absent from the embedding matrix."""

    def __init__(self, missing_ids):
        self.missing_ids = tuple(missing_ids)
        super().__init__(f"unknown document ids: {', '.join(self.missing_ids)}")


class EmptyBatch(MrlError):
    """A loss kernel was called on a batch without pairs."""


class AnchorWithoutPositive(MrlError):
    """A contrastive anchor has an empty positive set."""


class OddPrefix(MrlError):
    """Angle computations need an even prefix length (real/imaginary split)."""


class SingleCluster(MrlError):
    """Nearest-neighbor search needs at least two clusters."""


class ZeroVariance(MrlError):
    """Correlation is undefined when one input has zero variance."""


class SingleClass(MrlError):
    """A threshold metric needs both positive and negative examples."""


class MismatchedDocumentSets(MrlError):
    """Two partitions do not cover the same document set."""


class TooFewSeeds(MrlError):
    """Relational similarity needs at least three aligned rows."""


class EmptyGrid(MrlError):
    """A threshold grid contains no candidate values."""


class EmptyCorpus(MrlError):
    """Class-based TF-IDF needs at least one class with at least one token."""


class MissingText(MrlError):
    """Keyword extraction found cluster members without any text."""

    def __init__(self, missing_ids):
        self.missing_ids = tuple(missing_ids)
        super().__init__(f"missing texts for document ids: {', '.join(self.missing_ids)}")


class FormatError(MrlError):
    """An input file is malformed; carries the offending location."""

    def __init__(self, message, *, path=None, line=None, offset=None):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        prefix = f"[{': '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvariantViolation(MrlError):
    """An internal consistency check failed; indicates a bug, not bad input."""
