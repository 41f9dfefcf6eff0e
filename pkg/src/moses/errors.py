"""Exception types shared across the package."""


class MosesError(Exception):
    """Base class for all errors raised by this package."""


class EmptyText(MosesError):
    """Tokenization produced no tokens."""


class MissingLogprobs(MosesError):
    """Log-probability features requested but the sample carries none."""


class DimensionMismatch(MosesError):
    """Vector length does not match the fitted model's dimension."""


class SchemaError(MosesError):
    """An ingest record violates the JSONL schema."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DuplicateId(SchemaError):
    """Two ingest records share an id."""


class InconsistentEmbeddingDim(SchemaError):
    """Embeddings of differing lengths within one ingest batch."""


class VersionError(MosesError):
    """Snapshot carries an unsupported schema_version."""


class ParseError(MosesError):
    """Snapshot file is not valid JSON or is structurally broken."""


class TooFewSamples(MosesError):
    """A style has fewer samples than the requested prototype count."""


class EmptyIndex(MosesError):
    """Routing attempted against an index with no prototypes."""


class TooFewReferences(MosesError):
    """Nearest-vote baseline asked for more neighbours than references exist."""


class LengthMismatch(MosesError):
    """Paired sequences of unequal length."""
