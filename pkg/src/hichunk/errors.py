"""Exception hierarchy shared across the package."""


class HichunkError(Exception):
    """Base class for all errors raised by hichunk."""


class ConfigError(HichunkError, ValueError):
    """Invalid or inconsistent configuration."""


class ZeroNormError(HichunkError, ValueError):
    """Cosine requested against an all-zero vector."""


# embedding

class EmbeddingError(HichunkError):
    pass


class EmbeddingTransportError(EmbeddingError):
    """The remote embedding service could not be reached after retries."""


class EmbeddingContractError(EmbeddingError):
    """The service answered with something that violates the contract (dims, count)."""


# segmentation weights

class WeightsError(HichunkError):
    pass


class MagicMismatchError(WeightsError):
    pass


class UnsupportedWeightsVersionError(WeightsError):
    pass


class TruncatedWeightsError(WeightsError):
    pass


class MissingTensorError(WeightsError):
    def __init__(self, name: str):
        super().__init__(f"missing tensor {name!r}")
        self.name = name


class TensorShapeError(WeightsError):
    def __init__(self, name: str, expected, got):
        super().__init__(f"tensor {name!r}: expected shape {tuple(expected)}, got {tuple(got)}")
        self.name = name


class NonFiniteTensorError(WeightsError):
    def __init__(self, name: str):
        super().__init__(f"tensor {name!r} contains non-finite values")
        self.name = name


# clustering

class CliqueLimitError(HichunkError):
    """Graph too large for exact maximal-clique enumeration."""


# index store

class IndexFormatError(HichunkError):
    pass


class MissingIndexFileError(IndexFormatError, FileNotFoundError):
    pass


class UnsupportedIndexVersionError(IndexFormatError):
    pass


class ChecksumError(IndexFormatError):
    """Vector payload is truncated or its CRC does not match."""


# reader

class ReaderError(HichunkError):
    pass
