"""Segment boundary prediction: BiLSTM model inference plus an unsupervised fallback."""

from .segmenter import (
    BoundaryPrediction,
    FallbackSegmenter,
    HsegSegmenter,
    Segment,
    Segmenter,
    encode_sentence,
    fallback_segment,
    materialize_segments,
    predict_boundaries,
    word_tokens,
)
from .weights import (
    REQUIRED_SHAPES,
    SegModelWeights,
    WordVectorTable,
    dump_weights,
    load_weights,
    parse_weights,
    save_weights,
)
