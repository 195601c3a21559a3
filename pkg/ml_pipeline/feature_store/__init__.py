from .feature_definitions import (
    AcousticLayout,
    AcousticSequence,
    FeatureKind,
    InputFrameSequence,
    LanguageId,
    Posteriorgram,
    PosteriorgramKind,
    SpeakerEmbedding,
    UtteranceRecord,
    build_input_frames,
)
from .feature_io import read_feature_file, write_feature_file
from .manifest import CorpusManifest

__all__ = [
    "AcousticLayout",
    "AcousticSequence",
    "CorpusManifest",
    "FeatureKind",
    "InputFrameSequence",
    "LanguageId",
    "Posteriorgram",
    "PosteriorgramKind",
    "SpeakerEmbedding",
    "UtteranceRecord",
    "build_input_frames",
    "read_feature_file",
    "write_feature_file",
]
