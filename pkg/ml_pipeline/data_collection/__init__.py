from .corpus_config import GenerativeConfig
from .corpus_generator import CorpusGenerator, generate_corpus, load_world
from .phone_recognizer import extract_corpus_ppgs, extract_ppg
from .speaker_embedding import speaker_embedding_provider
from .world_model import LatentTrajectory, WorldModel

__all__ = [
    "CorpusGenerator",
    "GenerativeConfig",
    "LatentTrajectory",
    "WorldModel",
    "extract_corpus_ppgs",
    "extract_ppg",
    "generate_corpus",
    "load_world",
    "speaker_embedding_provider",
]
