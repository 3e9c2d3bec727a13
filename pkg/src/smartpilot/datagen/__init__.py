"""Seeded synthetic data: assembly-line windows, demand series, manual corpus."""

from .assembly import (
    BORDERLINE_ETA,
    BORDERLINE_FRACTION,
    BORDERLINE_SHIFT,
    CLASS_DEFECTS,
    DEFECT_SIGN,
    DEFECTS,
    FRAME_PERIOD_MS,
    IMAGE_NOISE,
    IMAGE_SHIFT,
    MIN_BURST_FRAMES,
    NOISE_CLIP,
    STRONG_ETA,
    STRONG_SHIFT,
    AssemblyDataset,
    AssemblyMetadata,
    GenConfig,
    ReplayMetadata,
    channel_names,
    class_channels,
    default_anomaly_mix,
    defect_channels,
    gen_assembly,
    gen_replay,
)
from .corpus import (
    OOD_QUESTIONS,
    STOPWORD_LEMMAS,
    CorpusBundle,
    CorpusGenConfig,
    GoldQuestion,
    content_lemmas,
    gen_corpus,
    save_corpus,
)
from .forecast import (
    FEATURE_NAMES,
    ForecastBundle,
    ForecastGenConfig,
    ForecastMetadata,
    gen_forecast,
    product_names,
)

__all__ = [
    "BORDERLINE_ETA",
    "BORDERLINE_FRACTION",
    "BORDERLINE_SHIFT",
    "CLASS_DEFECTS",
    "DEFECTS",
    "DEFECT_SIGN",
    "FEATURE_NAMES",
    "FRAME_PERIOD_MS",
    "IMAGE_NOISE",
    "IMAGE_SHIFT",
    "MIN_BURST_FRAMES",
    "NOISE_CLIP",
    "OOD_QUESTIONS",
    "STOPWORD_LEMMAS",
    "STRONG_ETA",
    "STRONG_SHIFT",
    "AssemblyDataset",
    "AssemblyMetadata",
    "CorpusBundle",
    "CorpusGenConfig",
    "ForecastBundle",
    "ForecastGenConfig",
    "ForecastMetadata",
    "GenConfig",
    "GoldQuestion",
    "ReplayMetadata",
    "channel_names",
    "class_channels",
    "content_lemmas",
    "default_anomaly_mix",
    "defect_channels",
    "gen_assembly",
    "gen_corpus",
    "gen_forecast",
    "gen_replay",
    "product_names",
    "save_corpus",
]
