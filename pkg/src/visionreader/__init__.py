"""Desk-scale OCR visual question answering toolkit."""

from .data import (
    CATEGORIES,
    BookMetadata,
    ImageFeatureBundle,
    OCRToken,
    ObjectRegion,
    QARecord,
    Vocabulary,
    assign_splits,
    build_vocabulary,
    load_dataset,
    load_feature_bundles,
    save_dataset,
    tokenize,
)
from .estimator import MetadataCleaner, VisionReaderQA
from .forge import bucket_by_length, clean_metadata, compute_stats, generate_qa, load_templates
from .fusion import FusionConfig, FusionEmbedding, fuse, normalize_bbox
from .metrics import EvalPair, agreement_study, evaluate, exact_match, ocr_coverage_bucket, token_f1
from .model import ModelConfig, VisionReaderNet, greedy_decode
from .synthetic import SyntheticFeatureProvider
from .training import TrainSchedule, run_data_fraction_sweep, train
from .validation import QAInput

__version__ = "0.1.0"
