"""Double-JPEG-compression tamper detection with multi-scale histogram CNNs."""

from .jpeg_codec import CoeffImage, JpegParseError, QuantTable, encode_jpeg, parse_jpeg, quality_to_table
from .features import extract_features
from .msd_net import MsdModel, classify_block, load_msd, save_msd, train_msd
from .localization import binarize, count_windows, detect, score

__all__ = [
    "CoeffImage", "JpegParseError", "QuantTable", "encode_jpeg", "parse_jpeg", "quality_to_table",
    "extract_features", "MsdModel", "classify_block", "load_msd", "save_msd", "train_msd",
    "binarize", "count_windows", "detect", "score",
]
