"""Python access to the mvhgnn engine (training, encoding, retrieval metrics)."""

from ._core import (
    Model,
    MvhgnnError,
    build_camera_rig,
    compute_metrics,
    cosine_lr,
    encode,
    generate_dataset,
    gradcheck,
    margin_statistic,
    rank_gallery,
    read_archive,
    train,
    write_archive,
)

METRIC_COLUMNS = ("NN", "FT", "ST", "nDCG", "E", "MRR", "mAP")

__all__ = [
    "METRIC_COLUMNS",
    "Model",
    "MvhgnnError",
    "build_camera_rig",
    "compute_metrics",
    "cosine_lr",
    "encode",
    "generate_dataset",
    "gradcheck",
    "margin_statistic",
    "rank_gallery",
    "read_archive",
    "train",
    "write_archive",
]
