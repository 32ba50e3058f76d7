"""End-to-end orchestration, dataset conversion and montage rendering."""

from .config import PipelineConfig, load_config, loads_config
from .convert import convert_external, parse_npy, read_external
from .montage import decode_ppm, encode_ppm, montage, render_montage
from .run import run_pipeline

__all__ = [
    "PipelineConfig",
    "convert_external",
    "decode_ppm",
    "encode_ppm",
    "load_config",
    "loads_config",
    "montage",
    "parse_npy",
    "read_external",
    "render_montage",
    "run_pipeline",
]
