"""Cephalometric landmark synthesis, topology conditioning, prompts and evaluation."""

from .ait import RasterStyle, color_nodes, gradient_edge, graph_distances, rasterize
from .errors import CephforgeError, ConfigError, ValidationError
from .heatmap import CodecConfig, HeatmapStack, decode, encode, mse_loss
from .metrics import EvalReport, compare_reports, evaluate, radial_errors
from .mira import AugmentConfig, GlobalAffine, Provenance, apply_affine, apply_angle_augmentation, mira_generate
from .pdg import Prompt, PromptLexicon, enumerate_valid, generate_prompts, load_lexicon, validate_prompt
from .schema import AngleConstraint, AnatomySchema, LandmarkSet, load_schema, measure_angle, validate_landmark_set

__version__ = "0.1.0"
