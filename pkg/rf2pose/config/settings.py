"""
Settings module for the rf2pose application.
"""
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv(Path(__file__).resolve().parent.parent.parent / ".env")

# Base paths
ROOT_DIR = Path(__file__).resolve().parent.parent.parent
DATA_ROOT = os.environ.get("RF2POSE_DATA_ROOT", os.path.join(ROOT_DIR, "data"))
OUTPUT_DIR = os.environ.get("RF2POSE_OUTPUT_DIR", os.path.join(ROOT_DIR, "runs"))
SKELETON_DIR = Path(__file__).resolve().parent.parent / "data" / "skeletons"

# Runtime settings
DEVICE = os.environ.get("RF2POSE_DEVICE", "cpu")
LOG_LEVEL = os.environ.get("RF2POSE_LOG_LEVEL", "INFO").upper()
SHOW_PROGRESS = os.environ.get("RF2POSE_PROGRESS", "1").lower() not in ("0", "false", "no")

# Per-source signal layout: (channels, length), joint count, skeleton file
SOURCES = {
    "wifi": {"signal_shape": (60, 180), "joint_count": 14, "skeleton": "wifi.txt"},
    "uwb": {"signal_shape": (70, 40), "joint_count": 19, "skeleton": "uwb.txt"},
    "mmwave": {"signal_shape": (5, 493), "joint_count": 17, "skeleton": "mmwave.txt"},
    "synthetic": {"signal_shape": None, "joint_count": 6, "skeleton": "synthetic.txt"},
}
MMWAVE_MAX_POINTS = 493

# Held-out subject/environment counts per source for the cross-domain splits
HELD_OUT_COUNTS = {
    ("wifi", "cross-subject"): 1,
    ("wifi", "cross-environment"): 1,
    ("uwb", "cross-subject"): 1,
    ("uwb", "cross-environment"): 1,
    ("mmwave", "cross-subject"): 8,
    ("mmwave", "cross-environment"): 1,
    ("synthetic", "cross-subject"): 1,
    ("synthetic", "cross-environment"): 1,
}

# Generative model defaults
DIFFUSION_STEPS = 1000
BETA_MIN = 1e-5
BETA_MAX = 1e-1
DDIM_STEPS = 100
DDIM_ETA = 0.0
DIFFUSION_LR = 1e-4
GENERATOR_LR = 2e-4
DISCRIMINATOR_LR = 1e-4
N_CRITIC = 5
GRADIENT_PENALTY = 10.0
GEN_EPOCHS = 1000
GEN_BATCH_SIZE = 128
EMBED_WIDTH = 128
TIME_WIDTH = 128
BACKBONE_FILTERS = (256, 512, 256)
BACKBONE_KERNELS = (11, 7, 5)
DISCRIMINATOR_FILTERS = 64
LEAKY_SLOPE = 0.2

# Pose estimator defaults
HPE_LAMBDA = 1.0
HPE_LR = 1e-4
HPE_EPOCHS = 200
HPE_BATCH_SIZE = 32
ENCODER_FILTERS = 256
ENCODER_KERNELS = (7, 5, 3)
DECODER_WIDTH = 64
DECODER_POOL = 64
DECODER_HIDDEN = 256
STREAM_A = {"heads": 8, "kernels": (9, 7, 5, 3, 9, 7, 5, 3), "dilations": (2, 1, 2, 1, 2, 1, 2, 1)}
STREAM_B = {"heads": 4, "kernels": (3, 3, 3, 3), "dilations": (1, 1, 1, 1)}
LAMBDA_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
