"""
Configuration settings for the DSFAD training and evaluation pipeline.
Defaults can be overridden from environment variables or a .env file.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

VERSION = '0.1.0'  # same as __version__ in the root __init__.py


def _int_list(value):
    return [int(v) for v in value.split(',') if v.strip()]


# Logging Configuration
LOG_DIR = os.getenv('DSFAD_LOG_DIR', 'logs')
LOG_LEVEL = os.getenv('DSFAD_LOG_LEVEL', 'INFO')

# Parallelism for sweeps and ablations
NUM_WORKERS = int(os.getenv('DSFAD_NUM_WORKERS', '1'))

# Synthetic Dataset Configuration
NUM_TRAIN_IDS = int(os.getenv('DSFAD_NUM_TRAIN_IDS', '32'))
NUM_TEST_IDS = int(os.getenv('DSFAD_NUM_TEST_IDS', '16'))
IMAGES_PER_MODALITY = int(os.getenv('DSFAD_IMAGES_PER_MODALITY', '8'))  # Per identity per modality
IMAGE_HEIGHT = int(os.getenv('DSFAD_IMAGE_HEIGHT', '64'))
IMAGE_WIDTH = int(os.getenv('DSFAD_IMAGE_WIDTH', '32'))
DATASET_SEED = int(os.getenv('DSFAD_DATASET_SEED', '7'))
IR_CHROMA_BOUND = float(os.getenv('DSFAD_IR_CHROMA_BOUND', '1e-6'))  # Max channel variance for infrared pixels

# Augmentation Configuration
AUGMENT_ENABLED = os.getenv('DSFAD_AUGMENT', 'true').lower() == 'true'
AUGMENT_PAD = int(os.getenv('DSFAD_AUGMENT_PAD', '4'))
AUGMENT_FLIP_P = float(os.getenv('DSFAD_AUGMENT_FLIP_P', '0.5'))
AUGMENT_CHANNEL_EXCHANGE_P = float(os.getenv('DSFAD_AUGMENT_CHANNEL_EXCHANGE_P', '0.5'))

# Caption Configuration
CONTEXT_LENGTH = int(os.getenv('DSFAD_CONTEXT_LENGTH', '77'))
TEXT_MODE = os.getenv('DSFAD_TEXT_MODE', 'diverse')  # diverse or fixed
CAPTION_BACKEND = os.getenv('DSFAD_CAPTION_BACKEND', 'deterministic')
EXTERNAL_CAPTION_CLIENT = os.getenv('DSFAD_EXTERNAL_CAPTION_CLIENT', '')  # module:Class

# Model Configuration
TRUNK_WIDTHS = _int_list(os.getenv('DSFAD_TRUNK_WIDTHS', '16,32,64'))  # Stage widths, stride 2 each
HEAD_WIDTH = int(os.getenv('DSFAD_HEAD_WIDTH', '128'))
EMBED_DIM = int(os.getenv('DSFAD_EMBED_DIM', '128'))
IN_EPSILON = float(os.getenv('DSFAD_IN_EPSILON', '1e-5'))
SE_REDUCTION = int(os.getenv('DSFAD_SE_REDUCTION', '16'))
TEXT_WIDTH = int(os.getenv('DSFAD_TEXT_WIDTH', '64'))
TEXT_DEPTH = int(os.getenv('DSFAD_TEXT_DEPTH', '2'))
TEXT_HEADS = int(os.getenv('DSFAD_TEXT_HEADS', '4'))

# Loss Configuration
MARGIN = float(os.getenv('DSFAD_MARGIN', '1.0'))  # Semantic margin m
LAMBDA1 = float(os.getenv('DSFAD_LAMBDA1', '0.15'))  # Contrastive loss weight
LAMBDA2 = float(os.getenv('DSFAD_LAMBDA2', '0.3'))  # Semantic margin loss weight
LAMBDA3 = float(os.getenv('DSFAD_LAMBDA3', '0.02'))  # Semantic consistency loss weight
CONSISTENCY_MODE = os.getenv('DSFAD_CONSISTENCY_MODE', 'signed')  # signed or absolute
TEMPERATURE = float(os.getenv('DSFAD_TEMPERATURE', '1.0'))

# Training Configuration
EPOCHS = int(os.getenv('DSFAD_EPOCHS', '30'))
DROP_EPOCHS = _int_list(os.getenv('DSFAD_DROP_EPOCHS', '10,18'))
DROP_FACTOR = float(os.getenv('DSFAD_DROP_FACTOR', '0.1'))
LR_VISUAL = float(os.getenv('DSFAD_LR_VISUAL', '3e-4'))
LR_TEXT = float(os.getenv('DSFAD_LR_TEXT', '1e-6'))
NUM_PIDS = int(os.getenv('DSFAD_P', '8'))  # Identities per modality in a batch
NUM_POS = int(os.getenv('DSFAD_K', '4'))  # Images per identity per modality
TRAIN_SEED = int(os.getenv('DSFAD_SEED', '7'))
CHECKPOINT_INTERVAL = int(os.getenv('DSFAD_CHECKPOINT_INTERVAL', '10'))
CLIP_GRAD_NORM = float(os.getenv('DSFAD_CLIP_GRAD_NORM', '0'))  # 0 disables clipping
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Full-scale schedule, available through TrainConfig.full_scale()
FULL_EPOCHS = 120
FULL_DROP_EPOCHS = [40, 70]

# Evaluation Configuration
EVAL_REPEATS = int(os.getenv('DSFAD_EVAL_REPEATS', '10'))
MULTI_SHOT_COUNT = int(os.getenv('DSFAD_MULTI_SHOT_COUNT', '10'))
RANKS = (1, 5, 10, 20)
PROBE_ALPHA = float(os.getenv('DSFAD_PROBE_ALPHA', '1.0'))
PROBE_TEST_FRACTION = float(os.getenv('DSFAD_PROBE_TEST_FRACTION', '0.3'))

# Camera layout (SYSU-style): visible 1,2,4,5; infrared 3,6; cameras 1,2,3 are indoor
VISIBLE_CAMERAS = (1, 2, 4, 5)
INFRARED_CAMERAS = (3, 6)
INDOOR_CAMERAS = (1, 2, 3)
