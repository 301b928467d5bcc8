from pathlib import Path

# Paths
PROJECT_ROOT = Path(__file__).resolve().parent
SCHEMA_DIR = PROJECT_ROOT / "data" / "schemas"
CORPUS_RECORD_SCHEMA = "corpus_record.schema.json"
SPLITS_SCHEMA = "splits.schema.json"
AUGMENTATION_RECORD_SCHEMA = "augmentation_record.schema.json"
TRAIN_CONFIG_SCHEMA = "train_config.schema.json"

# Split names
TRAIN = "train"
VAL = "val"
TEST = "test"
SPLIT_NAMES = (TRAIN, VAL, TEST)

# FNV-1a 64
FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
FNV64_MASK = 0xFFFFFFFFFFFFFFFF

# Tokenizer / encoder defaults
DEFAULT_BUCKET_COUNT = 4096
DEFAULT_DIM = 64
DEFAULT_INIT_SCALE = 0.1

# Loss defaults
DEFAULT_TAU_CON = 5.0
DEFAULT_TAU_TASK = 7.0
DEFAULT_TAU_INST = 7.0
DEFAULT_ALPHA0 = 0.95
DEFAULT_ALPHA_FLOOR = 0.5
DEFAULT_BETA = 0.1
DEFAULT_N_TASK = 10
DEFAULT_N_INST = 10

# EDA defaults
DEFAULT_DELETE_PROB = 0.1
DEFAULT_SWAP_COUNT = 1
DEFAULT_INSERT_COUNT = 1

# Optimizer defaults
DEFAULT_LR = 1e-3
DEFAULT_ADAM_BETA1 = 0.9
DEFAULT_ADAM_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_WEIGHT_DECAY = 1.0

# Evaluation protocol
INTENT_EVAL_EPISODES = 600

# Checkpoint format
CHECKPOINT_MAGIC = b"CNET"
CHECKPOINT_VERSION = 1

# Gradient checks
FD_STEP = 1e-5
LOSS_GRAD_TOLERANCE = 1e-4
ADJOINT_TOLERANCE = 1e-6
REL_ERROR_FLOOR = 1e-3
GRADCHECK_TAUS = (0.5, 1.0, 5.0, 7.0)

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# Environment variables
ENV_THREADS = "CONTRASTNET_THREADS"
ENV_LOG_DIR = "CONTRASTNET_LOG_DIR"
ENV_LOG_LEVEL = "CONTRASTNET_LOG_LEVEL"
