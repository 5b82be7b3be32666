# Training defaults
BATCH_SIZE = 80
LEARNING_RATE = 3e-5
LAMBDA_1 = 0.1
LAMBDA_2 = 0.5
TEMPERATURE = 0.1
PATIENCE = 10
MAX_EPOCHS = 50

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WEIGHT_DECAY = 0.0

# Model
EMBEDDING_DIM = 32
NUM_HEADS = 4
GAT_LAYERS = 2
GAT_NEGATIVE_SLOPE = 0.2
EMBEDDING_INIT_RANGE = 0.05

# Files
ROOT_TOKEN = "ROOT"
UNK_TOKEN = "<unk>"
CHECKPOINT_MAGIC = b"HJCLCKPT"
CHECKPOINT_VERSION = 1
CHECKPOINT_FILE = "checkpoint.hjcl"
TRAIN_LOG_FILE = "train_log.jsonl"
VAL_METRICS_FILE = "val_metrics.json"

# Gradient checking
GRADCHECK_EPS = 1e-5
GRADCHECK_TOL = 1e-4
GRADCHECK_MIN_COORDS = 32
# Denominator floor of the relative error; below it errors are compared absolutely.
GRADCHECK_FLOOR = 1e-4
