"""Default hyperparameters shared by the library and the command line."""

# personalized PageRank with shrinking
DAMPING = 0.5
EPSILON = 1e-6
MAX_STEPS = 100_000
SPREAD_STEP = 10
SPREAD_PERCENT = 0.3
NORM = "l1"

# network training
EMBED_DIM = 128
BATCH_SIZE = 5
MAX_EPOCHS = 20
MAX_EPOCHS_ATTENTION = 100
PATIENCE = 5
PLATEAU_TOL = 1e-5
ACTIVATION = "relu"
CONV_FILTERS = 2
CONV_KERNEL = 8
CONV_POOL = 2
QUEUE_CAPACITY = 4

# Adam
LEARNING_RATE = 1e-3
BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8

PROB_CLIP = 1e-7

# evaluation protocol
CONSTRUCTION_FRACTION = 0.2
TRAIN_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
REPEATS = 5
L2_LAMBDA = 0.01
LOGREG_TOL = 1e-6
LOGREG_MAX_ITER = 5000

SCHEMA_VERSION = 1

# One table the CLI and tests read from.
TABLE = {
    "damping": DAMPING,
    "epsilon": EPSILON,
    "max_steps": MAX_STEPS,
    "spread_step": SPREAD_STEP,
    "spread_percent": SPREAD_PERCENT,
    "batch_size": BATCH_SIZE,
    "max_epochs": MAX_EPOCHS,
    "patience": PATIENCE,
    "embed_dim": EMBED_DIM,
}
