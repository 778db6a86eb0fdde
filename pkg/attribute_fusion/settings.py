"""Settings for the attribute_fusion package."""

# Number of relevant local characteristics kept per global attribute
ETA = 5

# Laplace smoothing constant of the CPTs
ALPHA = 1.0

# Orientation of the learned tree: 'rooted' (at the target) or 'exhaustive'
ORIENTATION = 'rooted'

# Exhaustive orientation refuses trees larger than this
MAX_EXHAUSTIVE_NODES = 20

# Longest word n-gram extracted from a description
NGRAM_MAX = 3

# Softmax temperature of the textual similarity model
TEMPERATURE = 1.0

# Winkler common-prefix scaling (prefix length is capped at 4)
JW_PREFIX_WEIGHT = 0.1

# Abstention threshold used before calibration
TAU = 0.5

# Calibration objective weights and grid step
LAMBDA_PI = 2.0
LAMBDA_NP = 0.25
TAU_STEP = 0.05

# Train / validation / test fractions
SPLIT_RATIOS = (0.6, 0.2, 0.2)

SEED = 0

# Prediction worker pool size
WORKERS = 4

# Version written as the first field of every model bundle
BUNDLE_VERSION = 1

# Reserved state standing for values never seen in training
UNSEEN = '<unseen>'

# Delimited text files
DELIMITER = ','
ID_COLUMN = 'id'
DESCRIPTION_COLUMN = 'description'
SPLIT_COLUMN = 'split'
