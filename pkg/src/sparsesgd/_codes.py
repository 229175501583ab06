"""Integer codes shared by both kernel backends (njit needs ints, not strings)."""

COMP_IDENTITY = 0
COMP_TOP_K = 1
COMP_RAND_K = 2
COMP_RAND_P = 3
COMP_QSGD = 4

KIND_LOGISTIC = 0
KIND_QUADRATIC = 1
