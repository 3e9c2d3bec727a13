import os

# Single-threaded BLAS keeps small-matrix runs bit-reproducible and avoids
# thread jitter in the timed acceptance checks.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
