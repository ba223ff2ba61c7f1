"""Learned image compression with modulation-based nonlinear transforms."""

import os as _os

# BLAS reads these at load time, so they must be set before numpy is imported
_threads = _os.environ.get("MODCODEC_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
