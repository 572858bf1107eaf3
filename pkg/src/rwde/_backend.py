"""Select the compiled kernels when available, else the pure-Python ones.

Set ``RWDE_BACKEND=python`` to force the fallback.
"""

import os

from rwde import _kernels_py

kernels_py = _kernels_py

try:
    from rwde import _kernels as kernels_c
except ImportError:  # extension not built
    kernels_c = None

if os.environ.get("RWDE_BACKEND", "").lower() == "python" or kernels_c is None:
    kernels = _kernels_py
else:
    kernels = kernels_c

BACKEND = kernels.NAME
