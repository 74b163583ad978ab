"""Pick the compiled kernels when importable, else the numpy fallback.

Set ``GRAMMARAUG_BACKEND=python`` to force the fallback.
"""
import os

from . import _pure

python_kernels = _pure

try:
    from . import _ext as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("GRAMMARAUG_BACKEND", "").lower() != "python":
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = _pure
    BACKEND = "python"
