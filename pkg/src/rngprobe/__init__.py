"""Machine-learning cryptanalysis of random number streams.

Submodules are imported on demand (``from rngprobe import homodyne``) so the
command-line entry point can set thread limits before numpy loads.
"""

__version__ = "0.1.0"
