"""Learning stationary SDEs with Stein-type kernel discrepancies.

Submodules are imported lazily so that the command-line entry point can pin
thread counts before numpy is loaded.
"""

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "models",
    "discrepancy",
    "simulator",
    "datagen",
    "trainer",
    "metrics",
    "config",
    "cli",
]
