"""
CLI module for cirlab

This module is organized into submodules by command group:
- main: Core CLI group, exit-code exceptions and logging setup
- train_commands: Training runs and architecture ablations (train)
- theory_commands: Numeric checks of the TD theory results (theory)
- gradcheck_commands: Finite-difference gradient suite (gradcheck)
"""

# Import main module first to avoid circular imports
from . import main as main_module  # noqa: I001
from .main import main

# Import command modules to register commands (they depend on main_module)
from . import (  # noqa: F401
    gradcheck_commands,
    theory_commands,
    train_commands,
)


# Re-export the console for tests
console = main_module.console

__all__ = ["console", "main", "main_module"]
