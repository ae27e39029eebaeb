from .builtins import BUILTINS, WEAK2_B, builtin_example3d, builtin_spde, builtin_weak2

__all__ = ["BUILTINS", "WEAK2_B", "builtin_example3d", "builtin_spde", "builtin_weak2"]
