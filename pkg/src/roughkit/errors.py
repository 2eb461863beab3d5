"""Shared exception types.

ValueError is used throughout for contract violations (bad inputs, level or
dimension mismatches).  NumericalFailure marks runtime numerical breakdowns
— solver blow-up, failed Cholesky factorizations — that the CLI maps to its
own exit code.
"""


class NumericalFailure(RuntimeError):
    """A computation broke down numerically (blow-up, factorization failure)."""
