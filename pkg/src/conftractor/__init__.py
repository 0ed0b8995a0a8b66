"""Conformal tractor calculus evaluated on jets of analytic model geometries."""

from .jets import Jet, JetError, OrderBudgetError, SingularJetError, DomainError

__version__ = "0.1.0"

__all__ = ["Jet", "JetError", "OrderBudgetError", "SingularJetError", "DomainError"]
