"""Exception and warning types shared across the package."""

from __future__ import annotations


class PbtuneError(Exception):
    """Base class for all errors raised by this package."""


class MalformedProblem(PbtuneError):
    """A problem definition is structurally invalid (shapes, relations, NaN)."""


class DimensionMismatch(PbtuneError):
    """Two arguments disagree on the feature or sample dimension."""


class InfeasibleModel(PbtuneError):
    """A formulation that is feasible by construction came back infeasible."""


class NumericalFailure(PbtuneError):
    """The numerical machinery broke down (iteration cap, singular basis)."""


class NodeLimitExceeded(PbtuneError):
    """Branch-and-bound gave up before closing the gap."""


class BigMValidationError(PbtuneError):
    """A linearization constant was too small and retries were exhausted."""


class EmptyFlipSet(PbtuneError):
    """No validation point is eligible for label flipping."""


class DegenerateReference(PbtuneError):
    """The attack's reference model could not be trained."""


class DatasetError(PbtuneError):
    """Base class for dataset ingestion problems."""


class ParseError(DatasetError):
    """A data file could not be parsed."""


class MissingLabelColumn(DatasetError):
    """The requested label column is absent."""


class SingleClassData(DatasetError):
    """All labels map to one class; a classifier cannot be fit."""


class InsufficientSamples(DatasetError):
    """The requested split sizes exceed the available rows."""


class PbtuneWarning(UserWarning):
    """Base class for warnings issued by this package."""


class DegenerateClassWarning(PbtuneWarning):
    """A split subset ended up with fewer than two classes."""


class ConstantColumnWarning(PbtuneWarning):
    """A feature column has zero variance and was mapped to zeros."""


class IterationWarning(PbtuneWarning):
    """A solve needed a fallback strategy (anti-cycling, retries)."""
