"""Exception hierarchy shared by every chemkit module."""

from __future__ import annotations


class ChemkitError(Exception):
    """Base class for all toolkit errors."""


class DefinitionError(ChemkitError, ValueError):
    """A module descriptor, instrument or model family is malformed."""


class UnsupportedVerbError(ChemkitError):
    def __init__(self, module: str, verb: str, supported: tuple[str, ...]):
        self.module = module
        self.verb = verb
        self.supported = tuple(supported)
        super().__init__(f"module '{module}' supports: {', '.join(supported)}")


class InvocationError(ChemkitError):
    """An implementation raised while a verb was being invoked.

    ``original`` keeps the underlying exception so callers (the CLI in
    particular) can decide on exit codes without unwrapping ``__cause__``.
    """

    def __init__(self, module: str, verb: str, original: BaseException):
        self.module = module
        self.verb = verb
        self.original = original
        super().__init__(f"{module}.{verb}: {original}")


class LifecycleError(ChemkitError):
    pass


class TableFormatError(ChemkitError, ValueError):
    """Delimited input could not be parsed (ragged rows, bad dictionary rows)."""


class DictionaryError(TableFormatError):
    pass


class ValidationError(ChemkitError, ValueError):
    """Dataset failed dictionary validation; ``violations`` lists every problem."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        n = len(self.violations)
        head = f"{n} validation error{'s' if n != 1 else ''}"
        super().__init__(head + ":\n  " + "\n  ".join(self.violations))


class InstrumentError(ChemkitError, ValueError):
    pass


class ScoringError(ChemkitError, ValueError):
    pass


class SpecificationError(ChemkitError, ValueError):
    pass


class ModelFitError(ChemkitError, ValueError):
    pass


class RankDeficientError(ModelFitError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient: column '{column}' is collinear with earlier columns")


class CatalogueError(ChemkitError, ValueError):
    pass


class CompatibilityError(ChemkitError, ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("model is not compatible with new data:\n  " + "\n  ".join(report.issues))


class QalyError(ChemkitError, ValueError):
    pass


class TemplateError(ChemkitError, ValueError):
    pass


class ManifestError(ChemkitError, ValueError):
    pass


class StepFailedError(ChemkitError):
    def __init__(self, step_id: str, original: BaseException, record=None):
        self.step_id = step_id
        self.original = original
        self.record = record
        super().__init__(f"step '{step_id}' failed: {original}")


class RegistryError(ChemkitError):
    pass


class DuplicateEntryError(RegistryError):
    pass


class ConfidentialDataError(RegistryError):
    pass


class IntegrityError(RegistryError):
    pass


class EntryNotFoundError(RegistryError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "entry not found"


def root_cause(exc: BaseException) -> BaseException:
    """Follow ``original`` links through invocation/step wrappers."""
    seen = 0
    while hasattr(exc, "original") and seen < 16:
        exc = exc.original
        seen += 1
    return exc
