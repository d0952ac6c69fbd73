"""Exception hierarchy shared across the package."""


class ImgcloakError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ImgcloakError, ValueError):
    """An argument violates a documented precondition."""


class SceneError(ImgcloakError):
    """Scene specification cannot be rendered (e.g. unsatisfiable overlap)."""


class AttackError(ImgcloakError):
    """The attack cannot proceed on this input (e.g. no non-sensitive class left)."""


class UndefinedMetricError(ImgcloakError, ValueError):
    """A metric was requested on inputs for which it is undefined."""


class ReportIntegrityError(ImgcloakError):
    """A persisted report failed verification on load."""


class DatasetError(ImgcloakError):
    """A dataset manifest is malformed or references missing data."""
