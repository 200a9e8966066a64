"""Exception types shared across the package."""


class CertificateError(Exception):
    """A certificate is structurally unusable for the requested query
    (e.g. an anchor lookup outside the validity range of a finite zero set,
    or linearization bounds inconsistent with the certificate)."""


class CertificationError(Exception):
    """Certificate estimation failed a sampled check of the expansion
    criterion; carries a description of the failing check."""


class DomainError(Exception):
    """A local-inverse target left the admissible ball B_rm(0).

    Attributes:
        site: lattice site at which the violation occurred (None if scalar).
        norm: norm of the offending target.
        limit: admissible radius r*m.
    """

    def __init__(self, message, site=None, norm=None, limit=None):
        super().__init__(message)
        self.site = site
        self.norm = norm
        self.limit = limit


class ConvergenceError(Exception):
    """An iteration exhausted its budget without meeting its tolerance.

    Attributes:
        trace: per-iteration step distances (may be None for scalar solves).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConvexityError(Exception):
    """A coupling violated its declared convexity bounds."""


class ConfigError(Exception):
    """A run configuration failed strict validation (unknown key, missing
    block, malformed value). Carries the offending key path in the message."""
