"""Exception hierarchy shared by every module."""


class CVPostError(Exception):
    """Base class for all library errors."""

    #: short machine-readable tag used by the CLI error report
    code = "error"


class InvalidParam(CVPostError, ValueError):
    code = "invalid_param"


class UnphysicalCovariance(CVPostError, ValueError):
    code = "unphysical_covariance"


class DegenerateQForm(CVPostError, ValueError):
    code = "degenerate_qform"


class FilterDiverges(CVPostError, ArithmeticError):
    """The filter g^n has no normalizable output on the given state."""

    code = "filter_diverges"


class NumericalDomain(CVPostError, ArithmeticError):
    code = "numerical_domain"


class NonconvergentRule(CVPostError, ValueError):
    """Amplification emulation diverges: 2 V_B (1 - g^-2) >= 1."""

    code = "nonconvergent_rule"


class NoClosedForm(CVPostError, NotImplementedError):
    code = "no_closed_form"


class InsufficientSamples(CVPostError, ValueError):
    code = "insufficient_samples"


class CutoffTooSmall(CVPostError, ValueError):
    code = "cutoff_too_small"


class FockOverflow(CVPostError, OverflowError):
    code = "fock_overflow"


class NotStandardForm(CVPostError, ValueError):
    code = "not_standard_form"


class EmptyFeasibleSet(CVPostError, ValueError):
    code = "empty_feasible_set"


class NoPositiveRate(CVPostError, ValueError):
    """No positive key rate even without excess noise; the boundary is zero."""

    code = "no_positive_rate"


class BracketCapExceeded(CVPostError, ValueError):
    code = "bracket_cap_exceeded"
