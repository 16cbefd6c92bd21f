"""Exception hierarchy.

Every error carries a CLI exit code so the command line front-end can map
failures without inspecting messages.
"""


class DpophError(Exception):
    exit_code = 2


class ConfigError(DpophError, ValueError):
    """Invalid parameters, configuration files or incompatible inputs."""


class ParseError(ConfigError):
    """Malformed libsvm input."""

    def __init__(self, message, line_no=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_no is not None:
            where += f"line {line_no}: "
        super().__init__(where + message)
        self.line_no = line_no
        self.path = path


class DimensionError(ConfigError):
    pass


class DivisibilityError(ConfigError):
    """K does not divide D."""

    def __init__(self, D, K):
        pad = -(-D // K) * K
        super().__init__(
            f"K={K} does not divide D={D}; zero-pad the dimension to {pad} "
            f"(CLI: --pad) before sketching"
        )
        self.D = D
        self.K = K


class ComparabilityError(ConfigError):
    """Signatures or datasets that cannot be compared with each other."""


class DegenerateInputError(ConfigError):
    """Empty vectors or all-EMPTY signatures where hashing needs support."""


class NumericsError(DpophError, ArithmeticError):
    exit_code = 3


class BudgetViolation(DpophError):
    """A vector has fewer nonzeros than the f_min the privacy budget assumes."""

    exit_code = 4
