"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid domain, basis, noise or experiment configuration."""


class ConfigurationWarning(UserWarning):
    """A configuration that runs but is statistically weak."""


class IntegrationBlowup(RuntimeError):
    """A trajectory produced non-finite or runaway coefficients.

    The flows integrated here are globally defined, so a blowup always
    signals a discretization fault (time step too large for the resolved
    frequencies, or a bug).
    """

    def __init__(self, time, max_abs, message=None):
        self.time = float(time)
        self.max_abs = float(max_abs)
        if message is None:
            message = (f"integration blew up at t={self.time:.6g} "
                       f"(max |coefficient| = {self.max_abs:.3g})")
        super().__init__(message)
