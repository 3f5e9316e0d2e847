"""Exception types raised across the package."""


class BallbotError(Exception):
    pass


class SingularMass(BallbotError):
    """The mass-matrix determinant is numerically zero."""


class NonFinite(BallbotError):
    """A simulated quantity became NaN or infinite."""


class NotStabilizable(BallbotError):
    pass


class NotControllable(BallbotError):
    pass


class ShapeMismatch(BallbotError, ValueError):
    pass


class NonFiniteLoss(BallbotError):
    pass


class ConfigError(BallbotError, ValueError):
    pass
