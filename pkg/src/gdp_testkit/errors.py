"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, budgets, registry ids or config files."""


class DataError(ValueError):
    """Input data that a mechanism cannot accept (e.g. outside a support)."""
