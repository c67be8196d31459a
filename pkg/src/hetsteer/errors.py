"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """A scenario, CQI table or run configuration is invalid."""


class SnapshotError(RuntimeError):
    """A network weight snapshot is missing, corrupted or has the wrong shape."""


class TrainingDivergenceError(RuntimeError):
    """Weights or TD errors became non-finite during training."""


class LedgerError(RuntimeError):
    """Internal resource-ledger invariant violated (always a bug)."""
