"""Framework exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto the
documented process exit codes: 2 config, 3 data, 4 numeric, 5 incomplete grid.
"""

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_INCOMPLETE_GRID = 5


class SpoofbenchError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_FAILURE


class ConfigError(SpoofbenchError):
    """Invalid experiment specification, registry misuse, or bad recipe."""

    exit_code = EXIT_CONFIG


class ParseError(ConfigError):
    """Config file is not well-formed markup."""


class SchemaError(ConfigError):
    """A config value violates the schema at a given key path."""

    def __init__(self, key_path, reason):
        self.key_path = key_path
        self.reason = reason
        super().__init__(f"{key_path}: {reason}")


class UnresolvableComponentError(ConfigError):
    """A configured component type name is not registered."""

    def __init__(self, kind, name, registered=()):
        self.kind = kind
        self.name = name
        known = ", ".join(sorted(registered)) or "<none>"
        super().__init__(
            f"unknown {kind} {name!r}; registered {kind} names: {known}"
        )


class DuplicateNameError(ConfigError):
    def __init__(self, kind, name):
        self.kind = kind
        self.name = name
        super().__init__(f"{kind} {name!r} is already registered")


class InterfaceMismatchError(ConfigError):
    def __init__(self, kind, name, missing):
        self.kind = kind
        self.name = name
        self.missing = missing
        super().__init__(
            f"{kind} {name!r} does not satisfy the {kind} interface: "
            f"missing member {missing!r}"
        )


class RegistryFrozenError(ConfigError):
    def __init__(self, kind, name):
        super().__init__(
            f"cannot register {kind} {name!r}: registry is frozen after discovery"
        )


class ParamValidationError(ConfigError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"parameter {key!r}: {reason}")


class RunDirExistsError(ConfigError):
    """Run directory already populated; needs --overwrite or --resume."""


class NothingToResumeError(ConfigError):
    """--resume given but no checkpoint exists in the run directory."""


class DataError(SpoofbenchError):
    """Problems with metadata tables, audio files, or score sets."""

    exit_code = EXIT_DATA


class MissingColumnError(DataError):
    def __init__(self, column, table=None):
        self.column = column
        where = f" in {table}" if table else ""
        super().__init__(f"required column {column!r} missing{where}")


class DuplicateUttIdError(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"duplicate utt_id {utt_id!r} in metadata table")


class EmptyTableError(DataError):
    pass


class InvalidRateError(DataError):
    pass


class EmptyWaveformError(DataError):
    pass


class LengthChangedError(DataError):
    """An augmentation violated the length-preserving contract."""

    def __init__(self, name, before, after):
        self.name = name
        super().__init__(
            f"augmentation {name!r} changed waveform length {before} -> {after}"
        )


class SingleClassError(DataError):
    """EER needs at least one bonafide and one spoof score."""


class ZeroMeanError(DataError):
    """Gini coefficient is undefined for zero-mean values."""


class SingleValueError(DataError):
    """Gini coefficient needs at least two values."""


class FewerThanTwoGroupsError(DataError):
    """Group partition produced fewer than two usable groups."""


class GroupMissingClassError(DataError):
    def __init__(self, group):
        self.group = group
        super().__init__(f"group {group!r} lacks one of the two classes")


class MissingSeedCoverageError(DataError):
    def __init__(self, system_id, dataset, seed):
        super().__init__(
            f"system {system_id!r}: dataset {dataset!r} missing for seed {seed}"
        )


class NumericError(SpoofbenchError):
    """Non-finite values or degenerate numeric states."""

    exit_code = EXIT_NUMERIC


class NonFiniteLossError(NumericError):
    def __init__(self, step, value=None):
        self.step = step
        self.value = value
        super().__init__(f"non-finite training loss at step {step}: {value}")


class IncompleteGridError(SpoofbenchError):
    """Aggregation found holes in the experiment grid."""

    exit_code = EXIT_INCOMPLETE_GRID

    def __init__(self, missing):
        self.missing = list(missing)
        preview = "; ".join(str(m) for m in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"incomplete grid, missing cells: {preview}{more}")
