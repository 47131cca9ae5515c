"""Import hub: pulling this module in registers every built-in component."""

from .data import augment as _augment  # noqa: F401
from .data import records as _records  # noqa: F401
from .engine import backends as _backends  # noqa: F401
from .engine import frontends as _frontends  # noqa: F401
from .engine import losses as _losses  # noqa: F401
