"""Plugin registries mapping type-name strings to component constructors.

Five registry kinds exist: frontend, backend, loss, augmentation, dataset.
Components register at import time (usually with the ``register`` decorator)
and are instantiated from configuration via :func:`resolve`. Each entry
declares a parameter schema; validation is strict, so unknown keys in a
recipe fail instead of being silently ignored.
"""

import importlib.util
import sys
from pathlib import Path

from .errors import (
    DuplicateNameError,
    InterfaceMismatchError,
    ParamValidationError,
    RegistryFrozenError,
    UnresolvableComponentError,
)

KINDS = ("frontend", "backend", "loss", "augmentation", "dataset")

# Members a constructor's class must expose, per kind.
_REQUIRED_MEMBERS = {
    "frontend": ("forward", "layer_count"),
    "backend": ("forward",),
    "loss": ("forward", "score"),
    "augmentation": ("apply",),
    "dataset": ("load_records",),
}

_REQUIRED = object()


class Param:
    """One declared config parameter: expected type, optional default.

    ``elem`` constrains element types when ``type_`` is list. A parameter
    without a default is required.
    """

    def __init__(self, type_, default=_REQUIRED, elem=None):
        self.type = type_
        self.default = default
        self.elem = elem

    @property
    def required(self):
        return self.default is _REQUIRED


def _check_type(key, value, expected, elem=None):
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) and expected in (int, float):
        raise ParamValidationError(key, f"expected {expected.__name__}, got bool")
    if not isinstance(value, expected):
        type_name = expected.__name__ if isinstance(expected, type) else str(expected)
        raise ParamValidationError(
            key, f"expected {type_name}, got {type(value).__name__}"
        )
    if elem is not None and isinstance(value, list):
        for i, v in enumerate(value):
            _check_type(f"{key}[{i}]", v, elem)
    return value


class ParamSchema:
    """Typed key list with defaults; rejects unknown and missing keys."""

    def __init__(self, **params):
        self.params = params

    def validate(self, given):
        given = dict(given or {})
        for key in given:
            if key not in self.params:
                known = ", ".join(sorted(self.params)) or "<no parameters>"
                raise ParamValidationError(key, f"unknown key (known keys: {known})")
        merged = {}
        for key, spec in self.params.items():
            if key in given:
                merged[key] = _check_type(key, given[key], spec.type, spec.elem)
            elif spec.required:
                raise ParamValidationError(key, "missing required key")
            else:
                merged[key] = spec.default
        return merged


class ComponentRegistry:
    """Name -> (constructor, schema) map for one component kind."""

    def __init__(self, kind):
        if kind not in KINDS:
            raise ValueError(f"unknown registry kind {kind!r}")
        self.kind = kind
        self._entries = {}
        self._frozen = False

    def register(self, name, constructor=None, schema=None):
        """Register a constructor, directly or as a class decorator.

        Duplicate names always error; re-registration is never a silent
        overwrite. The constructor's class must expose the members required
        for this kind (checked up front so broken plugins fail at import).
        """
        if constructor is None:
            return lambda ctor: self.register(name, ctor, schema=schema)
        if self._frozen:
            raise RegistryFrozenError(self.kind, name)
        if not name or not isinstance(name, str):
            raise ParamValidationError("name", "component name must be a non-empty string")
        if name in self._entries:
            raise DuplicateNameError(self.kind, name)
        cls = constructor if isinstance(constructor, type) else type(constructor)
        for member in _REQUIRED_MEMBERS[self.kind]:
            if not (hasattr(cls, member) or member in getattr(cls, "__annotations__", {})):
                raise InterfaceMismatchError(self.kind, name, member)
        self._entries[name] = (constructor, schema or ParamSchema())
        return constructor

    def schema(self, name):
        if name not in self._entries:
            raise UnresolvableComponentError(self.kind, name, self._entries)
        return self._entries[name][1]

    def validate_params(self, name, params):
        """Schema-check without constructing; used for config fail-fast."""
        return self.schema(name).validate(params)

    def resolve(self, name, params=None, *build_args):
        """Construct a component from validated config parameters.

        ``build_args`` are positional context the framework injects (for
        example input dimensions); they are not part of the config schema.
        """
        if name not in self._entries:
            raise UnresolvableComponentError(self.kind, name, self._entries)
        constructor, schema = self._entries[name]
        merged = schema.validate(params)
        instance = constructor(*build_args, **merged)
        if getattr(instance, "type_name", None) is None:
            instance.type_name = name
        return instance

    def names(self):
        return sorted(self._entries)

    def freeze(self):
        self._frozen = True

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)


FRONTENDS = ComponentRegistry("frontend")
BACKENDS = ComponentRegistry("backend")
LOSSES = ComponentRegistry("loss")
AUGMENTATIONS = ComponentRegistry("augmentation")
DATASETS = ComponentRegistry("dataset")

REGISTRIES = {
    "frontend": FRONTENDS,
    "backend": BACKENDS,
    "loss": LOSSES,
    "augmentation": AUGMENTATIONS,
    "dataset": DATASETS,
}

_loaded_plugins = set()


def get_registry(kind):
    if kind not in REGISTRIES:
        raise UnresolvableComponentError("registry", kind, REGISTRIES)
    return REGISTRIES[kind]


def resolve(kind, name, params=None, *build_args):
    return get_registry(kind).resolve(name, params, *build_args)


def list_components(kind=None):
    """Sorted name lists, either for one kind or all of them."""
    if kind is not None:
        return get_registry(kind).names()
    return {k: REGISTRIES[k].names() for k in KINDS}


def load_plugin(path):
    """Import a plugin file so its registration decorators run.

    Loading the same resolved path twice is a no-op, which keeps repeated
    CLI invocations in one process from tripping duplicate registration.
    """
    path = Path(path).resolve()
    if path in _loaded_plugins:
        return
    if not path.exists():
        raise UnresolvableComponentError("plugin", str(path))
    module_name = f"spoofbench_plugin_{len(_loaded_plugins)}_{path.stem}"
    spec = importlib.util.spec_from_file_location(module_name, path)
    module = importlib.util.module_from_spec(spec)
    sys.modules[module_name] = module
    spec.loader.exec_module(module)
    _loaded_plugins.add(path)


def discover(plugin_paths=()):
    """Load built-in components plus any user plugin files."""
    from . import components  # noqa: F401  (import side effect registers built-ins)

    for path in plugin_paths or ():
        load_plugin(path)
