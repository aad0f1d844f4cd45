import os
from typing import Any, Dict, Union

import tomli

from ..errors import ConfigParse
from .base import TargetModel, get_model, registered_models


def model_from_descriptor(descriptor: Dict[str, Any]) -> TargetModel:
    """Build a target model from a descriptor dictionary.

    The descriptor has a `kind` key naming a registered model and the keyword arguments
    of that model, e.g. `{"kind": "flat-torus", "dimension": 2, "periods": [1.0, 1.0]}`.
    """
    descriptor = dict(descriptor)
    kind = descriptor.pop("kind", None)
    if kind is None:
        raise ConfigParse("Target descriptor is missing the `kind` key")
    if kind not in registered_models():
        raise ConfigParse(
            f"Unknown target kind '{kind}', expected one of {registered_models()}"
        )
    try:
        return get_model(kind, **descriptor)
    except (TypeError, AssertionError, KeyError) as exception:
        raise ConfigParse(f"Invalid '{kind}' target descriptor: {exception}")


def load_model(source: Union[str, os.PathLike, Dict[str, Any]]) -> TargetModel:
    """Load a target model from a TOML file or an already parsed table.

    A TOML file may hold the descriptor at top level or under a `[target]` table.

    **Usage:**

    ```python
    from harmonic_gluing.manifold import load_model

    model = load_model("configs/sphere.toml")
    ```

    Args:
        source (Union[str, os.PathLike, Dict[str, Any]]): Path to a TOML file or a
            descriptor dictionary.

    Returns:
        (TargetModel): The target model.
    """
    if isinstance(source, dict):
        return model_from_descriptor(source.get("target", source))
    if not os.path.isfile(source):
        raise ConfigParse(f"Unable to find target descriptor file {source}")
    with open(source, "rb") as file:
        try:
            data = tomli.load(file)
        except tomli.TOMLDecodeError as exception:
            raise ConfigParse(f"Unable to parse {source}: {exception}")
    return model_from_descriptor(data.get("target", data))
