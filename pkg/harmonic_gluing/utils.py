import os
from collections.abc import MutableMapping
from typing import Any, Dict, List, Optional

import wandb
from wandb.util import FilePathStr

from .errors import ConfigParse


def upload_run_directory(
    name: str, path: str, artifact_type: str = "gluing-run", aliases: Optional[List[str]] = None
) -> None:
    """Log a result directory (or a single result file) as a W&B artifact.

    Does nothing when no run is active, so library code may call it unconditionally.

    Args:
        name (str): Artifact name, e.g. `"glue-3f2a9c1d"`.
        path (str): Directory or file to upload.
        artifact_type (str): Artifact type.
        aliases (Optional[List[str]]): Aliases attached to the logged version.
    """
    if wandb.run is None:
        return
    artifact = wandb.Artifact(name, type=artifact_type)
    if os.path.isdir(path):
        artifact.add_dir(path)
    elif os.path.isfile(path):
        artifact.add_file(path)
    else:
        raise ConfigParse(f"Unable to find local path {path} to add to the artifact.")
    wandb.log_artifact(artifact, aliases=aliases)


def fetch_node_table(artifact_address: str, artifact_type: str = "node-table") -> FilePathStr:
    """Download a node-table artifact, with or without an active run.

    Args:
        artifact_address (str): Address of the artifact, e.g.
            `"entity/project/identity-pair:v0"`.
        artifact_type (str): Type of the artifact.

    Returns:
        (wandb.util.FilePathStr): Local directory holding the downloaded tables.
    """
    return (
        wandb.Api().artifact(artifact_address, type=artifact_type).download()
        if wandb.run is None
        else wandb.use_artifact(artifact_address, type=artifact_type).download()
    )


def flatten_nested_dictionaries(d: Dict[str, Any], parent_key: str = "", sep: str = "/") -> Dict:
    """Flatten a nested config or record into `parent/child` keys.

    Args:
        d (Dict): The nested dictionary.
        parent_key (str): Prefix of every produced key.
        sep (str): Separator between key levels.

    Returns:
        (Dict): The flattened dictionary.
    """
    flat = {}
    for key, value in d.items():
        path = f"{parent_key}{sep}{key}" if parent_key else key
        if isinstance(value, MutableMapping):
            flat.update(flatten_nested_dictionaries(value, path, sep=sep))
        else:
            flat[path] = value
    return flat
