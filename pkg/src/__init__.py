import os

import yaml

# HardSphereVirial version
__version__ = "0.3.0"


def load_config(config_path: str) -> dict:
    """Load configuration from a YAML file."""
    if not os.path.exists(config_path):
        return {}
    with open(config_path, encoding="utf-8") as file:
        config = yaml.safe_load(file)
    return config or {}


def load_state(file_path: str) -> dict:
    """Load an initial state (``positions`` and ``velocities`` lists) from a
    YAML file and return its contents as a dictionary."""
    with open(file_path, encoding="utf-8") as f:
        state_data = yaml.safe_load(f)
    if not isinstance(state_data, dict):
        raise ValueError(f"State file {file_path} does not contain a mapping")
    return state_data
