"""
Storage module for Leverage Bidder.
Handles run directory layout, atomic CSV/JSON writes and checkpoints.
"""

from __future__ import annotations

import os
import re
import csv
import json
import logging
from typing import Iterable, Optional

import numpy as np

from .nn import Network, NetworkError, save_network, load_network

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


class StorageError(Exception):
    """Storage operation error."""
    pass


def sanitize_name(name: str) -> str:
    """
    Sanitize an algorithm or product name for use as directory name.

    Args:
        name: Original name

    Returns:
        Name safe for filesystem
    """
    name = name.strip().replace(' ', '_')
    name = re.sub(r'[<>:"/\\|?*]', '_', name)
    name = re.sub(r'[\x00-\x1f\x7f]', '', name)
    return name[:200]


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _replace(tmp_path: str, path: str) -> None:
    try:
        os.replace(tmp_path, path)
    except OSError as e:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise StorageError(f"Failed to write {path}: {e}")


def write_text_atomic(path: str, text: str) -> str:
    directory = os.path.dirname(path)
    tmp_path = f"{path}.tmp"
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(tmp_path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    except OSError as e:
        raise StorageError(f"Failed to write {path}: {e}")
    _replace(tmp_path, path)
    return path


def write_csv_atomic(path: str, rows: Iterable[dict], fieldnames: list[str]) -> str:
    """
    Write rows as CSV through a temporary file in the same directory.

    Args:
        path: Target CSV path
        rows: Row dictionaries (extra keys are ignored)
        fieldnames: Column order

    Returns:
        Path to written file

    Raises:
        StorageError: If writing fails
    """
    directory = os.path.dirname(path)
    tmp_path = f"{path}.tmp"
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(tmp_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction='ignore', lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as e:
        raise StorageError(f"Failed to write {path}: {e}")
    _replace(tmp_path, path)
    logger.debug(f"Wrote {path}")
    return path


def write_json_atomic(path: str, data) -> str:
    """
    Write data as indented JSON through a temporary file.

    Raises:
        StorageError: If writing fails
    """
    try:
        text = json.dumps(data, ensure_ascii=False, indent=2, default=_json_default)
    except (TypeError, ValueError) as e:
        raise StorageError(f"Failed to serialize {path}: {e}")
    return write_text_atomic(path, text + '\n')


def read_json(path: str):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise StorageError(f"Failed to read {path}: {e}")


def read_csv(path: str) -> list[dict]:
    try:
        with open(path, 'r', newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}")


class Storage:
    """
    Storage handler for experiment output.

    Layout: base_path/algorithm/seed_<n>/ with a checkpoint/ subdirectory.
    """

    def __init__(self, base_path: str):
        """
        Initialize storage handler.

        Args:
            base_path: Output directory of the experiment
        """
        self.base_path = base_path

    def get_algorithm_path(self, algorithm: str) -> str:
        return os.path.join(self.base_path, sanitize_name(algorithm))

    def get_run_path(self, algorithm: str, seed: int) -> str:
        """
        Get the directory of one (algorithm, seed) run.

        Path format: base_path/algorithm/seed_<n>/
        """
        return os.path.join(self.get_algorithm_path(algorithm), f"seed_{int(seed)}")

    def get_checkpoint_path(self, algorithm: str, seed: int) -> str:
        return os.path.join(self.get_run_path(algorithm, seed), 'checkpoint')

    def create_run_directory(self, algorithm: str, seed: int) -> str:
        """
        Create the directory structure of a run.

        Returns:
            Path to the run directory

        Raises:
            StorageError: If directory creation fails
        """
        run_path = self.get_run_path(algorithm, seed)
        try:
            os.makedirs(run_path, exist_ok=True)
            logger.debug(f"Created directory: {run_path}")
            return run_path
        except OSError as e:
            raise StorageError(f"Failed to create directory structure: {e}")

    def list_algorithms(self) -> list[str]:
        """Algorithm directories holding at least one seed run."""
        if not os.path.isdir(self.base_path):
            return []
        names = []
        for name in sorted(os.listdir(self.base_path)):
            path = os.path.join(self.base_path, name)
            if os.path.isdir(path) and self.list_seeds(name):
                names.append(name)
        return names

    def list_seeds(self, algorithm: str) -> list[int]:
        path = self.get_algorithm_path(algorithm)
        if not os.path.isdir(path):
            return []
        seeds = []
        for name in os.listdir(path):
            match = re.fullmatch(r'seed_(-?\d+)', name)
            if match and os.path.isdir(os.path.join(path, name)):
                seeds.append(int(match.group(1)))
        return sorted(seeds)


def save_checkpoint(directory: str, manifest: dict, networks: Optional[dict[str, Network]] = None) -> str:
    """
    Save networks and a manifest describing the policy.

    The manifest is written last, so a checkpoint without manifest.json is
    incomplete.

    Args:
        directory: Checkpoint directory
        manifest: Policy description (kind, range, normalizer statistics, ...)
        networks: Networks by name, each saved as <name>.bin

    Returns:
        Path to the checkpoint directory

    Raises:
        StorageError: If writing fails
    """
    networks = networks or {}
    try:
        os.makedirs(directory, exist_ok=True)
        for name, net in networks.items():
            save_network(net, os.path.join(directory, f"{sanitize_name(name)}.bin"))
    except (OSError, NetworkError) as e:
        raise StorageError(f"Failed to save checkpoint {directory}: {e}")
    write_json_atomic(
        os.path.join(directory, MANIFEST_NAME),
        {**manifest, 'networks': sorted(networks)},
    )
    logger.info(f"Checkpoint written to {directory}")
    return directory


def load_checkpoint(directory: str) -> tuple[dict, dict[str, Network]]:
    """
    Load a checkpoint written by save_checkpoint.

    Returns:
        Tuple of (manifest, networks by name)

    Raises:
        StorageError: If the checkpoint is missing or corrupt
    """
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise StorageError(f"Checkpoint not found: {directory}")
    manifest = read_json(manifest_path)
    networks = {}
    for name in manifest.get('networks', []):
        try:
            networks[name] = load_network(os.path.join(directory, f"{sanitize_name(name)}.bin"))
        except NetworkError as e:
            raise StorageError(f"Corrupt checkpoint {directory}: {e}")
    return manifest, networks
