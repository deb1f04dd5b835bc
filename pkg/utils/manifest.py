"""
Run manifests: one `run_manifest.json` per command output directory.
"""
import json
import logging
import os
import time
from dataclasses import dataclass, field, asdict

from config.settings import VERSION
from utils.exceptions import MissingArtifactError

logger = logging.getLogger('dsfad')

MANIFEST_NAME = 'run_manifest.json'


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    artifacts: list = field(default_factory=list)
    tool_version: str = VERSION
    wall_clock: float = 0.0
    inputs: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time, repr=False)

    def add(self, *paths):
        for path in paths:
            if path not in self.artifacts:
                self.artifacts.append(path)

    def write(self, directory):
        """Finish timing and write the manifest into directory (replacing any earlier one)."""
        os.makedirs(directory, exist_ok=True)
        self.wall_clock = round(time.time() - self.started, 3)
        data = asdict(self)
        data.pop('started')
        data['artifacts'] = sorted(os.path.relpath(p, directory) for p in self.artifacts)
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, 'w') as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
        logger.info(f"{self.command}: wrote {len(self.artifacts)} artifact(s) to {directory} "
                    f"in {self.wall_clock:.1f}s")
        return path


def read_manifest(directory):
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingArtifactError(f"No {MANIFEST_NAME} in {directory}")
    with open(path) as handle:
        return json.load(handle)
