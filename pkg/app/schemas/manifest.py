from typing import Any

from pydantic import Field

from app.core.config import settings
from app.schemas.common import Base


class RunManifest(Base):
    """
    Provenance of one command-line run. Contains no wall-clock data so simulation reruns are byte identical.

    Attributes:
        command: subcommand name
        argv: arguments the command was parsed from; replayed by --manifest
        parameters: fully resolved parameter set
        inputs: files read
        outputs: files written
        rng_seed: seed of the run
        version: tool version
    """

    command: str
    argv: list[str]
    parameters: dict[str, Any] = Field(default_factory=dict)
    inputs: list[str] = Field(default_factory=list)
    outputs: list[str] = Field(default_factory=list)
    rng_seed: int
    version: str = settings.VERSION
