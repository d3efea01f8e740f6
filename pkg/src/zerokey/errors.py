"""Exception types shared across the package.

Everything raised on purpose derives from :class:`ZeroKeyError` so callers
can catch the package's failures with one clause.  Errors that map to a
distinct CLI exit code carry no special machinery here; the mapping lives
in the CLI.
"""

from __future__ import annotations

__all__ = [
    "BehindCameraError",
    "CacheMissError",
    "ConfigError",
    "DegenerateMeshError",
    "DetectorTimeoutError",
    "EmptyGroundTruthError",
    "EmptyMeshError",
    "EmptyResponseError",
    "EmptySetError",
    "EndpointUnreachableError",
    "GatewayError",
    "InsufficientPointsError",
    "InvalidPatchError",
    "InvalidViewCountError",
    "MarkerInvisibleError",
    "MeshMismatchError",
    "MeshParseError",
    "OutOfBoundsError",
    "PipelineError",
    "ProtocolError",
    "UnknownPromptError",
    "ZeroKeyError",
]


class ZeroKeyError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(ZeroKeyError):
    """Malformed mesh file.  Carries the offending line or byte offset."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyMeshError(ZeroKeyError):
    """Mesh has no faces after parsing."""


class DegenerateMeshError(ZeroKeyError):
    """All vertices coincide; the mesh has no spatial extent."""


class InvalidViewCountError(ZeroKeyError):
    """Requested camera count is not a positive integer."""


class BehindCameraError(ZeroKeyError):
    """Point projects behind the camera plane."""


class OutOfBoundsError(ZeroKeyError):
    """Pixel coordinate lies outside the image."""


class GatewayError(ZeroKeyError):
    """Base class for detector and namer backend failures."""


class EndpointUnreachableError(GatewayError):
    """Remote endpoint could not be reached after retries."""


class DetectorTimeoutError(GatewayError):
    """Remote endpoint did not answer within the configured timeout."""


class ProtocolError(GatewayError):
    """Remote endpoint answered with a malformed body.

    The raw payload is kept for debugging.
    """

    def __init__(self, message: str, payload: bytes | str | None = None):
        self.payload = payload
        super().__init__(message)


class UnknownPromptError(GatewayError):
    """Mock backend was asked about a prompt id it has no ground truth for."""


class CacheMissError(GatewayError):
    """Replay store has no entry for the queried (image, prompt) pair."""


class EmptyResponseError(GatewayError):
    """Namer produced no usable candidate names."""


class EmptySetError(ZeroKeyError):
    """Aggregation was handed an empty point set."""


class InsufficientPointsError(ZeroKeyError):
    """Fewer points than the neighborhood size requires."""


class InvalidPatchError(ZeroKeyError):
    """Patch size is not a positive odd integer."""


class EmptyGroundTruthError(ZeroKeyError):
    """Ground-truth set contains no keypoints."""


class MeshMismatchError(ZeroKeyError):
    """Ground-truth keypoints do not lie on the evaluated mesh."""


class MarkerInvisibleError(ZeroKeyError):
    """Marker is occluded in every rendered view."""


class ConfigError(ZeroKeyError):
    """Run configuration is unusable (missing file, bad value, bad TOML)."""


class PipelineError(ZeroKeyError):
    """Failure inside a pipeline stage, annotated with its location."""

    def __init__(self, stage: str, message: str,
                 view_id: int | None = None, prompt_id: int | None = None):
        self.stage = stage
        self.view_id = view_id
        self.prompt_id = prompt_id
        where = stage
        if view_id is not None:
            where += f", view {view_id}"
        if prompt_id is not None:
            where += f", prompt {prompt_id}"
        super().__init__(f"[{where}] {message}")
