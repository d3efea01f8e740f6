"""Gateway to 2D point detectors and keypoint namers.

Three interchangeable detector backends answer "where is <prompt> in this
image" with points in percent coordinates ([0, 100] on each axis):

  * remote: HTTP POST of ``{"image": <base64 PNG>, "prompt": <text>}`` to
    an endpoint (default path ``/point``) answering
    ``{"points": [{"x": .., "y": ..}]}``;
  * mock: a deterministic simulator that projects configured ground-truth
    surface points, applies occlusion, misses, pixel noise and outliers;
  * replay: a content-addressed store of previously recorded responses,
    usable with the network gone.

Percent x maps to the pixel axis as ``px = x / 100 * width - 0.5`` and is
clamped to [0, width - 1]; same for y with the height.  Out-of-range
backend answers are clamped and flagged, never dropped.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path
from urllib.parse import urlsplit, urlunsplit

import numpy as np
import requests

from .errors import (
    BehindCameraError,
    CacheMissError,
    ConfigError,
    DetectorTimeoutError,
    EmptyResponseError,
    EndpointUnreachableError,
    ProtocolError,
    UnknownPromptError,
)
from .mesh import SurfacePoint
from .render import RenderedView, project

__all__ = [
    "CatalogEntry",
    "Detection2D",
    "DetectorBackend",
    "FileNamer",
    "GLOBAL_PROMPT_ID",
    "GLOBAL_PROMPT_TEXT",
    "MockDetectorBackend",
    "MockDetectorConfig",
    "MockNamer",
    "NamerBackend",
    "PromptCatalog",
    "RecordingBackend",
    "RemoteDetectorBackend",
    "RemoteNamer",
    "ReplayBackend",
    "URL_ENV_VAR",
    "catalog_for_category",
    "list_candidate_keypoints",
    "load_prompt_catalog",
    "mock_detect",
    "packaged_catalog",
    "percent_to_pixel",
    "pixel_to_percent",
    "point_prompt",
    "query_points",
    "record_replay",
]

URL_ENV_VAR = "ZEROKEY_DETECTOR_URL"

# prompt id used when one query should return every salient point at once
GLOBAL_PROMPT_ID = -1
GLOBAL_PROMPT_TEXT = "Point to all salient points in this image."

NAMER_LIST_PROMPT = "List possible salient key points (in text)."
NAMER_DESCRIBE_PROMPT = "Give a short name for the point marked in red."

_POINT_PROMPT_TEMPLATE = "Point to the {description} in this image."


def point_prompt(description: str) -> str:
    """Full text of the per-keypoint query for one description."""
    return _POINT_PROMPT_TEMPLATE.format(description=description.strip())


def percent_to_pixel(value: float, size: int) -> float:
    px = value / 100.0 * size - 0.5
    return float(min(max(px, 0.0), size - 1.0))


def pixel_to_percent(px: float, size: int) -> float:
    return (px + 0.5) * 100.0 / size


@dataclass(frozen=True)
class Detection2D:
    """One detector answer: a 2D point in percent coordinates."""

    x: float
    y: float
    view_id: int
    prompt_id: int
    detector: str
    clamped: bool = False

    def pixel(self, width: int, height: int) -> tuple[float, float]:
        return percent_to_pixel(self.x, width), percent_to_pixel(self.y, height)


# ---------------------------------------------------------------------------
# prompt catalogs


@dataclass(frozen=True)
class CatalogEntry:
    id: int
    description: str
    short_description: str | None = None


@dataclass(frozen=True)
class PromptCatalog:
    """Named keypoint descriptions for one object category."""

    category: str
    entries: tuple[CatalogEntry, ...]

    def prompt_pairs(self, use_short: bool = False) -> list[tuple[int, str]]:
        pairs = []
        for e in self.entries:
            text = e.short_description if use_short and e.short_description else e.description
            pairs.append((e.id, text))
        return pairs

    def descriptions(self) -> list[str]:
        return [e.description for e in self.entries]


def _parse_catalog(data) -> list[PromptCatalog]:
    catalogs = []
    for block in data:
        entries = []
        seen = set()
        for kp in block["keypoints"]:
            eid = int(kp["id"])
            desc = kp["description"]
            if not isinstance(desc, str) or not desc.strip():
                raise ValueError(
                    f"catalog {block['category']!r}: empty description for id {eid}")
            if eid in seen:
                raise ValueError(
                    f"catalog {block['category']!r}: duplicate id {eid}")
            seen.add(eid)
            entries.append(CatalogEntry(eid, desc, kp.get("short_description")))
        catalogs.append(PromptCatalog(block["category"], tuple(entries)))
    return catalogs


def load_prompt_catalog(path) -> list[PromptCatalog]:
    """Load catalogs from a JSON array of {category, keypoints} blocks."""
    with open(path) as fh:
        try:
            return _parse_catalog(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def packaged_catalog() -> list[PromptCatalog]:
    """The keypoint-description catalog shipped with the package."""
    from importlib import resources

    ref = resources.files("zerokey").joinpath("catalogs/keypointnet.json")
    return _parse_catalog(json.loads(ref.read_text()))


def catalog_for_category(catalogs, category: str) -> PromptCatalog:
    for cat in catalogs:
        if cat.category.lower() == category.lower():
            return cat
    raise KeyError(f"no catalog for category {category!r}")


# ---------------------------------------------------------------------------
# backends


class DetectorBackend(ABC):
    """Answers point queries against a rendered view."""

    tag = "abstract"

    @abstractmethod
    def raw_points(self, view: RenderedView, prompt: str,
                   prompt_id: int) -> list[tuple[float, float]]:
        """Percent-coordinate points, unclamped, as the backend said them."""


def query_points(backend: DetectorBackend, view: RenderedView, prompt: str,
                 prompt_id: int = 0) -> list[Detection2D]:
    """Run one (view, prompt) query and normalize the answers.

    Out-of-range coordinates are clamped to [0, 100] and flagged on the
    detection rather than dropped.
    """
    out = []
    for x, y in backend.raw_points(view, prompt, prompt_id):
        cx = min(max(float(x), 0.0), 100.0)
        cy = min(max(float(y), 0.0), 100.0)
        out.append(Detection2D(x=cx, y=cy, view_id=view.view_id,
                               prompt_id=prompt_id, detector=backend.tag,
                               clamped=(cx != x or cy != y)))
    return out


class RemoteDetectorBackend(DetectorBackend):
    """HTTP point-detector client with retry and bearer-token support.

    Transport failures (connection errors, timeouts, HTTP 5xx) retry up
    to ``attempts`` times with exponential backoff, then raise.  A
    malformed 2xx body raises ProtocolError immediately, payload attached.
    """

    tag = "remote"

    def __init__(self, url: str | None = None, timeout: float = 60.0,
                 attempts: int = 3, backoff: float = 0.5,
                 token: str | None = None, session=None):
        if url is None:
            url = os.environ.get(URL_ENV_VAR)
        if not url:
            raise ValueError(
                f"no detector URL: pass one or set {URL_ENV_VAR}")
        parts = urlsplit(url)
        if parts.path in ("", "/"):
            parts = parts._replace(path="/point")
        self.url = urlunsplit(parts)
        self.timeout = timeout
        self.attempts = max(1, attempts)
        self.backoff = backoff
        self.token = token
        self._session = session or requests.Session()

    def raw_points(self, view, prompt, prompt_id):
        payload = {
            "image": base64.b64encode(view.png_bytes()).decode("ascii"),
            "prompt": prompt,
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"

        last_exc: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(self.url, json=payload,
                                          headers=headers,
                                          timeout=self.timeout)
            except requests.Timeout as exc:
                last_exc = DetectorTimeoutError(
                    f"{self.url} timed out after {self.timeout}s")
                last_exc.__cause__ = exc
                continue
            except requests.ConnectionError as exc:
                last_exc = EndpointUnreachableError(f"cannot reach {self.url}")
                last_exc.__cause__ = exc
                continue
            if resp.status_code >= 500:
                last_exc = EndpointUnreachableError(
                    f"{self.url} answered {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"{self.url} answered {resp.status_code}",
                    payload=resp.content)
            return _parse_point_body(resp.content, self.url)
        raise last_exc  # type: ignore[misc]


def _parse_point_body(body: bytes, origin: str) -> list[tuple[float, float]]:
    try:
        doc = json.loads(body)
        points = doc["points"]
        return [(float(p["x"]), float(p["y"])) for p in points]
    except (ValueError, KeyError, TypeError):
        raise ProtocolError(f"malformed body from {origin}",
                            payload=body) from None


# ---------------------------------------------------------------------------
# mock detector


@dataclass(frozen=True)
class MockDetectorConfig:
    """Deterministic detector simulator parameters.

    ground_truth maps prompt ids to surface points.  sigma is Gaussian
    pixel noise; miss/outlier/multi are per-query probabilities.  The
    output is a pure function of (config, view id, prompt id): the RNG is
    re-derived from those on every call, so call order cannot matter.
    """

    ground_truth: dict[int, SurfacePoint] = field(default_factory=dict)
    sigma: float = 0.0
    miss_prob: float = 0.0
    outlier_prob: float = 0.0
    multi_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_prob", "outlier_prob", "multi_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


OCCLUSION_TOLERANCE = 0.01  # fraction of camera distance


def mock_detect(config: MockDetectorConfig, view: RenderedView,
                prompt_id: int) -> list[Detection2D]:
    """Simulated detections for one (view, prompt) pair.

    The ground-truth point is projected; if it lands off-image, behind
    the camera, or deeper than the depth buffer by more than 1% of the
    camera distance it is occluded and the answer is empty.  Otherwise
    the projection is emitted with Gaussian pixel noise, plus an optional
    uniform outlier over the visible surface and an optional second noisy
    copy.
    """
    return query_points(MockDetectorBackend(config), view, "", prompt_id)


class MockDetectorBackend(DetectorBackend):
    tag = "mock"

    def __init__(self, config: MockDetectorConfig):
        self.config = config

    def raw_points(self, view, prompt, prompt_id):
        cfg = self.config
        if prompt_id == GLOBAL_PROMPT_ID:
            targets = [cfg.ground_truth[k] for k in sorted(cfg.ground_truth)]
        elif prompt_id in cfg.ground_truth:
            targets = [cfg.ground_truth[prompt_id]]
        else:
            raise UnknownPromptError(
                f"mock has no ground truth for prompt id {prompt_id}")

        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((cfg.seed, view.view_id, prompt_id + 1))))
        cam = view.camera
        points: list[tuple[float, float]] = []
        for gt in targets:
            try:
                px, py, t = project(cam, gt.xyz)
            except BehindCameraError:
                continue
            ix, iy = int(round(px)), int(round(py))
            if not (0 <= ix < cam.width and 0 <= iy < cam.height):
                continue
            if t > view.depth[iy, ix] + OCCLUSION_TOLERANCE * cam.distance:
                continue
            if cfg.miss_prob > 0 and rng.uniform() < cfg.miss_prob:
                continue

            noise = rng.normal(0.0, cfg.sigma, size=2) if cfg.sigma > 0 else (0.0, 0.0)
            points.append(self._to_percent(px + noise[0], py + noise[1], cam))

            if cfg.outlier_prob > 0 and rng.uniform() < cfg.outlier_prob:
                finite = np.argwhere(np.isfinite(view.depth))
                if len(finite):
                    oy, ox = finite[int(rng.integers(len(finite)))]
                    points.append(self._to_percent(float(ox), float(oy), cam))

            if cfg.multi_prob > 0 and rng.uniform() < cfg.multi_prob:
                noise2 = rng.normal(0.0, max(cfg.sigma, 1.0), size=2)
                points.append(self._to_percent(px + noise2[0], py + noise2[1], cam))
        return points

    @staticmethod
    def _to_percent(px, py, cam):
        return (pixel_to_percent(px, cam.width),
                pixel_to_percent(py, cam.height))


# ---------------------------------------------------------------------------
# record / replay


def _store_key(image_bytes: bytes, prompt: str) -> str:
    digest = hashlib.sha256()
    digest.update(image_bytes)
    digest.update(b"\x00")
    digest.update(prompt.encode("utf-8"))
    return digest.hexdigest()


def _canonical_points(points) -> bytes:
    doc = {"points": [{"x": float(x), "y": float(y)} for x, y in points]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("ascii")


class RecordingBackend(DetectorBackend):
    """Wraps a backend and persists every answer, keyed by content.

    Entries land in ``store/<sha256>.json``; identical queries overwrite
    with identical content, so recording is idempotent.  Answers are
    round-tripped through the stored form, so a later replay returns
    byte-identical results.
    """

    def __init__(self, inner: DetectorBackend, store):
        self.inner = inner
        self.store = Path(store)
        self.store.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @property
    def tag(self):
        return self.inner.tag

    def raw_points(self, view, prompt, prompt_id):
        points = self.inner.raw_points(view, prompt, prompt_id)
        blob = _canonical_points(points)
        key = _store_key(view.png_bytes(), prompt)
        with self._lock:
            (self.store / f"{key}.json").write_bytes(blob)
        doc = json.loads(blob)
        return [(p["x"], p["y"]) for p in doc["points"]]


class ReplayBackend(DetectorBackend):
    """Serves recorded answers only; unseen queries fail loudly."""

    tag = "replay"

    def __init__(self, store):
        self.store = Path(store)

    def raw_points(self, view, prompt, prompt_id):
        key = _store_key(view.png_bytes(), prompt)
        path = self.store / f"{key}.json"
        if not path.is_file():
            raise CacheMissError(
                f"no recorded response for key {key} (prompt {prompt!r})")
        doc = json.loads(path.read_bytes())
        return [(p["x"], p["y"]) for p in doc["points"]]


def record_replay(backend: DetectorBackend | None, store,
                  mode: str = "record") -> DetectorBackend:
    """Build a recording wrapper or a replay reader over a store directory."""
    if mode == "record":
        if backend is None:
            raise ValueError("record mode needs a backend to wrap")
        return RecordingBackend(backend, store)
    if mode == "replay":
        return ReplayBackend(store)
    raise ValueError(f"mode must be record or replay, got {mode!r}")


# ---------------------------------------------------------------------------
# namers


class NamerBackend(ABC):
    """Produces candidate keypoint names and short labels for markers."""

    @abstractmethod
    def candidates(self, view: RenderedView | None,
                   category_hint: str | None = None) -> list[str]:
        """Possible salient keypoint names, free text."""

    @abstractmethod
    def describe(self, view: RenderedView) -> str:
        """Short name for the marked point in the view."""


class FileNamer(NamerBackend):
    """Catalog-backed namer: returns stored descriptions verbatim."""

    def __init__(self, catalogs: list[PromptCatalog]):
        self.catalogs = catalogs

    def candidates(self, view=None, category_hint=None):
        if category_hint is not None:
            cats = [catalog_for_category(self.catalogs, category_hint)]
        else:
            cats = self.catalogs
        return [d for cat in cats for d in cat.descriptions()]

    def describe(self, view):
        raise EmptyResponseError("file-backed namer cannot describe markers")


class MockNamer(NamerBackend):
    """Fixed-answer namer for offline tests; cycles through its labels."""

    def __init__(self, labels):
        if isinstance(labels, str):
            labels = [labels]
        if not labels:
            raise ValueError("MockNamer needs at least one label")
        self.labels = list(labels)
        self._calls = 0

    def candidates(self, view=None, category_hint=None):
        seen = []
        for label in self.labels:
            if label not in seen:
                seen.append(label)
        return seen

    def describe(self, view):
        label = self.labels[self._calls % len(self.labels)]
        self._calls += 1
        return label


class RemoteNamer(NamerBackend):
    """HTTP namer speaking the same envelope as the point endpoint.

    POSTs ``{"image": <base64 PNG>, "prompt": <text>}`` and expects
    ``{"names": [..]}`` back.  Default path is ``/name``.
    """

    def __init__(self, url: str, timeout: float = 60.0, attempts: int = 3,
                 backoff: float = 0.5, token: str | None = None,
                 session=None):
        parts = urlsplit(url)
        if parts.path in ("", "/"):
            parts = parts._replace(path="/name")
        self.url = urlunsplit(parts)
        self.timeout = timeout
        self.attempts = max(1, attempts)
        self.backoff = backoff
        self.token = token
        self._session = session or requests.Session()

    def _ask(self, view, prompt) -> list[str]:
        payload = {
            "image": base64.b64encode(view.png_bytes()).decode("ascii"),
            "prompt": prompt,
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_exc: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(self.url, json=payload,
                                          headers=headers,
                                          timeout=self.timeout)
            except requests.Timeout as exc:
                last_exc = DetectorTimeoutError(f"{self.url} timed out")
                last_exc.__cause__ = exc
                continue
            except requests.ConnectionError as exc:
                last_exc = EndpointUnreachableError(f"cannot reach {self.url}")
                last_exc.__cause__ = exc
                continue
            if resp.status_code >= 500:
                last_exc = EndpointUnreachableError(
                    f"{self.url} answered {resp.status_code}")
                continue
            try:
                names = json.loads(resp.content)["names"]
                return [str(n) for n in names]
            except (ValueError, KeyError, TypeError):
                raise ProtocolError(f"malformed body from {self.url}",
                                    payload=resp.content) from None
        raise last_exc  # type: ignore[misc]

    def candidates(self, view, category_hint=None):
        prompt = NAMER_LIST_PROMPT
        if category_hint:
            prompt = f"{NAMER_LIST_PROMPT} The object is a {category_hint}."
        return self._ask(view, prompt)

    def describe(self, view):
        names = self._ask(view, NAMER_DESCRIBE_PROMPT)
        if not names:
            raise EmptyResponseError(f"{self.url} returned no names")
        return names[0]


def list_candidate_keypoints(namer: NamerBackend,
                             view: RenderedView | None = None,
                             category_hint: str | None = None) -> list[str]:
    """Candidate keypoint names, deduplicated case-insensitively.

    First occurrence wins; an empty result raises EmptyResponseError.
    """
    raw = namer.candidates(view, category_hint)
    seen: set[str] = set()
    out: list[str] = []
    for name in raw:
        name = name.strip()
        key = name.lower()
        if name and key not in seen:
            seen.add(key)
            out.append(name)
    if not out:
        raise EmptyResponseError("namer produced no candidate keypoints")
    return out
