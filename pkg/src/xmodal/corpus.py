"""Gallery data model and ingestion.

Two on-disk artifacts make up a gallery:

* a binary feature file (magic ``XMFE``): version, count, dim as little-endian
  u32, then count x dim float64 values, row-major;
* a JSON-lines metadata file, one record per item:
  ``{"id": int, "domain": "source"|"target", "verb": int|null, "noun": int|null,
  "text_feature_row": int|null, "raw": string|null}``.
  Text features live in a second XMFE file indexed by ``text_feature_row``.

Item index equals metadata row number; loading validates that ``id`` agrees, so
galleries are order-stable. Source items must carry captions, target items must
not — held-out target captions are read through :func:`load_eval_queries`,
which returns a type the trainers cannot accept, keeping evaluation truth
structurally out of the training path.

Galleries and relevance sets are immutable after load and safe to share.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError, GalleryError, VersionError

XMFE_MAGIC = b"XMFE"
XMFE_VERSION = 1

VIEWS = ("verb", "noun", "action")


def write_features(path, features: np.ndarray) -> None:
    """Write a float64 matrix as an XMFE file."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got ndim={features.ndim}")
    n, dim = features.shape
    with open(path, "wb") as fh:
        fh.write(XMFE_MAGIC)
        fh.write(struct.pack("<III", XMFE_VERSION, n, dim))
        fh.write(features.astype("<f8").tobytes())


def read_features(path) -> np.ndarray:
    """Read an XMFE file back into a (count, dim) float64 matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise CorruptFileError(f"{path}: shorter than the XMFE header")
    if raw[:4] != XMFE_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {XMFE_MAGIC!r}")
    version, n, dim = struct.unpack("<III", raw[4:16])
    if version != XMFE_VERSION:
        raise VersionError(f"{path}: XMFE version {version} not supported (expected {XMFE_VERSION})")
    expected = 16 + 8 * n * dim
    if len(raw) != expected:
        raise CorruptFileError(f"{path}: payload is {len(raw)} bytes, header promises {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=16).reshape(n, dim).copy()
    if not np.isfinite(data).all():
        raise FormatError(f"{path}: non-finite feature values")
    return data


@dataclass(frozen=True)
class Gallery:
    """A domain-tagged collection of items on pre-extracted features.

    `verb`, `noun` and `text` are present iff the gallery is a captioned
    source gallery; target galleries carry video features only.
    """

    domain: str
    video: np.ndarray                    # (n, d_video)
    verb: np.ndarray | None = None       # (n,) int64
    noun: np.ndarray | None = None       # (n,) int64
    text: np.ndarray | None = None       # (n, d_text)
    raw: tuple | None = None

    def __len__(self) -> int:
        return self.video.shape[0]

    @property
    def captioned(self) -> bool:
        return self.verb is not None

    def with_video(self, video: np.ndarray) -> "Gallery":
        """Copy of this gallery with transformed video features."""
        if video.shape != self.video.shape:
            raise GalleryError(f"replacement video shape {video.shape} != {self.video.shape}")
        return Gallery(self.domain, np.ascontiguousarray(video, dtype=np.float64),
                       self.verb, self.noun, self.text, self.raw)

    def with_text(self, text: np.ndarray) -> "Gallery":
        if self.text is None or text.shape != self.text.shape:
            raise GalleryError("replacement text shape mismatch")
        return Gallery(self.domain, self.video, self.verb, self.noun,
                       np.ascontiguousarray(text, dtype=np.float64), self.raw)


@dataclass(frozen=True)
class EvalQueries:
    """Held-out target captions, usable for evaluation and diagnostics only.

    Deliberately a distinct type from Gallery: trainer entry points accept
    galleries, so truth files cannot slip into the training path.
    """

    verb: np.ndarray
    noun: np.ndarray
    text: np.ndarray
    raw: tuple | None = None

    def __len__(self) -> int:
        return self.text.shape[0]


def _parse_meta_lines(meta_path):
    records = []
    with open(meta_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{meta_path}:{lineno + 1}: invalid JSON ({exc})") from exc
            if not isinstance(rec, dict) or "id" not in rec or "domain" not in rec:
                raise FormatError(f"{meta_path}:{lineno + 1}: record needs 'id' and 'domain'")
            records.append(rec)
    return records


def _class_id(rec, key, meta_path, row):
    value = rec.get(key)
    if value is None:
        return None
    if not isinstance(value, int) or value < 0:
        raise GalleryError(f"{meta_path}:{row + 1}: unknown class id {key}={value!r}")
    return value


def load_gallery(feature_path, meta_path, text_feature_path=None) -> Gallery:
    """Load and validate one gallery (the training-side entry point).

    Raises GalleryError if a target item carries caption fields: held-out
    target captions must go through load_eval_queries instead.
    """
    video = read_features(feature_path)
    records = _parse_meta_lines(meta_path)
    if not records:
        raise GalleryError(f"{meta_path}: empty gallery (no metadata records)")
    if video.shape[0] != len(records):
        raise GalleryError(
            f"feature rows ({video.shape[0]}) != metadata rows ({len(records)}) "
            f"for {feature_path} / {meta_path}"
        )

    domain = records[0]["domain"]
    if domain not in ("source", "target"):
        raise FormatError(f"{meta_path}: domain must be 'source' or 'target', got {domain!r}")

    verbs, nouns, text_rows, raws = [], [], [], []
    for row, rec in enumerate(records):
        if rec["domain"] != domain:
            raise GalleryError(f"{meta_path}:{row + 1}: mixed domains in one gallery")
        if rec["id"] != row:
            raise GalleryError(f"{meta_path}:{row + 1}: id {rec['id']} != row index {row}")
        verb = _class_id(rec, "verb", meta_path, row)
        noun = _class_id(rec, "noun", meta_path, row)
        trow = rec.get("text_feature_row")
        if domain == "source":
            if verb is None or noun is None or trow is None:
                raise GalleryError(f"{meta_path}:{row + 1}: source item missing caption fields")
        else:
            if verb is not None or noun is not None or trow is not None:
                raise GalleryError(
                    f"{meta_path}:{row + 1}: target item carries caption fields at train "
                    "time; evaluation truth must be loaded with load_eval_queries"
                )
        verbs.append(verb)
        nouns.append(noun)
        text_rows.append(trow)
        raws.append(rec.get("raw"))

    if domain == "target":
        return Gallery(domain, video, raw=tuple(raws))

    if text_feature_path is None:
        raise GalleryError(f"{meta_path}: source gallery needs a text feature file")
    text_bank = read_features(text_feature_path)
    for row, trow in enumerate(text_rows):
        if not 0 <= trow < text_bank.shape[0]:
            raise GalleryError(
                f"{meta_path}:{row + 1}: text_feature_row {trow} outside bank of "
                f"{text_bank.shape[0]} rows"
            )
    text = np.ascontiguousarray(text_bank[np.asarray(text_rows)])
    return Gallery(
        domain, video,
        verb=np.asarray(verbs, dtype=np.int64),
        noun=np.asarray(nouns, dtype=np.int64),
        text=text,
        raw=tuple(raws),
    )


def load_eval_queries(meta_path, text_feature_path) -> EvalQueries:
    """Load held-out target captions (evaluation-only entry point).

    Record i aligns with target gallery item i: the captions double as
    ground-truth labels for pseudo-label diagnostics and as text queries.
    """
    records = _parse_meta_lines(meta_path)
    if not records:
        raise GalleryError(f"{meta_path}: empty query file")
    text_bank = read_features(text_feature_path)
    verbs, nouns, rows, raws = [], [], [], []
    for row, rec in enumerate(records):
        if rec["domain"] != "target":
            raise GalleryError(f"{meta_path}:{row + 1}: evaluation queries must be target-domain")
        if rec["id"] != row:
            raise GalleryError(f"{meta_path}:{row + 1}: id {rec['id']} != row index {row}")
        verb = _class_id(rec, "verb", meta_path, row)
        noun = _class_id(rec, "noun", meta_path, row)
        trow = rec.get("text_feature_row")
        if verb is None or noun is None or trow is None:
            raise GalleryError(f"{meta_path}:{row + 1}: query record missing caption fields")
        if not 0 <= trow < text_bank.shape[0]:
            raise GalleryError(f"{meta_path}:{row + 1}: text_feature_row {trow} out of range")
        verbs.append(verb)
        nouns.append(noun)
        rows.append(trow)
        raws.append(rec.get("raw"))
    return EvalQueries(
        verb=np.asarray(verbs, dtype=np.int64),
        noun=np.asarray(nouns, dtype=np.int64),
        text=np.ascontiguousarray(text_bank[np.asarray(rows)]),
        raw=tuple(raws),
    )


def write_meta(path, domain: str, verbs=None, nouns=None, text_rows=None, raws=None, count=None):
    """Write a metadata JSONL file; caption fields omitted for plain targets."""
    if verbs is not None:
        count = len(verbs)
    if count is None:
        raise ValueError("need either caption arrays or an explicit count")
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(count):
            rec = {
                "id": i,
                "domain": domain,
                "verb": int(verbs[i]) if verbs is not None else None,
                "noun": int(nouns[i]) if nouns is not None else None,
                "text_feature_row": int(text_rows[i]) if text_rows is not None else None,
                "raw": raws[i] if raws is not None else None,
            }
            fh.write(json.dumps(rec) + "\n")


def item_labels(verb, noun, view: str) -> list:
    """Per-item class label in a view: verb id, noun id, or the (verb, noun) pair."""
    if view == "verb":
        return [int(v) for v in verb]
    if view == "noun":
        return [int(n) for n in noun]
    if view == "action":
        return list(zip((int(v) for v in verb), (int(n) for n in noun)))
    raise ValueError(f"unknown view {view!r}")


@dataclass(frozen=True)
class RelevanceView:
    """Partition of a captioned gallery into relevance groups for one view."""

    view: str
    group_ids: np.ndarray                 # (n,) group index per item
    groups: tuple                         # tuple of index arrays, one per group
    labels: tuple                         # original label per group

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def relevant(self, item: int) -> np.ndarray:
        """Items in the anchor's group, excluding the anchor itself."""
        members = self.groups[self.group_ids[item]]
        return members[members != item]

    def irrelevant(self, item: int) -> np.ndarray:
        own = self.group_ids[item]
        return np.concatenate([g for gid, g in enumerate(self.groups) if gid != own]) \
            if self.num_groups > 1 else np.empty(0, dtype=np.int64)


def build_relevance(gallery: Gallery, view: str) -> RelevanceView:
    """Group captioned items by class label for the requested view."""
    if not gallery.captioned:
        raise GalleryError("relevance sets need a captioned gallery")
    labels = item_labels(gallery.verb, gallery.noun, view)
    uniq = sorted(set(labels))
    label_to_gid = {lab: gid for gid, lab in enumerate(uniq)}
    group_ids = np.asarray([label_to_gid[lab] for lab in labels], dtype=np.int64)
    groups = tuple(np.flatnonzero(group_ids == gid).astype(np.int64) for gid in range(len(uniq)))
    return RelevanceView(view=view, group_ids=group_ids, groups=groups, labels=tuple(uniq))


def build_all_relevance(gallery: Gallery) -> dict:
    return {view: build_relevance(gallery, view) for view in VIEWS}
