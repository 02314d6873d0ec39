"""Disease-tagged visual bank and report memory: construction and the
binary bank file format.

File layout (all little-endian)::

    magic   8s   b"AMMRGBNK"
    version u16  1
    kind    u8   0 = visual, 1 = report
    dim     u32
    count   u64
    then ``count`` entries:
      visual: disease_id u8, patch_index u16, source_image_id str, feature f32[dim]
      report: labels u16 (bit j = disease j), sentence_text str,
              source_report_id str, feature f32[dim]
    str = u32 byte length + UTF-8 bytes
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMemoryError, FormatError
from .hopfield import PatternMatrix

MAGIC = b"AMMRGBNK"
VERSION = 1
KIND_VISUAL = 0
KIND_REPORT = 1
N_DISEASES = 14
N_PATCHES = 196

_HEADER = struct.Struct("<8sHBIQ")


@dataclass(frozen=True, eq=False)
class VisualBankEntry:
    feature: np.ndarray
    disease_id: int
    source_image_id: str
    patch_index: int
    # ranking key for cap selection; not persisted
    score: float = 0.0

    def __post_init__(self):
        if not 0 <= self.disease_id < N_DISEASES:
            raise ValueError(f"disease_id {self.disease_id} out of range")
        if not 0 <= self.patch_index < N_PATCHES:
            raise ValueError(f"patch_index {self.patch_index} out of range")
        if not np.all(np.isfinite(self.feature)):
            raise ValueError("feature has non-finite entries")


@dataclass(frozen=True, eq=False)
class ReportMemoryEntry:
    feature: np.ndarray
    sentence_text: str
    disease_labels: tuple
    source_report_id: str

    def __post_init__(self):
        if not self.sentence_text.strip():
            raise ValueError("sentence_text must be non-empty")
        if len(self.disease_labels) != N_DISEASES:
            raise ValueError(f"disease_labels must have {N_DISEASES} entries")
        if not np.all(np.isfinite(self.feature)):
            raise ValueError("feature has non-finite entries")


def _features(rows, dim):
    if not rows:
        return np.zeros((0, dim))
    return np.vstack([np.asarray(r, dtype=np.float64) for r in rows])


@dataclass(eq=False)
class VisualBank:
    features: np.ndarray
    disease_ids: np.ndarray
    source_ids: list
    patch_indices: np.ndarray
    kind: int = field(default=KIND_VISUAL, init=False)

    @classmethod
    def from_entries(cls, entries, dim=768):
        entries = list(entries)
        if entries:
            dim = len(entries[0].feature)
        return cls(
            features=_features([e.feature for e in entries], dim),
            disease_ids=np.array([e.disease_id for e in entries], dtype=np.int64),
            source_ids=[e.source_image_id for e in entries],
            patch_indices=np.array([e.patch_index for e in entries], dtype=np.int64),
        )

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def entries(self):
        for i in range(len(self)):
            yield VisualBankEntry(self.features[i], int(self.disease_ids[i]), self.source_ids[i],
                                  int(self.patch_indices[i]))

    def disease_mask(self, disease_id):
        return self.disease_ids == disease_id

    def __eq__(self, other):
        return (
            isinstance(other, VisualBank)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.disease_ids, other.disease_ids)
            and self.source_ids == other.source_ids
            and np.array_equal(self.patch_indices, other.patch_indices)
        )


@dataclass(eq=False)
class ReportMemory:
    features: np.ndarray
    labels: np.ndarray  # (N, 14) bool
    sentences: list
    source_ids: list
    kind: int = field(default=KIND_REPORT, init=False)

    @classmethod
    def from_entries(cls, entries, dim=768):
        entries = list(entries)
        if entries:
            dim = len(entries[0].feature)
        labels = np.array([e.disease_labels for e in entries], dtype=bool).reshape(len(entries), N_DISEASES)
        return cls(
            features=_features([e.feature for e in entries], dim),
            labels=labels,
            sentences=[e.sentence_text for e in entries],
            source_ids=[e.source_report_id for e in entries],
        )

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def entries(self):
        for i in range(len(self)):
            yield ReportMemoryEntry(self.features[i], self.sentences[i], tuple(bool(b) for b in self.labels[i]),
                                    self.source_ids[i])

    def disease_mask(self, disease_id):
        return self.labels[:, disease_id]

    def __eq__(self, other):
        return (
            isinstance(other, ReportMemory)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.sentences == other.sentences
            and self.source_ids == other.source_ids
        )


# ------------------------------------------------------------------ building


def build_visual_bank(candidates, cap_per_disease=500, dim=768):
    """Keep at most ``cap_per_disease`` candidates per disease.

    Within a disease the highest ``score`` wins; ties go to the smaller
    ``(source_image_id, patch_index)``. Kept entries stay in input order.
    """
    if cap_per_disease < 1:
        raise ValueError("cap_per_disease must be >= 1")
    candidates = list(candidates)
    by_disease = {}
    for i, e in enumerate(candidates):
        by_disease.setdefault(e.disease_id, []).append(i)
    keep = set()
    for idx in by_disease.values():
        ranked = sorted(idx, key=lambda i: (-candidates[i].score, candidates[i].source_image_id,
                                            candidates[i].patch_index))
        keep.update(ranked[:cap_per_disease])
    return VisualBank.from_entries([candidates[i] for i in sorted(keep)], dim=dim)


def largest_remainder(counts, total):
    """Integer quotas proportional to ``counts`` summing to ``min(total, sum(counts))``.

    Floors first, then one extra unit per group by descending remainder;
    equal remainders go to the lower index. Exact integer arithmetic.
    """
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("counts must be non-negative")
    supply = sum(counts)
    if total >= supply:
        return counts
    if total <= 0:
        return [0] * len(counts)
    quotas = [total * c // supply for c in counts]
    remainders = [total * c % supply for c in counts]
    leftover = total - sum(quotas)
    order = sorted(range(len(counts)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        quotas[i] += 1
    return quotas


def apportion_group(labels):
    """Group used for quota counting: lowest positive label, or 14 if none."""
    for j, flag in enumerate(labels):
        if flag:
            return j
    return N_DISEASES


def build_report_memory(candidates, total_size=6000, dim=768):
    if total_size < 1:
        raise ValueError("total_size must be >= 1")
    candidates = list(candidates)
    groups = [apportion_group(e.disease_labels) for e in candidates]
    counts = [groups.count(g) for g in range(N_DISEASES + 1)]
    quotas = largest_remainder(counts, total_size)
    taken = [0] * (N_DISEASES + 1)
    kept = []
    for e, g in zip(candidates, groups):
        if taken[g] < quotas[g]:
            taken[g] += 1
            kept.append(e)
    return ReportMemory.from_entries(kept, dim=dim)


def as_pattern_matrix(bank, disease_filter=None):
    if disease_filter is None:
        rows = bank.features
    else:
        rows = bank.features[bank.disease_mask(disease_filter)]
    if rows.shape[0] == 0:
        what = "bank" if disease_filter is None else f"disease {disease_filter} selection"
        raise EmptyMemoryError(f"empty memory: {what} has no entries")
    return PatternMatrix(rows)


# --------------------------------------------------------------- persistence


def _pack_str(text):
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _labels_to_bits(labels):
    bits = 0
    for j, flag in enumerate(labels):
        if flag:
            bits |= 1 << j
    return bits


def dumps_bank(bank):
    feats = np.asarray(bank.features, dtype="<f4")
    parts = [_HEADER.pack(MAGIC, VERSION, bank.kind, bank.dim, len(bank))]
    for i in range(len(bank)):
        if bank.kind == KIND_VISUAL:
            parts.append(struct.pack("<BH", int(bank.disease_ids[i]), int(bank.patch_indices[i])))
            parts.append(_pack_str(bank.source_ids[i]))
        else:
            parts.append(struct.pack("<H", _labels_to_bits(bank.labels[i])))
            parts.append(_pack_str(bank.sentences[i]))
            parts.append(_pack_str(bank.source_ids[i]))
        parts.append(feats[i].tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def string(self, what):
        (n,) = self.unpack("<I", f"{what} length")
        start = self.pos
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 in {what}", start) from exc


def loads_bank(data):
    r = _Reader(bytes(data))
    if len(r.data) < 8 or r.data[:8] != MAGIC:
        raise FormatError("bad magic, not a bank file", 0)
    magic, version, kind, dim, count = r.unpack(_HEADER.format, "header")
    if version != VERSION:
        raise FormatError(f"unsupported bank version {version}", 8)
    if kind not in (KIND_VISUAL, KIND_REPORT):
        raise FormatError(f"unknown bank kind {kind}", 10)
    if count * dim * 4 > len(r.data) - r.pos:
        # feature bytes alone cannot fit; refuse before allocating
        raise FormatError(f"truncated file: header promises {count} entries of dim {dim}", r.pos)
    feats = np.empty((count, dim), dtype=np.float64)
    disease, patch, labels, sentences, sources = [], [], [], [], []
    for i in range(count):
        if kind == KIND_VISUAL:
            at = r.pos
            d, p = r.unpack("<BH", f"entry {i} tags")
            if d >= N_DISEASES or p >= N_PATCHES:
                raise FormatError(f"entry {i}: disease {d} / patch {p} out of range", at)
            disease.append(d)
            patch.append(p)
            sources.append(r.string(f"entry {i} source id"))
        else:
            at = r.pos
            (bits,) = r.unpack("<H", f"entry {i} labels")
            if bits >> N_DISEASES:
                raise FormatError(f"entry {i}: label bits beyond disease {N_DISEASES - 1}", at)
            labels.append([bool(bits >> j & 1) for j in range(N_DISEASES)])
            sentences.append(r.string(f"entry {i} sentence"))
            sources.append(r.string(f"entry {i} source id"))
        feats[i] = np.frombuffer(r.take(4 * dim, f"entry {i} feature"), dtype="<f4")
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after {count} entries", r.pos)
    if kind == KIND_VISUAL:
        return VisualBank(feats, np.array(disease, dtype=np.int64), sources, np.array(patch, dtype=np.int64))
    return ReportMemory(feats, np.array(labels, dtype=bool).reshape(count, N_DISEASES), sentences, sources)


def save_bank(bank, path):
    Path(path).write_bytes(dumps_bank(bank))


def load_bank(path):
    return loads_bank(Path(path).read_bytes())
