"""Manual parsing and lexical retrieval over safety/troubleshooting entries.

Manuals are plain text in a fixed convention:

    SAFETY PRECAUTIONS

    - Heading: precaution text.

    TROUBLESHOOTING

    Symptom: what the operator sees (fault codes inline).
    Remedy: what to do about it.

Retrieval is BM25 with a large additive boost when the query names a fault
code listed by an entry, so code-bearing queries rank exact matches first.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import NoRecognizedSections, UnknownEntry
from .events import CODE_RE
from .registry import DeviceKind

K1 = 1.2
B = 0.75
CODE_BOOST = 1000.0

# fixed 30-word stoplist, applied to documents and queries alike
STOPWORDS = frozenset(
    "a an and are as at be but by for if in into is it "
    "no not of on or such that the their then there these they this to".split()
)

_TOKEN_SPLIT_RE = re.compile(r"[^a-z0-9]+")
_CODE_TOKEN_RE = re.compile(r"^[a-z][0-9]{3}$")
_BULLET_RE = re.compile(r"^(?:[-*]|\d+[.)])\s+")


class Section(Enum):
    SAFETY = "SAFETY"
    TROUBLESHOOTING = "TROUBLESHOOTING"


@dataclass(frozen=True)
class ManualEntry:
    entry_id: str
    manual_id: str
    device_kind: DeviceKind
    section: Section
    title: str
    body: str
    codes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.body.strip():
            raise ValueError(f"entry {self.entry_id!r} has an empty body")
        for code in self.codes:
            if not CODE_RE.match(code):
                raise ValueError(f"entry {self.entry_id!r}: bad fault code {code!r}")

    def to_json_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "manual_id": self.manual_id,
            "device_kind": self.device_kind.name,
            "section": self.section.name,
            "title": self.title,
            "body": self.body,
            "codes": list(self.codes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ManualEntry":
        return cls(
            entry_id=data["entry_id"],
            manual_id=data["manual_id"],
            device_kind=DeviceKind[data["device_kind"]],
            section=Section[data["section"]],
            title=data["title"],
            body=data["body"],
            codes=tuple(data["codes"]),
        )


@dataclass(frozen=True)
class KnowledgeHit:
    entry_ref: ManualEntry
    score: float
    matched_terms: tuple[str, ...]
    code_match: bool

    def to_json_dict(self) -> dict:
        return {
            "entry_id": self.entry_ref.entry_id,
            "score": round(self.score, 6),
            "matched_terms": list(self.matched_terms),
            "code_match": self.code_match,
        }


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stopwords."""
    return [
        tok
        for tok in _TOKEN_SPLIT_RE.split(text.lower())
        if tok and tok not in STOPWORDS
    ]


def extract_codes(text: str) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for raw in _TOKEN_SPLIT_RE.split(text.lower()):
        token = raw.upper()
        if CODE_RE.match(token):
            seen.setdefault(token)
    return tuple(seen)


def _split_title(item: str) -> tuple[str, str]:
    # safety bullets follow "Heading: text"; headingless bullets are their own body
    head, sep, rest = item.partition(":")
    if sep and rest.strip():
        return head.strip(), rest.strip()
    return item.strip(), item.strip()


def parse_manual(
    text: str, manual_id: str, device_kind: DeviceKind
) -> list[ManualEntry]:
    """Split manual text into SAFETY and TROUBLESHOOTING entries.

    Lines before the first recognized header are ignored. A manual with no
    recognized header at all is rejected.
    """
    sections: list[tuple[Section, list[str]]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        header = line.strip().rstrip(":").upper()
        if header == "SAFETY PRECAUTIONS":
            current = []
            sections.append((Section.SAFETY, current))
        elif header == "TROUBLESHOOTING":
            current = []
            sections.append((Section.TROUBLESHOOTING, current))
        elif current is not None:
            current.append(line)
    if not sections:
        raise NoRecognizedSections(f"manual {manual_id!r} has no recognized sections")

    entries: list[ManualEntry] = []
    counters = {Section.SAFETY: 0, Section.TROUBLESHOOTING: 0}

    def make(section: Section, title: str, body: str) -> None:
        counters[section] += 1
        tag = "S" if section is Section.SAFETY else "T"
        entries.append(
            ManualEntry(
                entry_id=f"{manual_id}-{tag}{counters[section]:02d}",
                manual_id=manual_id,
                device_kind=device_kind,
                section=section,
                title=title,
                body=body,
                codes=extract_codes(f"{title}\n{body}"),
            )
        )

    for section, lines in sections:
        if section is Section.SAFETY:
            items: list[str] = []
            for line in lines:
                stripped = line.strip()
                if not stripped:
                    continue
                if _BULLET_RE.match(stripped):
                    items.append(_BULLET_RE.sub("", stripped))
                elif items:
                    items[-1] += " " + stripped  # continuation line
            for item in items:
                title, body = _split_title(item)
                make(section, title, body)
        else:
            # Symptom:/Remedy: pairs; both markers may share a line
            blob = " ".join(part.strip() for part in lines if part.strip())
            chunks = re.split(r"(?i)\bsymptom\s*:", blob)
            for chunk in chunks[1:]:
                pieces = re.split(r"(?i)\bremedy\s*:", chunk, maxsplit=1)
                symptom = pieces[0].strip()
                remedy = pieces[1].strip() if len(pieces) > 1 else symptom
                if symptom:
                    make(section, symptom, remedy)
    return entries


def render_manual(entries: Sequence[ManualEntry]) -> str:
    """Regenerate canonical manual text; inverse of parse_manual on fixtures."""
    safety = [e for e in entries if e.section is Section.SAFETY]
    trouble = [e for e in entries if e.section is Section.TROUBLESHOOTING]
    lines: list[str] = []
    if safety:
        lines.append("SAFETY PRECAUTIONS")
        lines.append("")
        for entry in safety:
            lines.append(f"- {entry.title}: {entry.body}")
        lines.append("")
    if trouble:
        lines.append("TROUBLESHOOTING")
        lines.append("")
        for entry in trouble:
            lines.append(f"Symptom: {entry.title}")
            lines.append(f"Remedy: {entry.body}")
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"


class KnowledgeIndex:
    """Immutable BM25 index over manual entries; rebuilt whole on change."""

    def __init__(self, entries: Iterable[ManualEntry] = ()):
        self._entries: list[ManualEntry] = []
        self._by_id: dict[str, ManualEntry] = {}
        self._tfs: list[Counter] = []
        self._lengths: list[int] = []
        self._df: Counter = Counter()
        for entry in entries:
            if entry.entry_id in self._by_id:
                raise ValueError(f"duplicate entry id {entry.entry_id!r}")
            tokens = tokenize(f"{entry.title}\n{entry.body}")
            self._entries.append(entry)
            self._by_id[entry.entry_id] = entry
            self._tfs.append(Counter(tokens))
            self._lengths.append(len(tokens))
            for term in set(tokens):
                self._df[term] += 1
        self._n = len(self._entries)
        self._avgdl = (sum(self._lengths) / self._n) if self._n else 0.0

    def __len__(self) -> int:
        return self._n

    def entries(self) -> list[ManualEntry]:
        return list(self._entries)

    def get_entry(self, entry_id: str) -> ManualEntry:
        try:
            return self._by_id[entry_id]
        except KeyError:
            raise UnknownEntry(f"unknown manual entry {entry_id!r}") from None

    def df(self, term: str) -> int:
        return self._df.get(term, 0)

    def _idf(self, term: str) -> float:
        df = self._df.get(term, 0)
        return math.log(1.0 + (self._n - df + 0.5) / (df + 0.5))

    def retrieve(
        self,
        query: str,
        kind: DeviceKind | None = None,
        k: int = 5,
        sections: tuple[Section, ...] | None = None,
    ) -> list[KnowledgeHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        terms: list[str] = []
        for tok in tokenize(query):
            if tok not in terms:
                terms.append(tok)
        if not terms or not self._n:
            return []
        query_codes = {
            tok.upper() for tok in terms if _CODE_TOKEN_RE.match(tok)
        }

        hits: list[KnowledgeHit] = []
        for entry, tfs, length in zip(self._entries, self._tfs, self._lengths):
            if kind is not None and entry.device_kind is not kind:
                continue
            if sections is not None and entry.section not in sections:
                continue
            score = 0.0
            matched = []
            for term in terms:
                tf = tfs.get(term, 0)
                if not tf:
                    continue
                matched.append(term)
                norm = tf + K1 * (1.0 - B + B * length / self._avgdl)
                score += self._idf(term) * tf * (K1 + 1.0) / norm
            boosted = query_codes & set(entry.codes)
            score += CODE_BOOST * len(boosted)
            if score > 0.0:
                hits.append(
                    KnowledgeHit(
                        entry_ref=entry,
                        score=score,
                        matched_terms=tuple(matched),
                        code_match=bool(boosted),
                    )
                )
        hits.sort(key=lambda h: (-h.score, h.entry_ref.entry_id))
        return hits[:k]


# --- store io ----------------------------------------------------------------


def manual_text_path(root: str | Path, manual_id: str) -> Path:
    return Path(root) / "manuals" / f"{manual_id}.txt"


def entries_path(root: str | Path, manual_id: str) -> Path:
    return Path(root) / "manuals" / f"{manual_id}.entries.jsonl"


def save_manual(
    root: str | Path, manual_id: str, text: str, entries: Sequence[ManualEntry]
) -> None:
    """Persist raw text plus parsed entries under manuals/."""
    txt = manual_text_path(root, manual_id)
    txt.parent.mkdir(parents=True, exist_ok=True)
    txt.write_text(text, encoding="utf-8")
    tmp = entries_path(root, manual_id).with_suffix(".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
    tmp.replace(entries_path(root, manual_id))


def load_all_entries(root: str | Path) -> list[ManualEntry]:
    """Entries from every manuals/*.entries.jsonl, in manual then entry order."""
    manuals_dir = Path(root) / "manuals"
    entries: list[ManualEntry] = []
    if not manuals_dir.is_dir():
        return entries
    for path in sorted(manuals_dir.glob("*.entries.jsonl")):
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(ManualEntry.from_json_dict(json.loads(line)))
    return entries
