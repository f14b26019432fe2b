"""NegEx-style negation baseline over pre-tokenized sentences.

Cues are token sequences rather than regular expressions. A sentence is
scanned twice: pseudo-cues first, then pre/post cues by longest match from
left to right, skipping any candidate that overlaps a pseudo-cue. Each cue
opens a fixed window that stops early at a termination term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

CATEGORIES = ("PRE", "POST", "PSEUDO", "TERM")

Phrase = tuple[str, ...]


def normalize(phrase: str) -> Phrase:
    return tuple(phrase.lower().split())


@dataclass
class CueLexicon:
    pre_cues: set[Phrase] = field(default_factory=set)
    post_cues: set[Phrase] = field(default_factory=set)
    pseudo_cues: set[Phrase] = field(default_factory=set)
    termination_terms: set[Phrase] = field(default_factory=set)

    def __post_init__(self):
        groups = {
            "PRE": self.pre_cues,
            "POST": self.post_cues,
            "PSEUDO": self.pseudo_cues,
            "TERM": self.termination_terms,
        }
        for name, group in groups.items():
            normed = {normalize(" ".join(p)) if not isinstance(p, str) else normalize(p) for p in group}
            if () in normed:
                raise DataError(f"empty phrase in {name} cues")
            group.clear()
            group.update(normed)
        seen: dict[Phrase, str] = {}
        for name, group in groups.items():
            for p in group:
                if p in seen:
                    raise DataError(f"cue {' '.join(p)!r} is listed as both {seen[p]} and {name}")
                seen[p] = name
        self._max_len = max((len(p) for p in seen), default=0)

    @property
    def max_len(self) -> int:
        return self._max_len

    def __len__(self) -> int:
        return len(self.pre_cues) + len(self.post_cues) + len(self.pseudo_cues)


def parse_lexicon(text: str, path=None) -> CueLexicon:
    buckets: dict[str, set[Phrase]] = {c: set() for c in CATEGORIES}
    owner: dict[Phrase, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise DataError("expected CATEGORY<TAB>phrase", path, lineno)
        cat, phrase = line.split("\t", 1)
        cat = cat.strip().upper()
        if cat not in buckets:
            raise DataError(f"unknown category {cat!r}", path, lineno)
        norm = normalize(phrase)
        if not norm:
            raise DataError("empty cue phrase", path, lineno)
        if owner.get(norm, cat) != cat:
            raise DataError(f"cue {phrase.strip()!r} already listed as {owner[norm]}", path, lineno)
        owner[norm] = cat
        buckets[cat].add(norm)
    return CueLexicon(buckets["PRE"], buckets["POST"], buckets["PSEUDO"], buckets["TERM"])


def load_lexicon(path=None) -> CueLexicon:
    """Read a lexicon file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("negtag").joinpath("resources/negex_lexicon.txt").read_text(encoding="utf-8")
        return parse_lexicon(text, "negex_lexicon.txt")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"not valid UTF-8: {exc}", path) from exc
    return parse_lexicon(text, path)


@dataclass(frozen=True)
class ScopeConfig:
    window: int = 6
    # end the scope at termination terms; the sentence boundary always ends it
    use_termination: bool = True

    def __post_init__(self):
        if int(self.window) < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class Cue:
    start: int
    end: int
    kind: str  # PRE, POST or PSEUDO


def _longest(tokens: Sequence[str], i: int, groups: Sequence[set], max_len: int) -> int:
    for n in range(min(max_len, len(tokens) - i), 0, -1):
        cand = tuple(tokens[i : i + n])
        if any(cand in g for g in groups):
            return n
    return 0


def find_cues(tokens: Sequence[str], lexicon: CueLexicon) -> list[Cue]:
    """All pseudo, pre and post cue occurrences, in order of position."""
    low = [t.lower() for t in tokens]
    cues: list[Cue] = []
    blocked = [False] * len(low)
    i = 0
    while i < len(low):
        n = _longest(low, i, [lexicon.pseudo_cues], lexicon.max_len)
        if n:
            cues.append(Cue(i, i + n, "PSEUDO"))
            blocked[i : i + n] = [True] * n
            i += n
        else:
            i += 1
    i = 0
    while i < len(low):
        n = _longest(low, i, [lexicon.pre_cues, lexicon.post_cues], lexicon.max_len)
        if n and not any(blocked[i : i + n]):
            cand = tuple(low[i : i + n])
            cues.append(Cue(i, i + n, "PRE" if cand in lexicon.pre_cues else "POST"))
            i += n
        else:
            i += 1
    return sorted(cues, key=lambda c: (c.start, c.end))


def _term_marks(low: Sequence[str], lexicon: CueLexicon) -> list[bool]:
    marks = [False] * len(low)
    for i in range(len(low)):
        n = _longest(low, i, [lexicon.termination_terms], lexicon.max_len)
        if n:
            marks[i : i + n] = [True] * n
    return marks


def scopes(tokens: Sequence[str], lexicon: CueLexicon, scope_cfg: ScopeConfig | None = None) -> list[tuple[int, int]]:
    """Half-open token ranges negated by each non-pseudo cue."""
    cfg = scope_cfg or ScopeConfig()
    low = [t.lower() for t in tokens]
    terms = _term_marks(low, lexicon) if cfg.use_termination else [False] * len(low)
    out = []
    for cue in find_cues(tokens, lexicon):
        if cue.kind == "PRE":
            end = cue.end
            while end < min(len(low), cue.end + cfg.window) and not terms[end]:
                end += 1
            out.append((cue.end, end))
        elif cue.kind == "POST":
            start = cue.start
            while start > max(0, cue.start - cfg.window) and not terms[start - 1]:
                start -= 1
            out.append((start, cue.start))
    return out


def negex_predict(
    sentence,
    entity_spans: Iterable[tuple[int, int]],
    lexicon: CueLexicon | None = None,
    scope_cfg: ScopeConfig | None = None,
) -> list[bool]:
    """One flag per entity span: True when the span intersects a cue scope.

    ``sentence`` is a token list or any object with ``tokens``; spans are
    half-open ``(start, end)`` token offsets.
    """
    tokens = getattr(sentence, "tokens", sentence)
    lexicon = lexicon if lexicon is not None else default_lexicon()
    ranges = [r for r in scopes(tokens, lexicon, scope_cfg) if r[0] < r[1]]
    flags = []
    for span in entity_spans:
        s, e = span[0], span[1]
        flags.append(any(s < hi and lo < e for lo, hi in ranges))
    return flags


def negex_tags(sentence, lexicon: CueLexicon | None = None, scope_cfg: ScopeConfig | None = None, spans=None) -> list[str]:
    """Negation BIO tags over PROBLEM spans (gold ones unless ``spans`` given)."""
    from .evaluation import tags_to_spans

    if spans is None:
        spans = [sp for sp in tags_to_spans(sentence.entity_tags) if sp.label == "PROBLEM"]
    tags = ["O"] * len(sentence.tokens)
    for sp, neg in zip(spans, negex_predict(sentence, [(sp[0], sp[1]) for sp in spans], lexicon, scope_cfg)):
        if neg:
            tags[sp[0]] = "B-NEG"
            for k in range(sp[0] + 1, sp[1]):
                tags[k] = "I-NEG"
    return tags


_DEFAULT: CueLexicon | None = None


def default_lexicon() -> CueLexicon:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_lexicon()
    return _DEFAULT
