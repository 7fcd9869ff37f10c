"""Rule-constrained prompt synthesis from grouped keyword lexicons."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from math import comb
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import CephforgeIOError, ConfigError, InfeasibleLexiconError, ValidationError
from .mira import slot_seed

PROMPT_STREAM = 1
_BATCH = 8192


def _key(phrase: str) -> str:
    return " ".join(phrase.split()).casefold()


@dataclass(frozen=True)
class PromptLexicon:
    image_style: tuple[str, ...]
    character: tuple[str, ...]
    attribute: tuple[str, ...] = ()
    rules: tuple[tuple[str, str], ...] = ()
    attribute_pick: tuple[int, int] = (0, 4)

    def __post_init__(self):
        for name in ("image_style", "character", "attribute"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "rules", tuple(tuple(r) for r in self.rules))
        object.__setattr__(self, "attribute_pick", tuple(self.attribute_pick))
        if not self.image_style or not self.character:
            raise ConfigError("image_style and character groups must be non-empty")
        seen: dict[str, str] = {}
        for group in ("image_style", "character", "attribute"):
            for p in getattr(self, group):
                k = _key(p)
                if k in seen:
                    raise ConfigError(f"phrase {p!r} appears in {seen[k]} and {group}")
                seen[k] = group
        for a, b in self.rules:
            for p in (a, b):
                if _key(p) not in seen:
                    raise ConfigError(f"rule phrase {p!r} is not in any group")
        lo, hi = self.attribute_pick
        if not 0 <= lo <= hi <= len(self.attribute):
            raise ConfigError(f"attribute_pick [{lo}, {hi}] must satisfy 0 <= min <= max <= {len(self.attribute)}")

    @property
    def phrases(self) -> tuple[str, ...]:
        return self.image_style + self.character + self.attribute

    @cached_property
    def _groups(self) -> dict[str, str]:
        return {_key(p): g for g in ("image_style", "character", "attribute") for p in getattr(self, g)}

    def group_of(self, phrase: str) -> str | None:
        return self._groups.get(_key(phrase))

    def forbidden_matrix(self) -> np.ndarray:
        """Symmetric boolean matrix over ``phrases`` marking forbidden pairs."""
        index = {_key(p): i for i, p in enumerate(self.phrases)}
        n = len(index)
        f = np.zeros((n, n), dtype=bool)
        for a, b in self.rules:
            i, j = index[_key(a)], index[_key(b)]
            f[i, j] = f[j, i] = True
        return f

    def to_json(self) -> dict:
        return {
            "image_style": list(self.image_style),
            "character": list(self.character),
            "attribute": list(self.attribute),
            "rules": [list(r) for r in self.rules],
            "attribute_pick": list(self.attribute_pick),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PromptLexicon":
        try:
            return cls(
                image_style=doc["image_style"],
                character=doc["character"],
                attribute=doc.get("attribute", []),
                rules=[tuple(r) for r in doc.get("rules", [])],
                attribute_pick=tuple(doc.get("attribute_pick", (0, 4))),
            )
        except KeyError as exc:
            raise ConfigError(f"lexicon missing field {exc.args[0]!r}") from None


def load_lexicon(path: str | Path | None = None) -> PromptLexicon:
    if path is None:
        text = resources.files("cephforge").joinpath("data/default_lexicon.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise CephforgeIOError(f"cannot read lexicon {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path or 'default lexicon'}: line {exc.lineno}: {exc.msg}") from None
    return PromptLexicon.from_json(doc)


@dataclass(frozen=True)
class Prompt:
    style: str
    character: str
    attributes: tuple[str, ...] = ()

    @property
    def text(self) -> str:
        return ", ".join((self.style, self.character) + tuple(self.attributes))

    @property
    def parts(self) -> tuple[str, str, tuple[str, ...]]:
        return self.style, self.character, tuple(self.attributes)

    def __str__(self):
        return self.text


def parse_prompt(text: str, lex: PromptLexicon) -> Prompt:
    """Split a comma-joined prompt and assign each phrase to its lexicon group."""
    phrases = [p.strip() for p in text.strip().rstrip(",").split(",") if p.strip()]
    by_group: dict[str | None, list[str]] = {"image_style": [], "character": [], "attribute": [], None: []}
    for p in phrases:
        by_group[lex.group_of(p)].append(p)
    if by_group[None]:
        raise ValidationError(f"unknown phrases: {by_group[None]}")
    if len(by_group["image_style"]) != 1 or len(by_group["character"]) != 1:
        raise ValidationError(
            f"prompt needs exactly one image style and one character, got "
            f"{by_group['image_style']} and {by_group['character']}"
        )
    return Prompt(by_group["image_style"][0], by_group["character"][0], tuple(by_group["attribute"]))


def validate_prompt(p: Prompt, lex: PromptLexicon) -> list[str]:
    problems = []
    if lex.group_of(p.style) != "image_style":
        problems.append(f"{p.style!r} is not an image style")
    if lex.group_of(p.character) != "character":
        problems.append(f"{p.character!r} is not a character")
    for a in p.attributes:
        if lex.group_of(a) != "attribute":
            problems.append(f"{a!r} is not an attribute")
    keys = [_key(x) for x in (p.style, p.character, *p.attributes)]
    if len(set(keys)) != len(keys):
        problems.append("repeated phrase")
    lo, hi = lex.attribute_pick
    if not lo <= len(p.attributes) <= hi:
        problems.append(f"{len(p.attributes)} attributes outside pick range [{lo}, {hi}]")
    present = set(keys)
    for a, b in lex.rules:
        if _key(a) in present and _key(b) in present:
            problems.append(f"forbidden pair: {a!r} with {b!r}")
    return problems


def _independent_sets(nodes: Sequence[int], conflicts: dict[int, set[int]]) -> Iterator[int]:
    """Sizes of all conflict-free subsets of ``nodes`` (including the empty one)."""

    def rec(i: int, chosen: set[int], size: int):
        if i == len(nodes):
            yield size
            return
        yield from rec(i + 1, chosen, size)
        v = nodes[i]
        if not (conflicts.get(v, set()) & chosen):
            chosen.add(v)
            yield from rec(i + 1, chosen, size + 1)
            chosen.remove(v)

    yield from rec(0, set(), 0)


def enumerate_valid(lex: PromptLexicon) -> int:
    """Exact number of distinct rule-satisfying prompts."""
    f = lex.forbidden_matrix()
    ns, nc, na = len(lex.image_style), len(lex.character), len(lex.attribute)
    attr_idx = range(ns + nc, ns + nc + na)
    lo, hi = lex.attribute_pick
    cache: dict[frozenset[int], int] = {}
    total = 0
    for s in range(ns):
        for c in range(ns, ns + nc):
            if f[s, c]:
                continue
            allowed = frozenset(a for a in attr_idx if not (f[a, s] or f[a, c]))
            if allowed not in cache:
                conflicts = {a: {b for b in allowed if f[a, b]} for a in allowed}
                tied = sorted(a for a in allowed if conflicts[a])
                free = len(allowed) - len(tied)
                n = 0
                for size in _independent_sets(tied, conflicts):
                    n += sum(comb(free, k - size) for k in range(max(lo, size), hi + 1))
                cache[allowed] = n
            total += cache[allowed]
    return total


def iter_valid(lex: PromptLexicon) -> Iterator[Prompt]:
    """Every valid prompt by brute force; intended for small lexicons."""
    lo, hi = lex.attribute_pick
    for s in lex.image_style:
        for c in lex.character:
            for k in range(lo, hi + 1):
                for attrs in itertools.combinations(lex.attribute, k):
                    p = Prompt(s, c, attrs)
                    if not validate_prompt(p, lex):
                        yield p


def _draw_batch(rng: np.random.Generator, lex: PromptLexicon, forbidden: np.ndarray, size: int) -> list[Prompt]:
    ns, nc, na = len(lex.image_style), len(lex.character), len(lex.attribute)
    lo, hi = lex.attribute_pick
    s = rng.integers(ns, size=size)
    c = rng.integers(nc, size=size)
    k = rng.integers(lo, hi + 1, size=size)
    member = np.zeros((size, ns + nc + na), dtype=bool)
    rows = np.arange(size)
    member[rows, s] = True
    member[rows, ns + c] = True
    if na:
        rank = rng.random((size, na)).argsort(axis=1).argsort(axis=1)
        member[:, ns + nc :] = rank < k[:, None]
    # a row is rejected if any forbidden pair is fully present
    bad = ((member.astype(np.int32) @ forbidden.astype(np.int32)) * member).any(axis=1)
    out = []
    for r in np.flatnonzero(~bad):
        attrs = tuple(lex.attribute[j] for j in np.flatnonzero(member[r, ns + nc :]))
        out.append(Prompt(lex.image_style[s[r]], lex.character[c[r]], attrs))
    return out


def generate_prompts(lex: PromptLexicon, count: int, seed: int, distinct: bool = False) -> list[Prompt]:
    """Sample ``count`` prompts: one style, one character, k attributes, reject rule violations.

    Draws come in fixed-size batches, batch ``b`` seeded from ``(seed, b)``, so
    a shorter request is always a prefix of a longer one.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    total = enumerate_valid(lex)
    if total == 0:
        raise InfeasibleLexiconError("no prompt satisfies the lexicon rules")
    if distinct and count > total:
        raise ConfigError(f"requested {count} distinct prompts but only {total} exist")
    forbidden = lex.forbidden_matrix()
    out: list[Prompt] = []
    seen: set[str] = set()
    batch = 0
    if distinct and 2 * count > total:
        pool = list(iter_valid(lex))
        rng = np.random.default_rng(slot_seed(seed, 0, PROMPT_STREAM))
        return [pool[i] for i in rng.permutation(len(pool))[:count]]
    while len(out) < count:
        rng = np.random.default_rng(slot_seed(seed, batch, PROMPT_STREAM))
        for p in _draw_batch(rng, lex, forbidden, _BATCH):
            if distinct:
                if p.text in seen:
                    continue
                seen.add(p.text)
            out.append(p)
            if len(out) == count:
                break
        batch += 1
    return out
