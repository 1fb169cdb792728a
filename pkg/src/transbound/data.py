"""Triple/rule file parsing, vocabularies, filtered-candidate index and rule grounding."""
from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple


class ParseError(ValueError):
    """Malformed line in a triple or rule file."""


class VocabularyError(KeyError):
    """Unknown entity or relation name under a frozen vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown name"


class UnsupportedRuleError(ValueError):
    """Rule kind that can be parsed but has no regularizer formula."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocabulary:
    """Bijective name <-> id maps, ids assigned in first-appearance order."""

    def __init__(self, entities: Iterable[str] = (), relations: Iterable[str] = ()):
        self.entity_to_id: dict[str, int] = {}
        self.relation_to_id: dict[str, int] = {}
        self.id_to_entity: list[str] = []
        self.id_to_relation: list[str] = []
        self.frozen = False
        for e in entities:
            self.add_entity(e)
        for r in relations:
            self.add_relation(r)

    @property
    def n_entities(self) -> int:
        return len(self.id_to_entity)

    @property
    def n_relations(self) -> int:
        return len(self.id_to_relation)

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def add_entity(self, name: str) -> int:
        return self._add(name, self.entity_to_id, self.id_to_entity, "entity")

    def add_relation(self, name: str) -> int:
        return self._add(name, self.relation_to_id, self.id_to_relation, "relation")

    def _add(self, name, to_id, from_id, what):
        idx = to_id.get(name)
        if idx is not None:
            return idx
        if self.frozen:
            raise VocabularyError(f"unknown {what} {name!r}")
        to_id[name] = len(from_id)
        from_id.append(name)
        return to_id[name]

    def entity(self, name: str) -> int:
        try:
            return self.entity_to_id[name]
        except KeyError:
            raise VocabularyError(f"unknown entity {name!r}") from None

    def relation(self, name: str) -> int:
        try:
            return self.relation_to_id[name]
        except KeyError:
            raise VocabularyError(f"unknown relation {name!r}") from None

    def encode(self, head: str, relation: str, tail: str) -> Triple:
        return Triple(self.add_entity(head), self.add_relation(relation), self.add_entity(tail))

    def decode(self, triple: Triple) -> tuple[str, str, str]:
        h, r, t = triple
        return self.id_to_entity[h], self.id_to_relation[r], self.id_to_entity[t]

    def to_dict(self) -> dict:
        return {"entities": list(self.id_to_entity), "relations": list(self.id_to_relation)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["entities"], d["relations"])


def _content_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line


def load_triples(path, vocab: Vocabulary | None = None) -> tuple[list[Triple], Vocabulary]:
    """Read a tab-separated ``head relation tail`` file.

    Unseen names extend ``vocab`` unless it is frozen, in which case they
    raise :class:`VocabularyError`. Triples come back in file order.
    """
    vocab = Vocabulary() if vocab is None else vocab
    triples = []
    for lineno, line in _content_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
        triples.append(vocab.encode(*fields))
    return triples, vocab


def save_triples(path, triples: Iterable[Triple], vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write("\t".join(vocab.decode(t)) + "\n")


@dataclass(frozen=True)
class TripleStore:
    """Train/valid/test splits plus the set of every known positive."""

    train: tuple[Triple, ...]
    valid: tuple[Triple, ...] = ()
    test: tuple[Triple, ...] = ()
    n_entities: int = 0
    n_relations: int = 0
    known: frozenset = field(init=False, repr=False)
    _tails: dict = field(init=False, repr=False, compare=False)
    _heads: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(Triple(*t) for t in self.train))
        object.__setattr__(self, "valid", tuple(Triple(*t) for t in self.valid))
        object.__setattr__(self, "test", tuple(Triple(*t) for t in self.test))
        known = frozenset(self.train) | frozenset(self.valid) | frozenset(self.test)
        object.__setattr__(self, "known", known)
        n_e = max(self.n_entities, 1 + max((max(t.head, t.tail) for t in known), default=-1))
        n_r = max(self.n_relations, 1 + max((t.relation for t in known), default=-1))
        object.__setattr__(self, "n_entities", n_e)
        object.__setattr__(self, "n_relations", n_r)
        tails, heads = defaultdict(set), defaultdict(set)
        for h, r, t in known:
            tails[h, r].add(t)
            heads[r, t].add(h)
        object.__setattr__(self, "_tails", dict(tails))
        object.__setattr__(self, "_heads", dict(heads))

    @classmethod
    def from_files(cls, train, valid=None, test=None, vocab: Vocabulary | None = None):
        """Load splits; the vocabulary grows on ``train`` only and is frozen afterwards."""
        train_triples, vocab = load_triples(train, vocab)
        vocab.freeze()
        valid_triples = load_triples(valid, vocab)[0] if valid else []
        test_triples = load_triples(test, vocab)[0] if test else []
        store = cls(train_triples, valid_triples, test_triples, vocab.n_entities, vocab.n_relations)
        return store, vocab

    def split(self, name: str) -> tuple[Triple, ...]:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def known_tails(self, head: int, relation: int) -> set:
        return self._tails.get((head, relation), set())

    def known_heads(self, relation: int, tail: int) -> set:
        return self._heads.get((relation, tail), set())


def filtered_candidates(store: TripleStore, query: Triple, side: str) -> list[int]:
    """Entities whose substitution on ``side`` is the query itself or not a known positive."""
    h, r, t = query
    if side == "tail":
        known, gold = store.known_tails(h, r), t
    elif side == "head":
        known, gold = store.known_heads(r, t), h
    else:
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
    return [e for e in range(store.n_entities) if e == gold or e not in known]


class RuleKind(str, enum.Enum):
    SYMMETRIC = "symmetric"
    EQUIVALENCE = "equivalence"
    IMPLICATION = "implication"
    INVERSE = "inverse"
    TRANSITIVE = "transitive"
    COMPOSITION = "composition"

    @property
    def arity(self) -> int:
        return {"symmetric": 1, "transitive": 1, "composition": 3}.get(self.value, 2)


@dataclass(frozen=True)
class PatternRule:
    kind: RuleKind
    relations: tuple[int, ...]
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        object.__setattr__(self, "relations", tuple(self.relations))
        if not 0.0 <= self.confidence <= 1.0:
            raise ParseError(f"confidence {self.confidence} outside [0, 1]")
        if len(self.relations) != self.kind.arity:
            raise ParseError(
                f"{self.kind.value} rule takes {self.kind.arity} relation(s), got {len(self.relations)}"
            )


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[PatternRule, ...]
    dropped: int = 0
    dropped_by_kind: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)


def load_rules(path, vocab: Vocabulary, min_confidence: float = 0.8) -> RuleSet:
    """Parse ``kind rel1 [rel2 [rel3]] confidence`` lines, keeping confidence >= min_confidence."""
    if not 0.0 <= min_confidence <= 1.0:
        raise ValueError(f"min_confidence {min_confidence} outside [0, 1]")
    kept, dropped = [], Counter()
    for lineno, line in _content_lines(path):
        fields = line.split("\t")
        if len(fields) < 3:
            raise ParseError(f"{path}:{lineno}: too few fields")
        try:
            kind = RuleKind(fields[0].strip().lower())
        except ValueError:
            raise ParseError(f"{path}:{lineno}: unknown rule kind {fields[0]!r}") from None
        try:
            confidence = float(fields[-1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad confidence {fields[-1]!r}") from None
        relations = tuple(vocab.relation(name) for name in fields[1:-1])
        try:
            rule = PatternRule(kind, relations, confidence)
        except ParseError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        if confidence >= min_confidence:
            kept.append(rule)
        else:
            dropped[kind.value] += 1
    return RuleSet(tuple(kept), sum(dropped.values()), dict(dropped))


@dataclass(frozen=True)
class GroundedPattern:
    rule: PatternRule
    # (head, tail) pairs for symmetric rules; empty for relation-level rules.
    instances: tuple[tuple[int, int], ...] = ()


def ground_rules(rules: Iterable[PatternRule], train: Iterable[Triple]) -> list[GroundedPattern]:
    """Instantiate rules over training triples.

    Symmetric rules yield one ``(h, t)`` instance per training triple of
    their relation. Equivalence, implication and inverse rules act on
    relation rows or sampled triples directly and get no instances.
    """
    train = list(train)
    grounded = []
    for rule in rules:
        if rule.kind in (RuleKind.TRANSITIVE, RuleKind.COMPOSITION):
            raise UnsupportedRuleError(
                f"{rule.kind.value} rules have no regularizer formula and cannot be grounded"
            )
        if rule.kind is RuleKind.SYMMETRIC:
            (r,) = rule.relations
            grounded.append(GroundedPattern(rule, tuple((h, t) for h, rr, t in train if rr == r)))
        else:
            grounded.append(GroundedPattern(rule))
    return grounded
