"""Metaphor concept mapping extraction.

The pipeline turns tokenized tweets into "TARGET IS SOURCE" concept
mappings: a lexicon flags metaphorically-used open-class tokens, a
paraphraser picks the literal lemma the writer likely meant (synonyms and
direct hypernyms of the token, scored by context co-occurrence), and a
conceptualizer generalizes both lemmas up a weighted taxonomy, cutting the
climb at the knee of the level-wise sense-coverage curve.

File formats
------------
Lexicon: ``lemma<TAB>POS<TAB>trigger1,trigger2,...`` per line, where POS is
one of NOUN/VERB/ADJ/ADV. A token is metaphoric when its (lemma, POS) pair
is listed and at least one trigger lemma occurs in the same tweet; an empty
trigger field marks the lemma unconditionally metaphoric.

Taxonomy: a single-parent forest over sense nodes named ``name.p.nn``
(p in n/v/a/r). Declaration lines are ``node<TAB>parent-or--<TAB>weight``
(weight is the node's share as a sense of its lemmas, ``-`` marks a root);
optional synonym lines ``node<TAB>lemma1,lemma2,...`` list its member
lemmas (default: the node's own name). ``#`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import HankitError

NOUN, VERB, ADJ, ADV, OTHER = "NOUN", "VERB", "ADJ", "ADV", "OTHER"
OPEN_CLASS = (NOUN, VERB, ADJ, ADV)

_POS_LETTER = {"n": NOUN, "v": VERB, "a": ADJ, "r": ADV}


class McmError(HankitError):
    """Misuse of the mapping pipeline (empty input, closed-class paraphrase...)."""


class LexiconFormatError(HankitError):
    pass


class TaxonomyFormatError(HankitError):
    pass


class NoKneeError(HankitError):
    """The coverage curve has no knee (constant, or never above the chord)."""


class NoParaphraseError(HankitError):
    """The taxonomy offers no paraphrase candidate for a token."""


class UnknownWordError(HankitError):
    """A lemma has no senses in the taxonomy."""


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos: str
    index: int


@dataclass(frozen=True)
class MetaphorLabel:
    index: int
    metaphoric: bool


@dataclass(frozen=True)
class ConceptMapping:
    target: str
    source: str
    rendered: str
    origin: tuple


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    name: str
    pos: str
    parent: str | None
    weight: float
    members: tuple[str, ...]


class Lexicon:
    """Metaphor lexicon: (lemma, POS) pairs with context trigger lemmas."""

    def __init__(self, entries: dict[tuple[str, str], frozenset[str]]):
        self.entries = entries

    @classmethod
    def load(cls, path) -> "Lexicon":
        entries: dict[tuple[str, str], frozenset[str]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise LexiconFormatError(f"{path}: line {lineno}: expected 3 tab-separated fields")
                lemma, pos, trig_field = parts[0].strip(), parts[1].strip(), parts[2].strip()
                if not lemma:
                    raise LexiconFormatError(f"{path}: line {lineno}: empty lemma")
                if pos not in OPEN_CLASS:
                    raise LexiconFormatError(
                        f"{path}: line {lineno}: POS must be one of {'/'.join(OPEN_CLASS)}, got {pos!r}"
                    )
                key = (lemma.lower(), pos)
                if key in entries:
                    raise LexiconFormatError(f"{path}: line {lineno}: duplicate entry for {key}")
                triggers = frozenset(t.strip().lower() for t in trig_field.split(",") if t.strip())
                entries[key] = triggers
        return cls(entries)

    def triggers(self, lemma: str, pos: str) -> frozenset[str] | None:
        return self.entries.get((lemma, pos))

    def lemmas(self) -> set[str]:
        return {lemma for lemma, _ in self.entries}

    def pos_for(self, lemma: str) -> str | None:
        for pos in OPEN_CLASS:
            if (lemma, pos) in self.entries:
                return pos
        return None


class Taxonomy:
    """A single-parent sense forest with per-sense weights and member lemmas."""

    def __init__(self, nodes: dict[str, TaxonomyNode]):
        self.nodes = nodes
        self._by_lemma_pos: dict[tuple[str, str], list[str]] = {}
        self._by_lemma: dict[str, set[str]] = {}
        for node in nodes.values():
            for lemma in node.members:
                self._by_lemma_pos.setdefault((lemma, node.pos), []).append(node.id)
                self._by_lemma.setdefault(lemma, set()).add(node.id)
        for ids in self._by_lemma_pos.values():
            ids.sort()

    @classmethod
    def load(cls, path) -> "Taxonomy":
        declared: dict[str, tuple[str | None, float]] = {}
        members: dict[str, tuple[str, ...]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                where = f"{path}: line {lineno}"
                if len(parts) == 3:
                    node_id = _check_node_id(parts[0].strip(), where)
                    parent_field = parts[1].strip()
                    parent = None if parent_field == "-" else _check_node_id(parent_field, where)
                    try:
                        weight = float(parts[2])
                    except ValueError:
                        raise TaxonomyFormatError(f"{where}: weight {parts[2]!r} is not a number") from None
                    if weight < 0 or not np.isfinite(weight):
                        raise TaxonomyFormatError(f"{where}: weight must be finite and >= 0, got {weight}")
                    if node_id in declared:
                        raise TaxonomyFormatError(f"{where}: node {node_id!r} declared twice")
                    declared[node_id] = (parent, weight)
                elif len(parts) == 2:
                    node_id = _check_node_id(parts[0].strip(), where)
                    lemmas = tuple(m.strip().lower() for m in parts[1].split(",") if m.strip())
                    if not lemmas:
                        raise TaxonomyFormatError(f"{where}: empty member list")
                    if node_id in members:
                        raise TaxonomyFormatError(f"{where}: members of {node_id!r} listed twice")
                    members[node_id] = lemmas
                else:
                    raise TaxonomyFormatError(f"{where}: expected 2 or 3 tab-separated fields")
        for node_id in members:
            if node_id not in declared:
                raise TaxonomyFormatError(f"{path}: members listed for undeclared node {node_id!r}")
        nodes: dict[str, TaxonomyNode] = {}
        for node_id, (parent, weight) in declared.items():
            if parent is not None and parent not in declared:
                raise TaxonomyFormatError(f"{path}: node {node_id!r} points at unknown parent {parent!r}")
            name, letter, _ = node_id.rsplit(".", 2)
            nodes[node_id] = TaxonomyNode(
                id=node_id,
                name=name,
                pos=_POS_LETTER[letter],
                parent=parent,
                weight=weight,
                members=members.get(node_id, (name,)),
            )
        _check_acyclic(nodes, path)
        return cls(nodes)

    def senses(self, lemma: str, pos: str) -> list[TaxonomyNode]:
        return [self.nodes[i] for i in self._by_lemma_pos.get((lemma, pos), [])]

    def has_lemma(self, lemma: str) -> bool:
        return lemma in self._by_lemma

    def lemmas(self) -> set[str]:
        return set(self._by_lemma)

    def pos_for(self, lemma: str) -> str | None:
        """Majority POS of the lemma's senses by total weight, ties by POS order."""
        totals: dict[str, float] = {}
        for nid in self._by_lemma.get(lemma, ()):
            node = self.nodes[nid]
            totals[node.pos] = totals.get(node.pos, 0.0) + node.weight
        if not totals:
            return None
        return min(totals, key=lambda p: (-totals[p], OPEN_CLASS.index(p)))

    def share_synset(self, a: str, b: str) -> bool:
        return bool(self._by_lemma.get(a, set()) & self._by_lemma.get(b, set()))

    def chain(self, node: TaxonomyNode) -> list[TaxonomyNode]:
        """The node and its ancestors up to (and including) its root."""
        out = [node]
        while out[-1].parent is not None:
            out.append(self.nodes[out[-1].parent])
        return out


def _check_node_id(node_id: str, where: str) -> str:
    parts = node_id.rsplit(".", 2)
    if len(parts) != 3 or not parts[0] or not parts[2] or parts[1] not in _POS_LETTER:
        raise TaxonomyFormatError(f"{where}: node id {node_id!r} is not of the form name.p.nn")
    return node_id


def _check_acyclic(nodes: dict[str, TaxonomyNode], path) -> None:
    cleared: set[str] = set()
    for start in nodes:
        trail: list[str] = []
        seen: set[str] = set()
        cur: str | None = start
        while cur is not None and cur not in cleared:
            if cur in seen:
                raise TaxonomyFormatError(f"{path}: cycle through node {cur!r}")
            seen.add(cur)
            trail.append(cur)
            cur = nodes[cur].parent
        cleared.update(trail)


def lemmatize(word: str, known: Iterable[str]) -> str:
    """Lowercase, then strip common suffixes until a known lemma appears.

    Purely rule-based: tries the surface form, then a fixed suffix-rule list
    (plural, -ing/-ed with e-restoration and consonant undoubling, -er/-est),
    accepting the first candidate present in ``known``. Falls back to the
    lowercased surface form.
    """
    known = known if isinstance(known, (set, frozenset)) else set(known)
    w = word.lower()
    if w in known:
        return w
    candidates: list[str] = []
    if w.endswith("ies") and len(w) > 4:
        candidates.append(w[:-3] + "y")
    if w.endswith("es") and len(w) > 3:
        candidates.append(w[:-2])
    if w.endswith("s") and len(w) > 2:
        candidates.append(w[:-1])
    for suffix in ("ing", "ed", "er", "est"):
        if w.endswith(suffix) and len(w) > len(suffix) + 1:
            stem = w[: -len(suffix)]
            candidates.append(stem)
            candidates.append(stem + "e")
            if len(stem) > 2 and stem[-1] == stem[-2]:
                candidates.append(stem[:-1])
    for cand in candidates:
        if cand in known:
            return cand
    return w


def build_tokens(words: list[str], lexicon: Lexicon, taxonomy: Taxonomy) -> list[Token]:
    """Lemmatize and POS-tag a tokenized tweet.

    POS comes from the lexicon when it lists the lemma, else from the
    taxonomy's majority vote, else OTHER (closed class).
    """
    known = taxonomy.lemmas() | lexicon.lemmas()
    out = []
    for i, word in enumerate(words):
        lemma = lemmatize(word, known)
        pos = lexicon.pos_for(lemma) or taxonomy.pos_for(lemma) or OTHER
        out.append(Token(surface=word, lemma=lemma, pos=pos, index=i))
    return out


def identify_metaphors(tokens: list[Token], lexicon: Lexicon) -> list[MetaphorLabel]:
    """Flag open-class tokens listed in the lexicon whose trigger fires in-tweet."""
    if not tokens:
        raise McmError("cannot identify metaphors in an empty token list")
    lemmas = {t.lemma for t in tokens}
    labels = []
    for t in tokens:
        metaphoric = False
        if t.pos in OPEN_CLASS:
            triggers = lexicon.triggers(t.lemma, t.pos)
            if triggers is not None:
                metaphoric = not triggers or bool(triggers & lemmas)
        labels.append(MetaphorLabel(index=t.index, metaphoric=metaphoric))
    return labels


Scorer = Callable[[str, list[str], Taxonomy], float]


def _cooccurrence_score(candidate: str, context_lemmas: list[str], taxonomy: Taxonomy) -> float:
    """How many distinct context lemmas share a synset with the candidate."""
    return float(
        sum(1 for cl in context_lemmas if cl != candidate and taxonomy.share_synset(candidate, cl))
    )


def paraphrase(
    token: Token,
    context: list[Token],
    taxonomy: Taxonomy,
    scorer: Scorer | None = None,
) -> str:
    """Pick the literal lemma behind a metaphoric token.

    Candidates are member lemmas of the token's senses (synonyms) and of
    their direct hypernyms under the same POS, excluding the token's own
    lemma. The best-scoring candidate wins; ties break lexicographically.
    """
    if token.pos not in OPEN_CLASS:
        raise McmError(f"cannot paraphrase closed-class token {token.surface!r}")
    candidates: set[str] = set()
    for sense in taxonomy.senses(token.lemma, token.pos):
        candidates.update(m for m in sense.members if m != token.lemma)
        if sense.parent is not None:
            parent = taxonomy.nodes[sense.parent]
            if parent.pos == token.pos:
                candidates.update(m for m in parent.members if m != token.lemma)
    if not candidates:
        raise NoParaphraseError(f"no paraphrase candidates for {token.lemma!r}/{token.pos}")
    context_lemmas = sorted({t.lemma for t in context if t.index != token.index})
    score = scorer or _cooccurrence_score
    return min(sorted(candidates), key=lambda c: (-score(c, context_lemmas, taxonomy), c))


def knee_point(curve) -> int:
    """Index of the knee of a monotone curve (normalized-difference Kneedle, sensitivity 1).

    Both axes are normalized to [0, 1]; the knee is the point farthest above
    the straight chord between the endpoints. Decreasing curves are flipped,
    detected, and mapped back (n-1-k). Constant curves, and curves that never
    rise above the chord, have no knee.
    """
    y = np.asarray(list(curve), dtype=np.float64)
    if y.ndim != 1 or y.size < 3:
        raise ValueError(f"knee detection needs at least 3 points, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("curve contains non-finite values")
    if np.ptp(y) == 0:
        raise NoKneeError("constant curve has no knee")
    if y[-1] < y[0]:
        return int(y.size - 1 - knee_point(y[::-1]))
    x = np.arange(y.size) / (y.size - 1)
    yn = (y - y.min()) / (y.max() - y.min())
    diffs = yn - x
    if diffs.max() <= 1e-12:
        raise NoKneeError("curve never rises above the chord")
    return int(np.argmax(diffs))


def conceptualize(lemma: str, pos: str, taxonomy: Taxonomy) -> str:
    """Generalize a lemma to a concept label by climbing the taxonomy.

    Level L maps each sense to its L-th ancestor (clamped at its root); the
    best single node per level accumulates the senses' weight share. The
    climb stops at the knee of that coverage curve (falling back to the
    first fully-covering level, else the deepest) and the winning node's
    name, uppercased, is the concept. Levels below 1 are never returned, so
    the concept is a proper generalization unless the lemma is itself a root.
    """
    senses = taxonomy.senses(lemma, pos)
    if not senses:
        raise UnknownWordError(f"{lemma!r}/{pos} has no senses in the taxonomy")
    weights = [s.weight for s in senses]
    total = float(sum(weights))
    if total <= 0:
        weights = [1.0] * len(senses)
        total = float(len(senses))
    chains = [taxonomy.chain(s) for s in senses]
    max_depth = max(len(c) - 1 for c in chains)

    def best_at(level: int) -> tuple[str, float]:
        cov: dict[str, float] = {}
        for chain, w in zip(chains, weights):
            node = chain[min(level, len(chain) - 1)]
            cov[node.id] = cov.get(node.id, 0.0) + w
        nid = min(cov, key=lambda n: (-cov[n], taxonomy.nodes[n].name, n))
        return nid, cov[nid]

    if max_depth == 0:
        return taxonomy.nodes[best_at(0)[0]].name.upper()
    curve = [best_at(level)[1] / total for level in range(max_depth + 1)]
    level = 0
    if len(curve) >= 3:
        try:
            level = knee_point(curve)
        except NoKneeError:
            pass
    if level < 1:
        level = next(
            (L for L in range(1, len(curve)) if curve[L] >= 1.0 - 1e-9),
            len(curve) - 1,
        )
    return taxonomy.nodes[best_at(level)[0]].name.upper()


def build_mapping(target: str, source: str, origin: tuple = ("", -1, -1)) -> ConceptMapping:
    """Assemble a mapping; rendered as "TARGET IS SOURCE". X IS X is legitimate."""
    if not target or not source:
        raise McmError("concept labels must be non-empty")
    target, source = str(target).upper(), str(source).upper()
    return ConceptMapping(
        target=target,
        source=source,
        rendered=f"{target} IS {source}",
        origin=tuple(origin),
    )


def extract_user_mcms(
    tweets: list[list[str]],
    lexicon: Lexicon,
    taxonomy: Taxonomy,
    scorer: Scorer | None = None,
    user_id: str = "",
) -> list[ConceptMapping]:
    """Run the full pipeline over a user's tokenized tweets.

    Tokens that cannot be paraphrased or conceptualized are skipped; output
    order follows (tweet index, token index).
    """
    mappings: list[ConceptMapping] = []
    for tweet_index, words in enumerate(tweets):
        if not words:
            continue
        tokens = build_tokens(words, lexicon, taxonomy)
        for label in identify_metaphors(tokens, lexicon):
            if not label.metaphoric:
                continue
            token = tokens[label.index]
            try:
                para = paraphrase(token, tokens, taxonomy, scorer)
                target = conceptualize(para, token.pos, taxonomy)
                source = conceptualize(token.lemma, token.pos, taxonomy)
            except (NoParaphraseError, UnknownWordError):
                continue
            mappings.append(build_mapping(target, source, (user_id, tweet_index, token.index)))
    return mappings
