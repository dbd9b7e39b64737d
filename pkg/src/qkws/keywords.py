"""Keyword set management: lexicon, pronunciations, prefix trie."""

import itertools
import json
import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

# Multi-word keywords expand as the cross product of per-word pronunciation
# alternatives; runaway products are truncated at this many variants.
MAX_PRONUNCIATIONS = 16

Pronunciation = tuple[str, ...]


class LexiconError(ValueError):
    """Malformed lexicon text."""


class OutOfVocabularyError(ValueError):
    """A keyword word has no lexicon entry and no explicit phones."""


class KeywordSetError(ValueError):
    """Malformed keyword set document."""


def load_lexicon(text: str) -> dict[str, list[Pronunciation]]:
    """Parse ``word ph1 ph2 ...`` lines; repeated words accumulate variants."""
    lexicon: dict[str, list[Pronunciation]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise LexiconError(f"line {lineno}: expected 'word phones...', got {raw!r}")
        word, phones = parts[0], tuple(parts[1:])
        variants = lexicon.setdefault(word, [])
        if phones not in variants:
            variants.append(phones)
    return lexicon


@dataclass(frozen=True)
class Keyword:
    id: int
    text: str
    pronunciations: tuple[Pronunciation, ...]

    def __post_init__(self):
        if not self.pronunciations:
            raise ValueError(f"keyword {self.text!r} has no pronunciations")
        if any(not p for p in self.pronunciations):
            raise ValueError(f"keyword {self.text!r} has an empty pronunciation")


def resolve(
    text: str,
    lexicon: dict[str, list[Pronunciation]],
    keyword_id: int = 0,
    name: str | None = None,
) -> Keyword:
    """Build a keyword by concatenating per-word lexicon pronunciations.

    Multi-word keywords take the cross product of the words' alternatives,
    capped at MAX_PRONUNCIATIONS.
    """
    words = text.split()
    if not words:
        raise KeywordSetError("empty keyword text")
    per_word = []
    for word in words:
        if word not in lexicon:
            raise OutOfVocabularyError(f"word {word!r} not in lexicon")
        per_word.append(lexicon[word])
    combos = []
    for parts in itertools.product(*per_word):
        if len(combos) == MAX_PRONUNCIATIONS:
            logger.warning(
                "keyword %r has more than %d pronunciation combinations; truncating",
                text,
                MAX_PRONUNCIATIONS,
            )
            break
        combos.append(tuple(itertools.chain.from_iterable(parts)))
    return Keyword(keyword_id, name or text, tuple(combos))


def load_keyword_set(
    text: str, lexicon: dict[str, list[Pronunciation]] | None = None
) -> list[Keyword]:
    """Parse the keyword set JSON document.

    Each entry carries a ``name`` and either explicit ``phones`` or a
    ``text`` to look up in the lexicon (defaulting to the name itself).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KeywordSetError(f"invalid keyword set JSON: {exc}") from exc
    entries = doc.get("keywords") if isinstance(doc, dict) else None
    if not isinstance(entries, list) or not entries:
        raise KeywordSetError('keyword set must contain a non-empty "keywords" list')
    keywords = []
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry:
            raise KeywordSetError(f'keyword entry {idx} must be an object with "name"')
        name = entry["name"]
        if "phones" in entry:
            phones = tuple(str(p) for p in entry["phones"])
            keywords.append(Keyword(idx, name, (phones,)))
        else:
            if lexicon is None:
                raise KeywordSetError(
                    f"keyword {name!r} needs a lexicon (no explicit phones)"
                )
            keywords.append(resolve(entry.get("text", name), lexicon, idx, name))
    return keywords


@dataclass
class TrieNode:
    phone: int
    node_id: int
    children: dict[int, "TrieNode"] = field(default_factory=dict)
    keyword_ids: list[int] = field(default_factory=list)

    @property
    def is_terminal(self) -> bool:
        return bool(self.keyword_ids)


class KeywordTrie:
    """Prefix trie over keyword pronunciations, phones as node labels.

    Shared prefixes share nodes; terminal nodes carry the ids of every
    keyword whose pronunciation ends there (identical pronunciations of
    distinct keywords share one terminal).
    """

    def __init__(self, root: TrieNode, nodes: list[TrieNode], max_phone: int):
        self.root = root
        self.nodes = nodes  # indexed by node_id, root first
        self.max_phone = max_phone

    @property
    def num_nodes(self) -> int:
        """Non-root node count: the number of distinct pronunciation prefixes."""
        return len(self.nodes) - 1

    def lookup(self, phones) -> TrieNode | None:
        node = self.root
        for p in phones:
            node = node.children.get(p)
            if node is None:
                return None
        return node


def build_trie(keywords: list[Keyword], phone_index: dict[str, int]) -> KeywordTrie:
    """Deterministic prefix trie; phones mapped through ``phone_index``.

    Raises if a pronunciation uses a phone the model does not know or the
    blank index.
    """
    if not keywords:
        raise ValueError("cannot build a trie from an empty keyword list")
    root = TrieNode(phone=-1, node_id=0)
    nodes = [root]
    max_phone = 0
    for kw in keywords:
        for pron in kw.pronunciations:
            node = root
            for phone in pron:
                idx = phone_index.get(phone)
                if idx is None:
                    raise ValueError(
                        f"keyword {kw.text!r} uses unknown phone {phone!r}"
                    )
                if idx < 1:
                    raise ValueError(
                        f"keyword {kw.text!r}: phone {phone!r} maps to the blank index"
                    )
                child = node.children.get(idx)
                if child is None:
                    child = TrieNode(phone=idx, node_id=len(nodes))
                    nodes.append(child)
                    node.children[idx] = child
                node = child
                max_phone = max(max_phone, idx)
            if kw.id not in node.keyword_ids:
                node.keyword_ids.append(kw.id)
    return KeywordTrie(root, nodes, max_phone)
