"""Text machinery for the preprocessing stage.

Covers tag hygiene, instruction-prompt assembly, parsing of the language
model's answer into adjective descriptors, and construction of the final
detector prompt list.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from .types import DEFAULT_FIXED_PROMPTS, PromptBundle, PromptTemplate, TagSet, dedup_keep_first

# Fallback subject used when no object tags were harvested.
EMPTY_TAGS_PLACEHOLDER = "objects"

_TAG_DELIMITERS = re.compile(r"[|,]")
_ITEM_DELIMITERS = re.compile(r"[,;\n]")
_LIST_MARKERS = re.compile(r"^(?:\d+[.)]\s*|[-*•]\s*)+")
_QUOTES = "'\"`‘’“”"


def sanitize_tags(raw: Sequence[str], blacklist: Iterable[str]) -> TagSet:
    """Normalize raw tagger output and drop defect-vocabulary tags.

    Entries are lowercased, split on '|' and ',', and trimmed. A tag is
    dropped when any of its whitespace-delimited tokens appears in the
    blacklist; tags are otherwise kept as whole phrases. Idempotent.
    """
    blocked = {entry.strip().lower() for entry in blacklist}
    kept: list[str] = []
    for entry in raw:
        for part in _TAG_DELIMITERS.split(entry.lower()):
            tag = part.strip()
            if not tag:
                continue
            if any(token in blocked for token in tag.split()):
                continue
            kept.append(tag)
    return TagSet(dedup_keep_first(kept))


def merge_tag_sets(sets: Sequence[TagSet]) -> TagSet:
    """Ordered union of tag sets, first occurrence wins."""
    merged: list[str] = []
    for tag_set in sets:
        merged.extend(tag_set.tags)
    return TagSet(dedup_keep_first(merged))


def build_iap_prompt(template: PromptTemplate, tags: TagSet) -> str:
    """Merge the object tags into the instruction template.

    An empty tag set substitutes the literal word "objects" so the
    instruction stays well-formed.
    """
    inline = ", ".join(tags.tags) if tags.tags else EMPTY_TAGS_PLACEHOLDER
    return template.text.replace("{tags}", inline)


def _clean_item(item: str) -> str:
    item = item.strip()
    item = _LIST_MARKERS.sub("", item)
    return item.strip().strip(_QUOTES).strip().lower()


def _is_descriptor_token(token: str) -> bool:
    return bool(token) and all(ch.isalpha() or ch == "-" for ch in token) and token != "-"


def parse_llm_output(text: str, max_adjectives: int) -> list[str]:
    """Extract anomaly descriptors from a raw language-model completion.

    Splits on commas, semicolons and newlines, strips list markers and
    quotes, lowercases, and keeps only items of one or two tokens made of
    letters and hyphens. Deliberately strict: anything that looks like
    chatter rather than a descriptor is discarded. Unparseable text
    yields an empty list.
    """
    if max_adjectives < 1:
        raise ValueError(f"max_adjectives must be >= 1, got {max_adjectives}")
    descriptors: list[str] = []
    for raw_item in _ITEM_DELIMITERS.split(text):
        item = _clean_item(raw_item)
        tokens = item.split()
        if not 1 <= len(tokens) <= 2:
            continue
        if not all(_is_descriptor_token(token) for token in tokens):
            continue
        descriptors.append(" ".join(tokens))
    return list(dedup_keep_first(descriptors))[:max_adjectives]


def assemble_final_prompt(
    adjectives: Sequence[str],
    fixed: Sequence[str] = DEFAULT_FIXED_PROMPTS,
    objects: TagSet = TagSet(),
) -> PromptBundle:
    """Combine adjectives, fixed prompts and object tags into the final prompt list.

    Redundancy across the three sources is removed by first-occurrence
    deduplication; the order adjectives -> fixed -> objects is fixed for
    determinism.
    """
    return PromptBundle.build(adjectives=adjectives, fixed=fixed, objects=objects)
