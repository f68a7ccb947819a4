"""Surface-level structural features of a query string.

Eleven deterministic metrics, in fixed order:

  0  char_count            all characters, whitespace included
  1  word_count            whitespace-separated words
  2  sentence_count        runs terminated by . ! or ? (min 1 if any word)
  3  mean_word_length      characters per word
  4  type_token_ratio      distinct lowercased words / words
  5  flesch_reading_ease   206.835 - 1.015*(words/sentences) - 84.6*(syllables/words)
  6  flesch_kincaid_grade  0.39*(words/sentences) + 11.8*(syllables/words) - 15.59
  7  digit_ratio           digit chars / all chars
  8  punctuation_ratio     punctuation chars / all chars
  9  bracket_depth         max nesting depth over () [] {} (parse-depth proxy)
  10 interrogative_count   occurrences of who/what/when/where/why/which/how/whom/whose

Empty input yields all zeros; every ratio guards its denominator.
"""

from __future__ import annotations

import re
import string

import numpy as np

STRUCTURAL_DIM = 11

_INTERROGATIVES = {"who", "what", "when", "where", "why", "which", "how", "whom", "whose"}
_SENTENCE_RE = re.compile(r"[.!?]+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")
_OPEN, _CLOSE = "([{", ")]}"


def _syllables(word: str) -> int:
    """Vowel-group heuristic; every word counts at least one syllable."""
    w = word.lower().strip(string.punctuation)
    if not w:
        return 1
    groups = len(_VOWEL_GROUP_RE.findall(w))
    if w.endswith("e") and groups > 1 and not w.endswith(("le", "ee")):
        groups -= 1
    return max(groups, 1)


def _bracket_depth(text: str) -> int:
    depth = best = 0
    for ch in text:
        if ch in _OPEN:
            depth += 1
            best = max(best, depth)
        elif ch in _CLOSE:
            depth = max(depth - 1, 0)
    return best


def extract_structural_features(query: str) -> np.ndarray:
    chars = len(query)
    words = query.split()
    n_words = len(words)
    if chars == 0 or n_words == 0:
        vec = np.zeros(STRUCTURAL_DIM)
        vec[0] = chars
        vec[9] = _bracket_depth(query)
        return vec

    sentences = max(len([s for s in _SENTENCE_RE.split(query) if s.strip()]), 1)
    syllables = sum(_syllables(w) for w in words)
    lowered = [w.lower().strip(string.punctuation) for w in words]
    distinct = len({w for w in lowered if w})
    digits = sum(c.isdigit() for c in query)
    punct = sum(c in string.punctuation for c in query)
    wps = n_words / sentences
    spw = syllables / n_words

    return np.array([
        float(chars),
        float(n_words),
        float(sentences),
        sum(len(w) for w in words) / n_words,
        distinct / n_words,
        206.835 - 1.015 * wps - 84.6 * spw,
        0.39 * wps + 11.8 * spw - 15.59,
        digits / chars,
        punct / chars,
        float(_bracket_depth(query)),
        float(sum(w in _INTERROGATIVES for w in lowered)),
    ])


class FeatureStandardizer:
    """Per-feature (x - mean) / std fitted on a training batch.

    Constant features (std below tol) standardize to exactly zero.
    """

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)

    @classmethod
    def fit(cls, rows: np.ndarray, tol: float = 1e-12) -> "FeatureStandardizer":
        rows = np.asarray(rows, dtype=float)
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        return cls(mean, np.where(std < tol, 1.0, std))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureStandardizer":
        return cls(np.array(doc["mean"]), np.array(doc["std"]))
