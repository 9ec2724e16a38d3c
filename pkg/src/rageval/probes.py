"""Probe bundles and text ablations for name/topic sensitivity checks.

A bundle pairs one query with five candidates in a fixed design:

    C1   correct author, correct topic
    C2a  wrong author (impostor A), same topic
    C2b  wrong author (impostor B), same topic
    C3   correct author, different topic
    C4   wrong author, different topic

Ablations rewrite author strings (or layout, or normalization form)
deterministically so the resulting margin shifts isolate a single
signal. Every transform returns a fresh bundle; inputs are never
mutated.
"""

from __future__ import annotations

import hashlib
import random
import re
import unicodedata
from dataclasses import dataclass, replace

CANDIDATE_KEYS = ("C1", "C2a", "C2b", "C3", "C4")
LANGUAGES = ("EN", "FR")

ABLATION_KINDS = (
    "base",
    "hard_name_mask",
    "gibberish_name",
    "edit_distance_near_miss",
    "remove_label",
    "strip_diacritics",
    "initials_form",
    "name_order_inversion",
    "case_punct_perturb",
    "author_position_shift",
    "unicode_normalization_stress",
)

# Preset edit distances for the near-miss impostors.
NEAR_MISS_DISTANCES = {"C2a": 1, "C2b": 2, "C4": 3}

AUTHOR_LABELS = {"EN": "Author:", "FR": "Auteur :"}
MASK_PREFIXES = {"EN": "AUTHOR", "FR": "AUTEUR"}


class TransformError(ValueError):
    """An ablation could not locate or rewrite the field it targets."""


@dataclass
class Candidate:
    text: str
    author: str
    topic: str


@dataclass
class ProbeBundle:
    query_text: str
    candidates: dict[str, Candidate]
    language: str = "EN"

    def __post_init__(self) -> None:
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}, got {self.language!r}")
        missing = [k for k in CANDIDATE_KEYS if k not in self.candidates]
        if missing:
            raise ValueError(f"bundle is missing candidates: {missing}")

    @property
    def true_author(self) -> str:
        return self.candidates["C1"].author

    def copy(self) -> "ProbeBundle":
        return ProbeBundle(
            query_text=self.query_text,
            candidates={k: replace(c) for k, c in self.candidates.items()},
            language=self.language,
        )


def render_query(author: str, topic: str, language: str) -> str:
    if language == "FR":
        return f"Quels travaux de {author} sur {topic} ?"
    return f"Which works by {author} on {topic}?"


def render_candidate(author: str, topic: str, language: str) -> str:
    # Base layout keeps the author segment last; the position-shift
    # ablation moves it to the front.
    if language == "FR":
        return f"Article de recherche : '{topic}'. Auteur : {author}."
    return f"Research paper: '{topic}'. Author: {author}."


def build_bundle(
    author: str,
    topic: str,
    impostor_a: str,
    impostor_b: str,
    impostor_c: str,
    alt_topic: str,
    language: str = "EN",
) -> ProbeBundle:
    """Render the five-candidate design from authors and topics.

    C1/C2a/C2b share the exact same topic string so that erasing the
    author signal leaves their texts byte-identical.
    """
    if len({author, impostor_a, impostor_b, impostor_c}) != 4:
        raise ValueError("author and the three impostors must all differ")
    if topic == alt_topic:
        raise ValueError("topic and alt_topic must differ")
    return ProbeBundle(
        query_text=render_query(author, topic, language),
        candidates={
            "C1": Candidate(render_candidate(author, topic, language), author, topic),
            "C2a": Candidate(render_candidate(impostor_a, topic, language), impostor_a, topic),
            "C2b": Candidate(render_candidate(impostor_b, topic, language), impostor_b, topic),
            "C3": Candidate(render_candidate(author, alt_topic, language), author, alt_topic),
            "C4": Candidate(render_candidate(impostor_c, alt_topic, language), impostor_c, alt_topic),
        },
        language=language,
    )


def _replace_author(candidate: Candidate, key: str, new_author: str) -> Candidate:
    if candidate.author not in candidate.text:
        raise TransformError(
            f"author {candidate.author!r} not found in candidate {key}"
        )
    return Candidate(
        text=candidate.text.replace(candidate.author, new_author),
        author=new_author,
        topic=candidate.topic,
    )


def _replace_query_author(bundle: ProbeBundle, new_author: str) -> str:
    if bundle.true_author not in bundle.query_text:
        raise TransformError(
            f"author {bundle.true_author!r} not found in query text"
        )
    return bundle.query_text.replace(bundle.true_author, new_author)


def levenshtein(a: str, b: str) -> int:
    """Plain dynamic-programming edit distance (insert/delete/substitute)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ch_a != ch_b),
                )
            )
        previous = current
    return previous[-1]


def _ablate_hard_name_mask(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    mask = f"{MASK_PREFIXES[bundle.language]}_{seed % 1000:03d}"
    out = bundle.copy()
    out.query_text = _replace_query_author(bundle, mask)
    out.candidates = {
        key: _replace_author(cand, key, mask) for key, cand in bundle.candidates.items()
    }
    return out


_GIBBERISH_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


def _gibberish_token(seed: int, author: str, offset: int = 0) -> str:
    digest = hashlib.sha256(f"{seed}:{author}".encode("utf-8")).digest()
    chars = [
        _GIBBERISH_ALPHABET[digest[(offset + i) % len(digest)] % len(_GIBBERISH_ALPHABET)]
        for i in range(6)
    ]
    return "ID-" + "".join(chars)


def _ablate_gibberish_name(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    authors = sorted({c.author for c in bundle.candidates.values()})
    tokens: dict[str, str] = {}
    used: set[str] = set()
    for author in authors:
        offset = 0
        token = _gibberish_token(seed, author)
        while token in used:  # vanishingly rare; keeps tokens distinct
            offset += 1
            token = _gibberish_token(seed, author, offset)
        tokens[author] = token
        used.add(token)
    out = bundle.copy()
    out.query_text = _replace_query_author(bundle, tokens[bundle.true_author])
    out.candidates = {
        key: _replace_author(cand, key, tokens[cand.author])
        for key, cand in bundle.candidates.items()
    }
    return out


_SUBSTITUTION_CHARS = "bcdfghklmnprstvz"


def mutate_at_distance(name: str, distance: int, rng: random.Random) -> str:
    """Substitute `distance` letter positions (never the first character).

    Each substitution keeps the original letter's case. The result is
    re-checked with the DP distance and re-drawn if some alignment
    shortcut made it cheaper than requested.
    """
    positions = [i for i, ch in enumerate(name) if ch.isalpha() and i > 0]
    if len(positions) < distance:
        raise TransformError(
            f"name {name!r} is too short to mutate at distance {distance}"
        )
    for _ in range(64):
        chosen = sorted(rng.sample(positions, distance))
        chars = list(name)
        for pos in chosen:
            original = chars[pos]
            pool = [
                c.upper() if original.isupper() else c
                for c in _SUBSTITUTION_CHARS
                if (c.upper() if original.isupper() else c) != original
            ]
            chars[pos] = rng.choice(pool)
        mutated = "".join(chars)
        if levenshtein(name, mutated) == distance:
            return mutated
    raise TransformError(f"could not mutate {name!r} to exact distance {distance}")


def _ablate_edit_distance_near_miss(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    rng = random.Random(seed)
    out = bundle.copy()
    true = bundle.true_author
    for key in ("C2a", "C2b", "C4"):
        mutated = mutate_at_distance(true, NEAR_MISS_DISTANCES[key], rng)
        out.candidates[key] = _replace_author(bundle.candidates[key], key, mutated)
    return out


def _strip_label(text: str, language: str) -> str:
    labels = [AUTHOR_LABELS[language]]
    if language == "FR":
        labels.append("Auteur:")  # tolerate missing narrow space
    for label in labels:
        text = text.replace(label + " ", "").replace(label, "")
    return re.sub(r"  +", " ", text).strip()


def _ablate_remove_label(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    out = bundle.copy()
    out.query_text = _strip_label(bundle.query_text, bundle.language)
    for key, cand in bundle.candidates.items():
        out.candidates[key] = Candidate(
            text=_strip_label(cand.text, bundle.language),
            author=cand.author,
            topic=cand.topic,
        )
    return out


def strip_diacritics(text: str) -> str:
    """Decompose, drop combining marks, recompose."""
    decomposed = unicodedata.normalize("NFD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", stripped)


def _ablate_strip_diacritics(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    out = bundle.copy()
    out.query_text = strip_diacritics(bundle.query_text)
    for key, cand in bundle.candidates.items():
        out.candidates[key] = Candidate(
            text=strip_diacritics(cand.text),
            author=strip_diacritics(cand.author),
            topic=strip_diacritics(cand.topic),
        )
    return out


def initials_form(name: str) -> str:
    """"Alice Dupont" -> "A. Dupont"; single-token names are unchanged."""
    tokens = name.split(" ")
    if len(tokens) < 2:
        return name
    return " ".join([t[0] + "." for t in tokens[:-1] if t] + [tokens[-1]])


def _ablate_initials_form(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    out = bundle.copy()
    out.query_text = _replace_query_author(bundle, initials_form(bundle.true_author))
    out.candidates = {
        key: _replace_author(cand, key, initials_form(cand.author))
        for key, cand in bundle.candidates.items()
    }
    return out


def invert_name_order(name: str) -> str:
    """"Alice Dupont" -> "Dupont, Alice"."""
    tokens = name.split(" ")
    if len(tokens) < 2:
        return name
    return tokens[-1] + ", " + " ".join(tokens[:-1])


def _ablate_name_order_inversion(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    # Candidates only; the query keeps the natural order.
    out = bundle.copy()
    out.candidates = {
        key: _replace_author(cand, key, invert_name_order(cand.author))
        for key, cand in bundle.candidates.items()
    }
    return out


def _perturb_case_punct(name: str, mode: int) -> str:
    if mode == 0:
        name = name.upper()
    elif mode == 1:
        name = name.lower()
    else:
        name = name.title()
    return name.replace("’", "'").replace("‘", "'").replace("-", " ")


def _ablate_case_punct_perturb(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    mode = seed % 3  # cycle upper / lower / title across seeds
    out = bundle.copy()
    out.query_text = _replace_query_author(
        bundle, _perturb_case_punct(bundle.true_author, mode)
    )
    out.candidates = {
        key: _replace_author(cand, key, _perturb_case_punct(cand.author, mode))
        for key, cand in bundle.candidates.items()
    }
    return out


def _shift_author_first(text: str, language: str, key: str) -> str:
    label = AUTHOR_LABELS[language]
    idx = text.find(label)
    if idx < 0:
        raise TransformError(f"author label {label!r} not found in candidate {key}")
    author_segment = text[idx:].strip()
    rest = text[:idx].strip()
    return f"{author_segment} {rest}".strip()


def _ablate_author_position_shift(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    out = bundle.copy()
    for key, cand in bundle.candidates.items():
        out.candidates[key] = Candidate(
            text=_shift_author_first(cand.text, bundle.language, key),
            author=cand.author,
            topic=cand.topic,
        )
    return out


_NARROW_NBSP = " "


def _insert_narrow_spaces(text: str) -> str:
    return re.sub(r"([:;!])", _NARROW_NBSP + r"\1", text)


def _ablate_unicode_normalization_stress(bundle: ProbeBundle, seed: int) -> ProbeBundle:
    out = bundle.copy()
    out.query_text = unicodedata.normalize("NFC", bundle.query_text)
    for key, cand in bundle.candidates.items():
        stressed = _insert_narrow_spaces(unicodedata.normalize("NFD", cand.text))
        out.candidates[key] = Candidate(text=stressed, author=cand.author, topic=cand.topic)
    return out


_ABLATIONS = {
    "base": lambda bundle, seed: bundle.copy(),
    "hard_name_mask": _ablate_hard_name_mask,
    "gibberish_name": _ablate_gibberish_name,
    "edit_distance_near_miss": _ablate_edit_distance_near_miss,
    "remove_label": _ablate_remove_label,
    "strip_diacritics": _ablate_strip_diacritics,
    "initials_form": _ablate_initials_form,
    "name_order_inversion": _ablate_name_order_inversion,
    "case_punct_perturb": _ablate_case_punct_perturb,
    "author_position_shift": _ablate_author_position_shift,
    "unicode_normalization_stress": _ablate_unicode_normalization_stress,
}


def apply_ablation(bundle: ProbeBundle, kind: str, seed: int = 0) -> ProbeBundle:
    """Apply one named transform; deterministic given (bundle, seed)."""
    if kind not in _ABLATIONS:
        raise ValueError(f"unknown ablation {kind!r}; choose from {ABLATION_KINDS}")
    return _ABLATIONS[kind](bundle, seed)


# --- conversational noise -------------------------------------------------

NOISE_LEVELS = (0, 2, 4)

_NOISE_BANKS = {
    "EN": {
        "greeting": (
            "Hi!", "Hello!", "Hey there!", "Hi there!", "Good morning!",
            "Hey!", "Hello hello!", "Hiya!",
        ),
        "filler": (
            "Quick question:", "Just wondering:", "I was curious:",
            "Random question:", "Quick one:", "Just checking:",
            "One thing I wanted to ask:", "Small question:",
        ),
        "apology": (
            "Sorry for the kinda random question --",
            "Sorry to bother you with this --",
            "Apologies if this is obvious --",
            "Sorry, this might be a silly one --",
            "Excuse the out-of-the-blue question --",
            "Sorry for the interruption --",
            "Apologies in advance --",
            "Sorry if this was already covered --",
        ),
        "digression": (
            "I'm on the train right now...",
            "I was just chatting with a friend about this...",
            "This came up over coffee earlier...",
            "I've been thinking about this all day...",
            "My colleague and I were debating this...",
            "Saw something about this online...",
            "This popped into my head last night...",
            "We argued about this at lunch...",
        ),
        "hedge": (
            "Or is that a myth?", "Or am I off base here?", "No rush at all.",
            "Just curious, really.", "Hope that makes sense!",
            "Maybe I'm overthinking it.", "Not urgent at all.",
            "Or maybe I misunderstood?",
        ),
    },
    "FR": {
        "greeting": (
            "Bonjour !", "Salut !", "Coucou !", "Bonsoir !", "Hello !",
            "Salut salut !", "Bonjour bonjour !", "Hey !",
        ),
        "filler": (
            "Petite question :", "Je me demandais :", "Question rapide :",
            "Juste une question :", "Une petite chose :", "Je voulais savoir :",
            "Question un peu au hasard :", "Dites-moi :",
        ),
        "apology": (
            "Désolé pour la question un peu aléatoire --",
            "Désolée de vous déranger --",
            "Pardon si c'est évident --",
            "Désolé, c'est peut-être bête --",
            "Excusez la question impromptue --",
            "Pardon pour l'interruption --",
            "Toutes mes excuses d'avance --",
            "Désolé si on l'a déjà vu --",
        ),
        "digression": (
            "Je suis dans le train là...",
            "J'en parlais justement avec un ami...",
            "Ça m'est revenu pendant le café...",
            "J'y pense depuis ce matin...",
            "On en débattait avec un collègue...",
            "J'ai vu passer un truc là-dessus...",
            "Ça m'a traversé l'esprit hier soir...",
            "On s'est disputés là-dessus au déjeuner...",
        ),
        "hedge": (
            "Ou c'est un mythe ?", "Ou je me trompe ?", "Rien d'urgent.",
            "Simple curiosité.", "J'espère que c'est clair !",
            "Je réfléchis peut-être trop.", "Pas pressé du tout.",
            "Ou j'ai mal compris ?",
        ),
    },
}


def inject_noise(query_text: str, level: int, language: str = "EN", seed: int = 0) -> str:
    """Wrap a query in conversational padding.

    Level 0 is the identity; level 2 adds a greeting and one filler
    clause; level 4 adds a greeting, an apology, a digression, the
    filler, and a trailing hedge. Picks are seeded from fixed per-
    language banks, and token count strictly increases with level.
    """
    if level not in NOISE_LEVELS:
        raise ValueError(f"level must be one of {NOISE_LEVELS}, got {level}")
    if language not in LANGUAGES:
        raise ValueError(f"language must be one of {LANGUAGES}, got {language!r}")
    if level == 0:
        return query_text
    # string seeding hashes via sha512, stable across processes
    rng = random.Random(f"{seed}:{level}:{language}")
    bank = _NOISE_BANKS[language]
    greeting = rng.choice(bank["greeting"])
    filler = rng.choice(bank["filler"])
    if level == 2:
        return f"{greeting} {filler} {query_text}"
    apology = rng.choice(bank["apology"])
    digression = rng.choice(bank["digression"])
    hedge = rng.choice(bank["hedge"])
    return f"{greeting} {apology} {digression} {filler} {query_text} {hedge}"
