"""Dataset model, JSONL file formats, preprocessing, the cue-removal
transform, stratified splits, padding, and a synthetic generator.

A dataset file is JSON Lines: a header line carrying the format marker and
embedding width, then one line per user with texts and base64-encoded
little-endian float32 embedding rows (upcast to float64 in memory). The
lighter "users" format is the same without embeddings; it feeds the mapping
extractor and the embedding exporter.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyUserError, HankitError

DATASET_FORMAT = "hankit-dataset"
DATASET_VERSION = 1
MIN_TOKENS = 4

CUE_SUBSTRINGS = ("depress", "diagnos", "anxiety", "bipolar", "disorder")


class DatasetFormatError(HankitError):
    """A dataset or users file failed validation; messages carry line numbers."""


class SplitError(HankitError):
    """The dataset is too small or too lopsided to split 60/20/20."""


@dataclass
class UserRecord:
    user_id: str
    label: int
    tweets: list[str]
    mcms: list[str]
    tweet_emb: np.ndarray
    mcm_emb: np.ndarray


@dataclass
class Dataset:
    users: list[UserRecord]
    d: int
    tag: str = ""


@dataclass
class PaddedBatch:
    tweet: np.ndarray
    tweet_mask: np.ndarray
    mcm: np.ndarray
    mcm_mask: np.ndarray
    labels: np.ndarray


_URL_RE = re.compile(r"(?:https?|ftp)://\S+|\bwww\.\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")

# Contraction-aware: "I'm" -> [I, 'm], "don't" -> [do, n't]; other
# punctuation becomes single-character tokens.
_TOKEN_RE = re.compile(
    r"[a-z0-9_]+(?=n't\b)"
    r"|n't\b"
    r"|[a-z0-9_]+(?='(?:m|re|s|ve|ll|d)\b)"
    r"|'(?:m|re|s|ve|ll|d)\b"
    r"|[a-z0-9_]+"
    r"|[^\sa-z0-9_]",
    re.IGNORECASE,
)

# Codepoint ranges removed as emoji, incl. variation selectors and ZWJ.
_EMOJI_RANGES = (
    (0x1F000, 0x1F0FF),
    (0x1F300, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x1F1E6, 0x1F1FF),
    (0xFE00, 0xFE0F),
    (0x200D, 0x200D),
    (0x2B00, 0x2BFF),
)


def _strip_emoji(text: str) -> str:
    return "".join(
        ch for ch in text
        if not any(lo <= ord(ch) <= hi for lo, hi in _EMOJI_RANGES)
    )


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.replace("’", "'"))


def preprocess_tweet(text: str) -> list[str] | None:
    """Strip URLs, mentions, and emoji, then tokenize.

    Returns the token list, or None when fewer than MIN_TOKENS tokens remain
    (the tweet is rejected, not an error).
    """
    t = _URL_RE.sub(" ", text)
    t = _MENTION_RE.sub(" ", t)
    t = _strip_emoji(t)
    toks = tokenize(t)
    return toks if len(toks) >= MIN_TOKENS else None


_DIAGNOSIS_RE = re.compile(
    r"\bi\s*(?:'m|am|was|'ve\s+been)\s+diagnosed\s+depression\b",
    re.IGNORECASE,
)


def imdl_transform_text(text: str) -> list[str] | None:
    """Remove explicit diagnosis phrases and cue-bearing tokens from one tweet.

    Deletes whole "I'm/I am/I was/I've been diagnosed depression" phrases,
    then drops any token whose lowercase form contains a cue substring, and
    re-applies the minimum-token rule. Returns surviving tokens or None.
    """
    t = _DIAGNOSIS_RE.sub(" ", text.replace("’", "'"))
    toks = [tok for tok in tokenize(t) if not any(cue in tok.lower() for cue in CUE_SUBSTRINGS)]
    return toks if len(toks) >= MIN_TOKENS else None


def imdl_transform(dataset: Dataset) -> Dataset:
    """Apply the cue-removal transform to every tweet; idempotent.

    Tweets falling under MIN_TOKENS are dropped together with their embedding
    rows; users left with zero tweets are dropped. Mappings are untouched.
    """
    users: list[UserRecord] = []
    for u in dataset.users:
        kept_texts: list[str] = []
        kept_rows: list[int] = []
        for i, tweet in enumerate(u.tweets):
            toks = imdl_transform_text(tweet)
            if toks is None:
                continue
            kept_texts.append(" ".join(toks))
            kept_rows.append(i)
        if not kept_texts:
            continue
        users.append(
            UserRecord(
                user_id=u.user_id,
                label=u.label,
                tweets=kept_texts,
                mcms=list(u.mcms),
                tweet_emb=u.tweet_emb[kept_rows].copy(),
                mcm_emb=u.mcm_emb.copy(),
            )
        )
    return Dataset(users=users, d=dataset.d, tag=dataset.tag)


def split(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified, seeded 60/20/20 split.

    Per class, n_val = n_test = floor(0.2 * n + 0.5) and train takes the
    remainder, so 10 users split 6/2/2.
    """
    if len(dataset.users) < 5:
        raise SplitError(f"need at least 5 users to split, got {len(dataset.users)}")
    groups: dict[int, list[UserRecord]] = {0: [], 1: []}
    for u in dataset.users:
        groups[u.label].append(u)
    for label in (0, 1):
        if groups[label] and len(groups[label]) < 5:
            raise SplitError(f"class {label} has only {len(groups[label])} users; need at least 5 per class")
    rng = np.random.default_rng(seed)
    train: list[UserRecord] = []
    val: list[UserRecord] = []
    test: list[UserRecord] = []
    for label in (0, 1):
        members = groups[label]
        if not members:
            continue
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n = len(members)
        n_val = int(np.floor(0.2 * n + 0.5))
        n_train = n - 2 * n_val
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train : n_train + n_val])
        test.extend(shuffled[n_train + n_val :])
    return (
        Dataset(train, dataset.d, "train"),
        Dataset(val, dataset.d, "val"),
        Dataset(test, dataset.d, "test"),
    )


def pad_truncate(users: list[UserRecord], cap: int = 200, d: int | None = None) -> PaddedBatch:
    """Pad or truncate each user's rows to ``cap``, with boolean masks.

    Padding rows are zero. Zero real tweets is an error; zero mappings is a
    legitimate state handled downstream by the placeholder row.
    """
    if not users:
        raise ValueError("cannot pad an empty user list")
    if cap < 1:
        raise ValueError(f"cap must be positive, got {cap}")
    if d is None:
        d = users[0].tweet_emb.shape[1]
    b = len(users)
    batch = PaddedBatch(
        tweet=np.zeros((b, cap, d)),
        tweet_mask=np.zeros((b, cap), dtype=bool),
        mcm=np.zeros((b, cap, d)),
        mcm_mask=np.zeros((b, cap), dtype=bool),
        labels=np.zeros(b, dtype=np.int64),
    )
    for i, u in enumerate(users):
        n = u.tweet_emb.shape[0]
        if n == 0:
            raise EmptyUserError(f"user {u.user_id!r} has zero tweets")
        if u.tweet_emb.shape[1] != d or (u.mcm_emb.size and u.mcm_emb.shape[1] != d):
            raise DatasetFormatError(f"user {u.user_id!r} embedding width does not match d={d}")
        k = min(n, cap)
        batch.tweet[i, :k] = u.tweet_emb[:k]
        batch.tweet_mask[i, :k] = True
        s = min(u.mcm_emb.shape[0], cap)
        if s:
            batch.mcm[i, :s] = u.mcm_emb[:s]
            batch.mcm_mask[i, :s] = True
        batch.labels[i] = u.label
    return batch


def _encode_row(row: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(row, dtype="<f4").tobytes()).decode("ascii")


def _decode_row(text: str, d: int, where: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"{where}: bad base64 embedding row: {exc}") from exc
    if len(raw) != 4 * d:
        raise DatasetFormatError(f"{where}: embedding row holds {len(raw)} bytes, expected {4 * d}")
    arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise DatasetFormatError(f"{where}: embedding row contains non-finite values")
    return arr


def _emb_matrix(rows: list, d: int, where: str) -> np.ndarray:
    if not rows:
        return np.zeros((0, d))
    return np.stack([_decode_row(r, d, where) for r in rows])


def save_dataset(dataset: Dataset, path) -> None:
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "d": dataset.d}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for u in dataset.users:
            rec = {
                "user_id": u.user_id,
                "label": int(u.label),
                "tweets": list(u.tweets),
                "mcms": list(u.mcms),
                "tweet_emb": [_encode_row(r) for r in u.tweet_emb],
                "mcm_emb": [_encode_row(r) for r in u.mcm_emb],
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _parse_json_line(line: str, where: str) -> dict:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{where}: invalid JSON at column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise DatasetFormatError(f"{where}: expected a JSON object")
    return doc


def _check_user_fields(doc: dict, where: str) -> None:
    for key, kind in (("user_id", str), ("label", int), ("tweets", list), ("mcms", list)):
        if key not in doc:
            raise DatasetFormatError(f"{where}: missing field {key!r}")
        if not isinstance(doc[key], kind) or isinstance(doc[key], bool):
            raise DatasetFormatError(f"{where}: field {key!r} has the wrong type")
    if doc["label"] not in (0, 1):
        raise DatasetFormatError(f"{where}: label must be 0 or 1, got {doc['label']!r}")
    for key in ("tweets", "mcms"):
        if not all(isinstance(t, str) for t in doc[key]):
            raise DatasetFormatError(f"{where}: field {key!r} must hold strings")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DatasetFormatError(f"{path}: line 1: missing header")
        header = _parse_json_line(header_line, f"{path}: line 1")
        if header.get("format") != DATASET_FORMAT:
            raise DatasetFormatError(f"{path}: line 1: format marker is not {DATASET_FORMAT!r}")
        if header.get("version") != DATASET_VERSION:
            raise DatasetFormatError(f"{path}: line 1: unsupported version {header.get('version')!r}")
        d = header.get("d")
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise DatasetFormatError(f"{path}: line 1: d must be a positive integer")
        users: list[UserRecord] = []
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            doc = _parse_json_line(line, where)
            _check_user_fields(doc, where)
            for key in ("tweet_emb", "mcm_emb"):
                if key not in doc or not isinstance(doc[key], list):
                    raise DatasetFormatError(f"{where}: missing embedding field {key!r}")
            if len(doc["tweet_emb"]) != len(doc["tweets"]):
                raise DatasetFormatError(
                    f"{where}: {len(doc['tweets'])} tweets but {len(doc['tweet_emb'])} embedding rows"
                )
            if len(doc["mcm_emb"]) != len(doc["mcms"]):
                raise DatasetFormatError(
                    f"{where}: {len(doc['mcms'])} mcms but {len(doc['mcm_emb'])} embedding rows"
                )
            if doc["user_id"] in seen:
                raise DatasetFormatError(f"{where}: duplicate user_id {doc['user_id']!r}")
            seen.add(doc["user_id"])
            users.append(
                UserRecord(
                    user_id=doc["user_id"],
                    label=int(doc["label"]),
                    tweets=list(doc["tweets"]),
                    mcms=list(doc["mcms"]),
                    tweet_emb=_emb_matrix(doc["tweet_emb"], d, where),
                    mcm_emb=_emb_matrix(doc["mcm_emb"], d, where),
                )
            )
    return Dataset(users=users, d=d)


def save_users_text(users: list[dict], path) -> None:
    """Write the embedding-free users format: one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            rec = {
                "user_id": u["user_id"],
                "label": int(u["label"]),
                "tweets": list(u["tweets"]),
                "mcms": list(u.get("mcms", [])),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_users_text(path) -> list[dict]:
    users: list[dict] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            doc = _parse_json_line(line, where)
            _check_user_fields(doc, where)
            if doc["user_id"] in seen:
                raise DatasetFormatError(f"{where}: duplicate user_id {doc['user_id']!r}")
            seen.add(doc["user_id"])
            users.append(
                {
                    "user_id": doc["user_id"],
                    "label": int(doc["label"]),
                    "tweets": list(doc["tweets"]),
                    "mcms": list(doc["mcms"]),
                }
            )
    return users


def _f32(a: np.ndarray) -> np.ndarray:
    # Round-trips through the on-disk float32 encoding bit-exactly.
    return np.asarray(a, dtype="<f4").astype(np.float64)


def synth_generate(
    n_users: int,
    d: int,
    separation: float,
    mcm_signal: bool = True,
    seed: int = 0,
) -> Dataset:
    """Two balanced Gaussian classes with means +/- separation/2 along a unit vector.

    Tweet counts draw from 4..16 and mapping counts from 0..8, so the
    zero-mapping placeholder path is exercised. With ``mcm_signal`` off the
    mapping rows are centered at zero for both classes and carry no label
    information.
    """
    if n_users < 4:
        raise ValueError(f"need at least 4 users, got {n_users}")
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    if separation < 0:
        raise ValueError(f"separation must be non-negative, got {separation}")
    rng = np.random.default_rng(seed)
    direction = np.ones(d) / np.sqrt(d)
    users: list[UserRecord] = []
    for k in range(n_users):
        label = k % 2
        mean = (1.0 if label == 1 else -1.0) * (separation / 2.0) * direction
        n_tweets = int(rng.integers(4, 17))
        n_mcms = int(rng.integers(0, 9))
        tweet_emb = _f32(rng.normal(size=(n_tweets, d)) + mean)
        mcm_emb = _f32(rng.normal(size=(n_mcms, d)) + (mean if mcm_signal else 0.0))
        user_id = f"u{k:05d}"
        tweets = [f"synthetic tweet {i} of user {user_id}" for i in range(n_tweets)]
        mcms = [
            f"CONCEPT{int(rng.integers(0, 40)):02d} IS CONCEPT{int(rng.integers(0, 40)):02d}"
            for _ in range(n_mcms)
        ]
        users.append(UserRecord(user_id, label, tweets, mcms, tweet_emb, mcm_emb))
    return Dataset(users=users, d=d)
