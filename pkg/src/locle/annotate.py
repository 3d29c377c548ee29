"""Node annotation: prompts, LLM client, noisy oracle, budget and cache."""
from __future__ import annotations

import ast
import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import httpx
import numpy as np

log = logging.getLogger(__name__)

API_KEY_ENV = "LOCLE_LLM_API_KEY"

DEFAULT_PREAMBLE = (
    "You are a model that is especially good at classifying a paper's category. "
    "Now I will first give you all the possible categories and their explanations. "
    "Please answer the following question: What is the category of the target paper?"
)
OUTPUT_INSTRUCTION = (
    "Output your answer together with a confidence score ranging from 0 to 100, "
    "in the form of a list of Python dicts like "
    '[{"answer": <answer_here>, "confidence": <confidence_here>}].\n'
    "You only need to output the one answer you think is the most likely."
)

SOURCES = ("llm", "oracle", "gnn_refined")


class AnnotationError(Exception):
    pass


class ParseError(AnnotationError):
    pass


class UnknownLabel(AnnotationError):
    pass


class TransportError(AnnotationError):
    pass


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Annotation:
    node_id: int
    label: int | None
    confidence: float
    source: str
    raw_response: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown annotation source {self.source!r}")
        if not 0.0 <= self.confidence <= 100.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 100]")

    @property
    def failed(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class PromptSpec:
    class_names: tuple[str, ...]
    class_explanations: tuple[str, ...] | None = None
    task_preamble: str = DEFAULT_PREAMBLE
    item_label: str = "Target Paper"
    max_text_tokens: int = 4096

    def __post_init__(self):
        names = tuple(self.class_names)
        object.__setattr__(self, "class_names", names)
        if not names or any(not s.strip() for s in names):
            raise ValueError("class names must be nonempty")
        if len({s.strip().lower() for s in names}) != len(names):
            raise ValueError("class names must be distinct")
        if self.class_explanations is not None:
            expl = tuple(self.class_explanations)
            if len(expl) != len(names):
                raise ValueError("need one explanation per class")
            object.__setattr__(self, "class_explanations", expl if any(expl) else None)


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def build_prompt(spec: PromptSpec, node_text: str) -> str:
    head = [spec.task_preamble, "All possible categories: [" + ", ".join(spec.class_names) + "]"]
    if spec.class_explanations:
        head.append("Category explanation:")
        head.extend(f"{n}: {e}" for n, e in zip(spec.class_names, spec.class_explanations))
    head.append(f"{spec.item_label}:")
    prefix = "\n".join(head) + "\n"
    suffix = "\n" + OUTPUT_INSTRUCTION
    room = 4 * spec.max_text_tokens - len(prefix) - len(suffix)
    text = node_text.strip()
    if len(text) > room:
        text = text[: max(room, 0)]
    return prefix + text + suffix


_LIST_RE = re.compile(r"\[[^\[\]]*\]", re.S)
_DICT_RE = re.compile(r"\{[^{}]*\}", re.S)
_PAIR_RE = re.compile(
    r"""["']?answer["']?\s*:\s*["']?(?P<answer>[^"',}]+?)["']?\s*,\s*"""
    r"""["']?confidence["']?\s*:\s*["']?(?P<conf>-?\d+(?:\.\d+)?)""",
    re.S | re.I,
)


def _literal_dicts(fragment: str):
    for loader in (json.loads, ast.literal_eval):
        try:
            obj = loader(fragment)
        except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
            continue
        if isinstance(obj, dict):
            return [obj]
        if isinstance(obj, (list, tuple)):
            return [o for o in obj if isinstance(o, dict)]
    return []


def _find_answer(text: str):
    for frag in _LIST_RE.findall(text) + _DICT_RE.findall(text):
        for obj in _literal_dicts(frag):
            keys = {str(k).lower(): v for k, v in obj.items()}
            if "answer" in keys and "confidence" in keys:
                return str(keys["answer"]), keys["confidence"]
    m = _PAIR_RE.search(text)
    if m:
        return m.group("answer"), m.group("conf")
    return None


def parse_annotation_response(text: str, class_names) -> tuple[int, float]:
    """Extract ``(label index, confidence)`` from an LLM reply.

    Raises :class:`ParseError` when no answer/confidence object is present and
    :class:`UnknownLabel` when the answer names no known class.
    """
    found = _find_answer(text or "")
    if found is None:
        raise ParseError(f"no answer object in response: {text[:80]!r}")
    answer, conf = found
    try:
        confidence = float(str(conf).strip().rstrip("%"))
    except ValueError as exc:
        raise ParseError(f"bad confidence {conf!r}") from exc
    if not math.isfinite(confidence):
        raise ParseError(f"bad confidence {conf!r}")
    confidence = min(max(confidence, 0.0), 100.0)
    wanted = answer.strip().strip("\"'").strip().lower()
    for i, name in enumerate(class_names):
        if name.strip().lower() == wanted:
            return i, confidence
    raise UnknownLabel(f"answer {answer!r} matches no class")


class BudgetLedger:
    """Query budget counted in annotated nodes; thread-safe."""

    def __init__(self, cap: int):
        self.cap = int(cap)
        self.used = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.cap - self.used

    def reserve(self, count: int) -> None:
        with self._lock:
            if count > self.cap - self.used:
                raise BudgetExhausted(
                    f"requested {count} queries with {self.cap - self.used} remaining"
                )
            self.used += count


class AnnotationCache:
    """Append-only JSONL cache keyed by (prompt hash, model, consistency count)."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str, int], dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        key = (rec["prompt_sha256"], rec.get("model", ""), int(rec.get("n_consistency", 1)))
                    except (ValueError, KeyError) as exc:
                        raise ValueError(f"{self.path}:{lineno}: bad cache record") from exc
                    self._entries[key] = rec

    def __len__(self):
        return len(self._entries)

    def get(self, prompt_sha: str, model: str, n_consistency: int) -> dict | None:
        with self._lock:
            return self._entries.get((prompt_sha, model, n_consistency))

    def put(self, ann: Annotation, prompt_sha: str, model: str, n_consistency: int) -> None:
        rec = {
            "node_id": ann.node_id,
            "label": ann.label,
            "confidence": ann.confidence,
            "source": ann.source,
            "prompt_sha256": prompt_sha,
            "ts": datetime.now(timezone.utc).isoformat(),
            "model": model,
            "n_consistency": n_consistency,
        }
        with self._lock:
            self._entries[(prompt_sha, model, n_consistency)] = rec
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class OracleAnnotator:
    """Ground-truth labels corrupted with probability ``noise``.

    A corrupted node gets a uniformly drawn wrong class and a confidence from
    uniform[50, 95]; a correct one reports 100. Draws depend only on
    ``(seed, node_id)``.
    """

    source = "oracle"

    def __init__(self, truth, num_classes: int, noise: float = 0.0, seed: int = 0):
        if not 0.0 <= noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {noise}")
        self.truth = np.asarray(truth, dtype=np.int64)
        self.k = int(num_classes)
        self.noise = float(noise)
        self.seed = int(seed)
        self.model_name = f"oracle(noise={self.noise:g},seed={self.seed})"
        self.calls = 0
        self._lock = threading.Lock()

    def cache_key(self, node_id: int) -> str:
        return sha256_hex(f"oracle-node:{node_id}")

    def query(self, node_id: int, draw: int = 0):
        with self._lock:
            self.calls += 1
        rng = np.random.default_rng([self.seed, int(node_id)])
        y = int(self.truth[node_id])
        if self.k > 1 and rng.random() < self.noise:
            wrong = int(rng.integers(self.k - 1))
            label = wrong if wrong < y else wrong + 1
            return label, float(rng.uniform(50.0, 95.0)), None
        return y, 100.0, None


class LLMAnnotator:
    """Chat-completions client over HTTP with retry and exponential backoff."""

    source = "llm"

    def __init__(
        self,
        prompt_spec: PromptSpec,
        texts,
        *,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        client: httpx.Client | None = None,
    ):
        self.spec = prompt_spec
        self.texts = texts
        self.model_name = model
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.temperature = temperature
        self.max_retries = int(max_retries)
        self.backoff_base = float(backoff_base)
        self.client = client or httpx.Client(timeout=timeout)
        self.calls = 0
        self._lock = threading.Lock()

    def prompt(self, node_id: int) -> str:
        text = self.texts[node_id]
        if not text:
            raise ValueError(f"node {node_id} has no text")
        return build_prompt(self.spec, text)

    def cache_key(self, node_id: int) -> str:
        return sha256_hex(self.prompt(node_id))

    def _post(self, prompt: str) -> str:
        body = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            with self._lock:
                self.calls += 1
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
        raise TransportError(f"gave up after {self.max_retries + 1} attempts: {last}")

    def query(self, node_id: int, draw: int = 0):
        raw = self._post(self.prompt(node_id))
        label, conf = parse_annotation_response(raw, self.spec.class_names)
        return label, conf, raw


def majority_vote(votes):
    """``votes`` is a list of ``(label, confidence)``. Returns the winner and
    the mean confidence of its votes."""
    counts = Counter(lab for lab, _ in votes)
    conf_sum = defaultdict(float)
    for lab, c in votes:
        conf_sum[lab] += c
    best = min(counts, key=lambda lab: (-counts[lab], -conf_sum[lab], lab))
    return best, conf_sum[best] / counts[best]


def _annotate_one(annotator, node_id: int, n_consistency: int) -> Annotation:
    votes = []
    raw = None
    for draw in range(n_consistency):
        try:
            label, conf, raw = annotator.query(node_id, draw)
        except (TransportError, ParseError, UnknownLabel) as exc:
            log.warning("annotation of node %d failed: %s", node_id, exc)
            continue
        votes.append((label, conf))
    if not votes:
        return Annotation(node_id, None, 0.0, annotator.source, raw)
    label, conf = majority_vote(votes)
    return Annotation(node_id, int(label), float(conf), annotator.source, raw)


def annotate_batch(
    annotator,
    nodes,
    ledger: BudgetLedger,
    *,
    n_consistency: int = 1,
    cache: AnnotationCache | None = None,
    max_in_flight: int = 1,
) -> list[Annotation]:
    """Annotate ``nodes``; one budget unit per node not served from cache.

    Budget is reserved for the whole batch before any request is issued.
    Failed nodes come back with ``label=None`` and confidence 0 and are not
    cached. Results are sorted by node id.
    """
    if n_consistency < 1:
        raise ValueError("n_consistency must be >= 1")
    nodes = sorted({int(v) for v in nodes})
    results: dict[int, Annotation] = {}
    pending = []
    keys = {}
    for v in nodes:
        key = annotator.cache_key(v)
        keys[v] = key
        hit = cache.get(key, annotator.model_name, n_consistency) if cache is not None else None
        if hit is not None and hit.get("label") is not None:
            results[v] = Annotation(v, int(hit["label"]), float(hit["confidence"]), hit["source"])
        else:
            pending.append(v)
    ledger.reserve(len(pending))
    if pending:
        if max_in_flight > 1:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                done = list(pool.map(lambda v: _annotate_one(annotator, v, n_consistency), pending))
        else:
            done = [_annotate_one(annotator, v, n_consistency) for v in pending]
        for ann in done:
            results[ann.node_id] = ann
            if cache is not None and not ann.failed:
                cache.put(ann, keys[ann.node_id], annotator.model_name, n_consistency)
    return [results[v] for v in nodes]


def post_filter(annotations, min_confidence: float = 0.0) -> list[Annotation]:
    return [a for a in annotations if not a.failed and a.confidence >= min_confidence]
