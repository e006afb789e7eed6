"""Content-addressed record/replay cache for backend responses.

A replay run never touches the network: a cache miss raises ReplayMiss.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from refbench.errors import ReplayMiss


def replay_key(profile_name: str, operation: str, payload) -> str:
    blob = json.dumps([profile_name, operation, payload], ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ReplayStore:
    def __init__(self, cache_dir):
        self.root = Path(cache_dir).expanduser()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def store(self, key: str, response: str, meta: dict | None = None) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"key": key, "response": response, **(meta or {})}
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)

    def lookup(self, key: str) -> str:
        path = self._path(key)
        if not path.exists():
            raise ReplayMiss(key)
        with path.open(encoding="utf-8") as fh:
            return json.load(fh)["response"]

    def __contains__(self, key: str) -> bool:
        return self._path(key).exists()


class ReplayBackend:
    """Serves recorded responses; with `inner` set, records what `inner` answers.

    Keys hash (source profile name, operation, request payload), so a replay
    profile must name the profile the answers were recorded from.
    """

    def __init__(self, store: ReplayStore, name: str, inner=None):
        self.store = store
        self.name = name
        self.inner = inner

    def _call(self, operation, payload, live):
        key = replay_key(self.name, operation, payload)
        if self.inner is None:
            return self.store.lookup(key)
        response = live()
        self.store.store(key, response, {"profile": self.name, "operation": operation})
        return response

    def complete(self, prompt: str, gen=None) -> str:
        return self._call("complete", prompt, lambda: self.inner.complete(prompt))

    def embed(self, texts: list[str], instruction: str = "") -> list[np.ndarray]:
        def live():
            return json.dumps([list(map(float, v)) for v in self.inner.embed(texts, instruction)])

        raw = self._call("embed", {"texts": list(texts), "instruction": instruction}, live)
        return [np.asarray(v, dtype=float) for v in json.loads(raw)]

    def parse_citations(self, strings: list[str]) -> str:
        if not strings:
            raise ValueError("parse_citations needs at least one reference string")
        return self._call("processCitationList", list(strings), lambda: self.inner.parse_citations(strings))

    def process_fulltext(self, pdf_bytes: bytes) -> str:
        digest = hashlib.sha256(pdf_bytes).hexdigest()
        return self._call("processFulltextDocument", digest, lambda: self.inner.process_fulltext(pdf_bytes))
