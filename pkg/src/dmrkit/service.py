"""HTTP annotation service backing the browser tool.

Serves the resolved ontology, dialogue turns, validation, and the
two-stage annotation workflow (graph drawing, then reference
resolution). Saved annotations must pass ontology validation and the
token-copy rule (every lexical value is a contiguous token subsequence
of the utterance); referent selections must satisfy the
same-incoming-edge candidate rule. Persistence is an append-only JSONL
journal with optimistic concurrency per (dialogue, turn, annotator).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .corpus import ROLE_CUSTOMER, Corpus, load_corpus
from .dialogue_graph import candidates as rule_candidates
from .dialogue_graph import effective_incoming_labels
from .graph import DmrGraph, read_graph, write_graph
from .ontology import Ontology, OPERATORS, KEYWORD_NEG, load_ontology
from .validation import validate

ENV_ONTOLOGY = "DMRKIT_ONTOLOGY"

_PUNCT = ".,!?;:\"'()"


@dataclass
class ServiceConfig:
    ontology_path: str
    store_path: str
    corpus_path: str | None = None
    cors_origins: list[str] = field(default_factory=list)
    host: str = "127.0.0.1"
    port: int = 8470

    def __post_init__(self):
        if not Path(self.ontology_path).exists():
            raise FileNotFoundError(self.ontology_path)
        if self.corpus_path and not Path(self.corpus_path).exists():
            raise FileNotFoundError(self.corpus_path)


def config_from_env(**overrides) -> ServiceConfig:
    ontology = overrides.pop("ontology_path", None) or os.environ.get(ENV_ONTOLOGY)
    if ontology is None:
        raise ValueError(f"no ontology path given and {ENV_ONTOLOGY} unset")
    return ServiceConfig(ontology_path=ontology, **overrides)


class AnnotationStore:
    """Append-only journal; the latest revision per key wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._latest: dict[tuple, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        record = json.loads(line)
                        self._latest[self._key(record)] = record

    @staticmethod
    def _key(record: dict) -> tuple:
        return (
            record["kind"],
            record["dialogue"],
            record["turn"],
            record["annotator"],
            record.get("node"),
        )

    def get(self, key: tuple) -> dict | None:
        return self._latest.get(key)

    def records_for(self, dialogue: str) -> list[dict]:
        return sorted(
            (r for r in self._latest.values() if r["dialogue"] == dialogue),
            key=lambda r: (r["turn"], r["kind"], r["annotator"], r.get("node") or ""),
        )

    def append(self, record: dict, expected_revision: int) -> dict:
        with self._lock:
            key = self._key(record)
            current = self._latest.get(key)
            current_rev = current["revision"] if current else 0
            if expected_revision != current_rev:
                raise RevisionConflict(current_rev)
            record = dict(record, revision=current_rev + 1, timestamp=time.time())
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._latest[key] = record
            return record


class RevisionConflict(Exception):
    def __init__(self, current_revision: int):
        self.current_revision = current_revision


def _tokens(text: str) -> list[str]:
    return [t.strip(_PUNCT).casefold() for t in text.split()]


def token_copy_violations(g: DmrGraph, utterance: str) -> list[dict]:
    """Lexical values must be contiguous token subsequences of the
    utterance (punctuation-stripped, case-insensitive)."""
    toks = _tokens(utterance)
    out = []
    for var, node in g.nodes.items():
        if node.lexical_value is None:
            continue
        needle = _tokens(node.lexical_value)
        found = any(
            toks[i : i + len(needle)] == needle
            for i in range(len(toks) - len(needle) + 1)
        )
        if not found:
            out.append({
                "node": var,
                "lexical_value": node.lexical_value,
                "message": "lexical value is not a contiguous token span of the utterance",
            })
    return out


class ValidatePayload(BaseModel):
    dmr: str
    turn: int = 0
    utterance: str | None = None


class AnnotationPayload(BaseModel):
    dialogue: str
    turn: int
    dmr: str
    referents: list[dict] = []
    status: str = "saved"
    revision: int = 0


class ResolvePayload(BaseModel):
    dialogue: str
    turn: int
    node: str
    referents: list[dict]
    revision: int = 0


def ontology_to_json(o: Ontology) -> dict:
    types = {}
    for name in sorted(o.types):
        decl = o.types[name]
        args = {}
        for label, spec in sorted(o.resolve_arguments(name).items()):
            args[label] = {
                "targets": sorted(spec.allowed_targets),
                "keyword": spec.allows_keyword,
            }
        types[name] = {"parent": decl.parent, "kind": o.kind_of(name), "args": args}
    return {
        "types": types,
        "intents": sorted(o.intents),
        "entities": sorted(o.entities),
        "operators": list(OPERATORS),
        "keywords": [KEYWORD_NEG],
    }


def create_app(cfg: ServiceConfig) -> FastAPI:
    ontology = load_ontology(cfg.ontology_path)
    corpus: Corpus | None = (
        load_corpus(cfg.corpus_path, ontology) if cfg.corpus_path else None
    )
    store = AnnotationStore(cfg.store_path)
    app = FastAPI(title="dmrkit annotation service")
    if cfg.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=cfg.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def find_dialogue(did: str):
        if corpus is None:
            raise HTTPException(404, detail="no corpus loaded")
        for d in corpus.dialogues():
            if d.id == did:
                return d
        raise HTTPException(404, detail=f"unknown dialogue {did!r}")

    def parse_or_400(text: str, turn: int) -> DmrGraph:
        try:
            return read_graph(text, turn=turn, ontology=ontology)
        except Exception as err:
            raise HTTPException(400, detail=f"malformed DMR text: {err}")

    def check_or_422(g: DmrGraph, utterance: str | None) -> None:
        violations = [v.to_json() for v in validate(ontology, g)]
        token_copy = token_copy_violations(g, utterance) if utterance else []
        if violations or token_copy:
            raise HTTPException(
                422, detail={"violations": violations, "token_copy": token_copy}
            )

    def stored_graph(did: str, turn: int, annotator: str) -> DmrGraph | None:
        for who in (annotator, "anonymous"):
            record = store.get(("dmr", did, turn, who, None))
            if record is not None:
                return read_graph(record["dmr"], turn=turn, ontology=ontology)
        return None

    def context_dmrs(dialogue, turn: int, annotator: str) -> list[DmrGraph]:
        out = []
        for t in dialogue.turns:
            if t.index >= turn or t.role != ROLE_CUSTOMER:
                continue
            g = stored_graph(dialogue.id, t.index, annotator)
            if g is None:
                g = t.dmr
            if g is not None:
                out.append(g)
        return out

    @app.get("/ontology")
    def get_ontology():
        return ontology_to_json(ontology)

    @app.get("/dialogues/{did}")
    def get_dialogue(did: str):
        d = find_dialogue(did)
        return {
            "id": d.id,
            "turns": [
                {
                    "index": t.index,
                    "role": t.role,
                    "text": t.text,
                    "dmr": t.dmr_text or (write_graph(t.dmr) if t.dmr else None),
                }
                for t in d.turns
            ],
            "annotations": store.records_for(d.id),
        }

    @app.post("/validate")
    def post_validate(payload: ValidatePayload):
        g = parse_or_400(payload.dmr, payload.turn)
        check_or_422(g, payload.utterance)
        return {"violations": [], "token_copy": []}

    @app.post("/annotations")
    def post_annotation(
        payload: AnnotationPayload,
        x_annotator_id: str = Header(default="anonymous"),
    ):
        g = parse_or_400(payload.dmr, payload.turn)
        utterance = None
        if corpus is not None:
            try:
                d = find_dialogue(payload.dialogue)
                if 0 <= payload.turn < len(d.turns):
                    utterance = d.turns[payload.turn].text
            except HTTPException:
                utterance = None
        check_or_422(g, utterance)
        record = {
            "kind": "dmr",
            "dialogue": payload.dialogue,
            "turn": payload.turn,
            "annotator": x_annotator_id,
            "dmr": payload.dmr,
            "referents": payload.referents,
            "status": payload.status,
        }
        try:
            saved = store.append(record, payload.revision)
        except RevisionConflict as err:
            raise HTTPException(
                409, detail={"current_revision": err.current_revision}
            )
        return {"revision": saved["revision"]}

    def _candidate_payload(dialogue, turn: int, node: str, annotator: str):
        d = dialogue
        if not (0 <= turn < len(d.turns)):
            raise HTTPException(404, detail=f"no turn {turn}")
        g = stored_graph(d.id, turn, annotator) or d.turns[turn].dmr
        if g is None:
            raise HTTPException(404, detail=f"turn {turn} has no DMR")
        if node not in g.nodes:
            raise HTTPException(404, detail=f"no node {node!r} in turn {turn}")
        labels = effective_incoming_labels(g, node)
        ctx = context_dmrs(d, turn, annotator)
        cands = rule_candidates(ctx, labels)
        by_turn = {c.turn: c for c in ctx}
        return cands, by_turn

    @app.get("/coref/candidates")
    def get_candidates(
        dialogue: str = Query(...),
        turn: int = Query(...),
        node: str = Query(...),
        x_annotator_id: str = Header(default="anonymous"),
    ):
        d = find_dialogue(dialogue)
        cands, by_turn = _candidate_payload(d, turn, node, x_annotator_id)
        return {
            "candidates": [
                {
                    "turn": t,
                    "var": v,
                    "payload": by_turn[t].nodes[v].payload(),
                }
                for t, v in cands
            ],
            "dmrs": {t: write_graph(g) for t, g in by_turn.items()},
        }

    @app.post("/coref/resolve")
    def post_resolve(
        payload: ResolvePayload,
        x_annotator_id: str = Header(default="anonymous"),
    ):
        d = find_dialogue(payload.dialogue)
        cands, _ = _candidate_payload(d, payload.turn, payload.node, x_annotator_id)
        if not payload.referents:
            raise HTTPException(422, detail={"error": "referent selection is empty"})
        allowed = set(cands)
        rejected = [
            r for r in payload.referents
            if (int(r["turn"]), str(r["var"])) not in allowed
        ]
        if rejected:
            raise HTTPException(
                422,
                detail={
                    "error": "referents must share the reference node's incoming edges",
                    "rejected": rejected,
                },
            )
        record = {
            "kind": "coref",
            "dialogue": payload.dialogue,
            "turn": payload.turn,
            "annotator": x_annotator_id,
            "node": payload.node,
            "referents": payload.referents,
            "status": "saved",
        }
        try:
            saved = store.append(record, payload.revision)
        except RevisionConflict as err:
            raise HTTPException(
                409, detail={"current_revision": err.current_revision}
            )
        return {"revision": saved["revision"]}

    return app


def serve(cfg: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="warning")
