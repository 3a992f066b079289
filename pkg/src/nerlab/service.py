"""HTTP annotation service: projects, document lifecycle, span edits,
model-assisted suggestions, review, export, and retrain jobs.

State lives in a single-directory embedded store: an append-only JSON-lines
journal plus a periodic snapshot, with trained model files alongside. Every
mutation happens under one lock and is journaled before the call returns, so
a restarted service replays to exactly the pre-restart state.

Document writes are guarded by optimistic concurrency: each record carries a
revision counter, span saves must quote the revision they were based on, and
a stale revision is rejected with HTTP 409 without mutating anything.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .corpus import CorpusError, Document, EntitySpan, tokenize
from .embeddings import SkipGramConfig, train_static_embeddings
from .evaluation import compute_report
from .tagger import (
    LabelScheme,
    NerModel,
    TrainConfig,
    blank,
    predict,
    train,
)

STATUSES = ("fresh", "suggested", "annotated", "reviewed")

DEFAULT_PROJECT_LABELS = [
    {"label": "CHEMICAL", "hotkey": "C", "color": "#4cc9f0"},
    {"label": "DISEASE", "hotkey": "D", "color": "#f72585"},
    {"label": "SYMPTOM", "hotkey": "S", "color": "#ffd166"},
    {"label": "DOSAGE", "hotkey": "G", "color": "#80ed99"},
]

_SNAPSHOT_EVERY = 256


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _not_found(kind: str, key: str) -> ServiceError:
    return ServiceError(404, "not-found", f"{kind} {key!r} does not exist")


def _invalid(message: str) -> ServiceError:
    return ServiceError(400, "invalid", message)


@dataclass
class LabelDef:
    label: str
    hotkey: str
    color: str


@dataclass
class ProjectState:
    id: str
    name: str
    labels: list[LabelDef]
    model_version: int = 0
    model_path: str | None = None

    def to_api(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "labels": [asdict(l) for l in self.labels],
            "model_version": self.model_version,
        }


@dataclass
class RecordState:
    id: str
    project_id: str
    name: str
    text: str
    spans: list[dict] = field(default_factory=list)
    suggestions: list[dict] = field(default_factory=list)
    status: str = "fresh"
    revision: int = 0
    last_editor: str = ""

    def to_api(self, with_tokens: bool = False) -> dict:
        out = {
            "id": self.id,
            "project_id": self.project_id,
            "name": self.name,
            "text": self.text,
            "spans": list(self.spans),
            "suggestions": list(self.suggestions),
            "status": self.status,
            "revision": self.revision,
            "last_editor": self.last_editor,
        }
        if with_tokens:
            out["tokens"] = [
                {"text": t.text, "start": t.start, "end": t.end}
                for t in tokenize(self.text)
            ]
        return out


@dataclass
class JobState:
    id: str
    project_id: str
    state: str = "queued"
    model_version: int | None = None
    metrics: dict | None = None
    error: str | None = None
    created: float = 0.0
    started: float = 0.0
    finished: float = 0.0

    def to_api(self) -> dict:
        return asdict(self)


class AnnotationStore:
    """Journaled project/record/job state plus trained model artifacts."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        self._lock = threading.RLock()
        self.projects: dict[str, ProjectState] = {}
        self.records: dict[str, RecordState] = {}
        self.jobs: dict[str, JobState] = {}
        self._journal_entries = 0
        self._model_cache: dict[str, NerModel] = {}
        self._load()
        self._journal_fh = (self.root / "journal.jsonl").open("a", encoding="utf-8")

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        snapshot = self.root / "snapshot.json"
        if snapshot.exists():
            state = json.loads(snapshot.read_text())
            for p in state["projects"]:
                p["labels"] = [LabelDef(**l) for l in p["labels"]]
                self.projects[p["id"]] = ProjectState(**p)
            for r in state["records"]:
                self.records[r["id"]] = RecordState(**r)
            for j in state["jobs"]:
                self.jobs[j["id"]] = JobState(**j)
        journal = self.root / "journal.jsonl"
        if journal.exists():
            for line in journal.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(json.loads(line))

    def _apply(self, entry: dict) -> None:
        kind, data = entry["kind"], entry["data"]
        if kind == "project":
            data = dict(data)
            data["labels"] = [LabelDef(**l) for l in data["labels"]]
            self.projects[data["id"]] = ProjectState(**data)
        elif kind == "record":
            self.records[data["id"]] = RecordState(**data)
        elif kind == "job":
            self.jobs[data["id"]] = JobState(**data)

    def _journal(self, kind: str, data: dict) -> None:
        self._journal_fh.write(
            json.dumps({"kind": kind, "data": data}, ensure_ascii=False) + "\n"
        )
        self._journal_fh.flush()
        self._journal_entries += 1
        if self._journal_entries >= _SNAPSHOT_EVERY:
            self._snapshot()

    def _snapshot(self) -> None:
        state = {
            "projects": [asdict(p) for p in self.projects.values()],
            "records": [asdict(r) for r in self.records.values()],
            "jobs": [asdict(j) for j in self.jobs.values()],
        }
        tmp = self.root / "snapshot.json.tmp"
        tmp.write_text(json.dumps(state, ensure_ascii=False))
        tmp.replace(self.root / "snapshot.json")
        self._journal_fh.close()
        (self.root / "journal.jsonl").write_text("")
        self._journal_fh = (self.root / "journal.jsonl").open("a", encoding="utf-8")
        self._journal_entries = 0

    def close(self) -> None:
        with self._lock:
            self._snapshot()
            self._journal_fh.close()

    def _save_project(self, project: ProjectState) -> None:
        self._journal("project", asdict(project))

    def _save_record(self, record: RecordState) -> None:
        self._journal("record", asdict(record))

    def _save_job(self, job: JobState) -> None:
        self._journal("job", asdict(job))

    # -- projects ------------------------------------------------------------

    def create_project(self, name: str, labels: list[dict] | None) -> dict:
        if not name:
            raise _invalid("project name must be non-empty")
        defs = [LabelDef(**l) for l in (DEFAULT_PROJECT_LABELS if labels is None else labels)]
        if not defs:
            raise _invalid("a project needs at least one label")
        hotkeys = [d.hotkey for d in defs]
        names = [d.label for d in defs]
        if any(len(k) != 1 for k in hotkeys):
            raise _invalid("hotkeys must be single characters")
        if len(set(hotkeys)) != len(hotkeys):
            raise _invalid("duplicate hotkeys in label definitions")
        if any(not n for n in names) or len(set(names)) != len(names):
            raise _invalid("label names must be non-empty and unique")
        with self._lock:
            project = ProjectState(id=uuid.uuid4().hex[:12], name=name, labels=defs)
            self.projects[project.id] = project
            self._save_project(project)
            return project.to_api()

    def get_project(self, project_id: str) -> dict:
        with self._lock:
            if project_id not in self.projects:
                raise _not_found("project", project_id)
            return self.projects[project_id].to_api()

    def list_projects(self) -> list[dict]:
        with self._lock:
            return [p.to_api() for p in self.projects.values()]

    # -- documents -----------------------------------------------------------

    def upload_documents(self, project_id: str, files: list[dict]) -> list[dict]:
        with self._lock:
            if project_id not in self.projects:
                raise _not_found("project", project_id)
            out = []
            for item in files:
                name, text = item.get("name", ""), item.get("text", "")
                if not isinstance(text, str) or not text.strip():
                    raise _invalid(f"file {name!r} is empty")
                digest = hashlib.sha1(f"{project_id}:{text}".encode()).hexdigest()[:16]
                if digest in self.records:
                    out.append(self.records[digest].to_api())
                    continue
                record = RecordState(id=digest, project_id=project_id, name=name, text=text)
                self.records[digest] = record
                self._save_record(record)
                out.append(record.to_api())
            return out

    def list_records(self, project_id: str, status: str | None = None) -> list[dict]:
        with self._lock:
            if project_id not in self.projects:
                raise _not_found("project", project_id)
            if status is not None and status not in STATUSES:
                raise _invalid(f"unknown status {status!r}")
            return [
                r.to_api()
                for r in self.records.values()
                if r.project_id == project_id and (status is None or r.status == status)
            ]

    def get_record(self, doc_id: str) -> dict:
        with self._lock:
            if doc_id not in self.records:
                raise _not_found("document", doc_id)
            return self.records[doc_id].to_api(with_tokens=True)

    def save_spans(
        self, doc_id: str, spans: list[dict], revision: int, editor: str = ""
    ) -> dict:
        with self._lock:
            record = self.records.get(doc_id)
            if record is None:
                raise _not_found("document", doc_id)
            if revision != record.revision:
                raise ServiceError(
                    409,
                    "revision-conflict",
                    f"document {doc_id!r} is at revision {record.revision}, "
                    f"save was based on {revision}",
                )
            project = self.projects[record.project_id]
            allowed = {l.label for l in project.labels}
            bad = {s["label"] for s in spans} - allowed
            if bad:
                raise _invalid(f"labels {sorted(bad)!r} not defined in this project")
            try:
                Document.create(
                    record.id,
                    record.text,
                    [EntitySpan(s["start"], s["end"], s["label"]) for s in spans],
                )
            except CorpusError as exc:
                raise _invalid(str(exc)) from exc
            record.spans = sorted(
                ({"start": s["start"], "end": s["end"], "label": s["label"]} for s in spans),
                key=lambda s: s["start"],
            )
            record.revision += 1
            record.status = "annotated"
            record.last_editor = editor
            self._save_record(record)
            return record.to_api()

    def suggest(self, doc_id: str) -> dict:
        with self._lock:
            record = self.records.get(doc_id)
            if record is None:
                raise _not_found("document", doc_id)
            project = self.projects[record.project_id]
            if not project.model_path:
                raise ServiceError(
                    400, "no-model",
                    "this project has no trained model yet: start a training "
                    "job first, then request suggestions",
                )
            model = self._load_model(project.model_path)
        # decode outside the lock: it only reads the immutable model
        tokens = tokenize(record.text)
        spans = model.decode(tokens)
        with self._lock:
            record = self.records[doc_id]
            record.suggestions = [
                {"start": s.start, "end": s.end, "label": s.label} for s in sorted(spans)
            ]
            if record.status == "fresh":
                record.status = "suggested"
            record.revision += 1
            self._save_record(record)
            return {**record.to_api(), "model_version": project.model_version}

    def set_status(self, doc_id: str, status: str) -> dict:
        if status != "reviewed":
            raise _invalid("only 'reviewed' can be set through this endpoint")
        with self._lock:
            record = self.records.get(doc_id)
            if record is None:
                raise _not_found("document", doc_id)
            if record.status != "annotated":
                raise ServiceError(
                    400, "bad-status",
                    f"document {doc_id!r} is {record.status!r}; only annotated "
                    "documents can be marked reviewed",
                )
            record.status = "reviewed"
            record.revision += 1
            self._save_record(record)
            return record.to_api()

    # -- export & training -----------------------------------------------------

    def export_jsonl(self, project_id: str, reviewed_only: bool = False) -> str:
        with self._lock:
            if project_id not in self.projects:
                raise _not_found("project", project_id)
            wanted = ("reviewed",) if reviewed_only else ("annotated", "reviewed")
            rows = [
                r for r in self.records.values()
                if r.project_id == project_id and r.status in wanted
            ]
            if not rows:
                raise ServiceError(
                    400, "empty-export",
                    "project has no annotated or reviewed documents to export",
                )
            lines = []
            for r in rows:
                lines.append(json.dumps(
                    {"id": r.id, "text": r.text, "spans": r.spans},
                    ensure_ascii=False, separators=(",", ":"),
                ))
            return "\n".join(lines) + "\n"

    def start_train_job(self, project_id: str, config: dict) -> dict:
        with self._lock:
            if project_id not in self.projects:
                raise _not_found("project", project_id)
            live = [
                j for j in self.jobs.values()
                if j.project_id == project_id and j.state in ("queued", "running")
            ]
            if live:
                raise ServiceError(
                    409, "job-running",
                    f"project already has job {live[0].id!r} in state {live[0].state!r}",
                )
            exportable = [
                r for r in self.records.values()
                if r.project_id == project_id and r.status in ("annotated", "reviewed")
            ]
            if not exportable:
                raise _invalid("nothing to train on: no annotated documents")
            job = JobState(id=uuid.uuid4().hex[:12], project_id=project_id,
                           created=time.time())
            self.jobs[job.id] = job
            self._save_job(job)
        worker = threading.Thread(
            target=self._run_train_job, args=(job.id, project_id, config), daemon=True
        )
        worker.start()
        return job.to_api()

    def get_job(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self.jobs:
                raise _not_found("job", job_id)
            return self.jobs[job_id].to_api()

    def _load_model(self, path: str) -> NerModel:
        if path not in self._model_cache:
            self._model_cache[path] = NerModel.load(path)
        return self._model_cache[path]

    def _run_train_job(self, job_id: str, project_id: str, config: dict) -> None:
        with self._lock:
            job = self.jobs[job_id]
            job.state = "running"
            job.started = time.time()
            self._save_job(job)
            project = self.projects[project_id]
            labels = [l.label for l in project.labels]
            docs = [
                Document.create(
                    r.id, r.text,
                    [EntitySpan(s["start"], s["end"], s["label"]) for s in r.spans],
                )
                for r in self.records.values()
                if r.project_id == project_id and r.status in ("annotated", "reviewed")
            ]
            all_texts = [
                r.text for r in self.records.values() if r.project_id == project_id
            ]
        try:
            from .corpus import Dataset, SplitSpec, split_train_test

            dataset = Dataset.from_documents(docs, labels)
            train_cfg = TrainConfig(**{
                k: v for k, v in config.items()
                if k in ("iterations", "dropout", "batch_size", "learning_rate", "seed")
                and v is not None
            })
            # small projects need many more passes before rare-word vectors
            # separate enough for the scorer to tell labels apart
            sg_epochs = max(10, min(100, round(12000 / max(len(all_texts), 1))))
            table = train_static_embeddings(
                all_texts,
                SkipGramConfig(dim=32, epochs=sg_epochs, learning_rate=0.1,
                               seed=train_cfg.seed),
            )
            if len(dataset) >= 5:
                fit, held_out = split_train_test(
                    dataset, SplitSpec(test_ratio=0.2, seed=train_cfg.seed)
                )
            else:
                fit, held_out = dataset, dataset
            model = train(blank(LabelScheme(labels), table), fit, train_cfg)
            metrics = compute_report(held_out, predict(model, held_out)).to_dict()

            with self._lock:
                project = self.projects[project_id]
                version = project.model_version + 1
                path = self.root / "models" / f"{project_id}-v{version}.bin"
                model.save(path)
                project.model_version = version
                project.model_path = str(path)
                self._save_project(project)
                job = self.jobs[job_id]
                job.state = "done"
                job.model_version = version
                job.metrics = metrics
                job.finished = time.time()
                self._save_job(job)
        except Exception as exc:  # job failures are reported, not raised
            with self._lock:
                job = self.jobs[job_id]
                job.state = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
                job.finished = time.time()
                self._save_job(job)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class LabelIn(BaseModel):
    label: str
    hotkey: str
    color: str = "#cccccc"


class ProjectIn(BaseModel):
    name: str
    labels: list[LabelIn] | None = None


class FileIn(BaseModel):
    name: str = ""
    text: str


class UploadIn(BaseModel):
    files: list[FileIn]


class SpanIn(BaseModel):
    start: int
    end: int
    label: str


class SaveSpansIn(BaseModel):
    spans: list[SpanIn]
    revision: int
    editor: str = ""


class StatusIn(BaseModel):
    status: str


class TrainIn(BaseModel):
    iterations: int | None = None
    dropout: float | None = None
    batch_size: int | None = None
    learning_rate: float | None = None
    seed: int | None = None


def create_app(store: AnnotationStore, auth_token: str | None = None) -> FastAPI:
    app = FastAPI(title="annotation service")

    def check_auth(request: Request) -> None:
        if auth_token and request.headers.get("x-auth-token") != auth_token:
            raise ServiceError(401, "unauthorized", "missing or wrong X-Auth-Token header")

    guarded = Depends(check_auth)

    @app.exception_handler(ServiceError)
    async def service_error(_, exc: ServiceError):
        return JSONResponse({"code": exc.code, "message": exc.message}, exc.status)

    @app.exception_handler(RequestValidationError)
    async def validation_error(_, exc: RequestValidationError):
        return JSONResponse({"code": "validation", "message": str(exc.errors()[:1])}, 400)

    @app.post("/projects", dependencies=[guarded])
    def create_project(body: ProjectIn):
        labels = [l.model_dump() for l in body.labels] if body.labels is not None else None
        return store.create_project(body.name, labels)

    @app.get("/projects", dependencies=[guarded])
    def list_projects():
        return store.list_projects()

    @app.get("/projects/{project_id}", dependencies=[guarded])
    def get_project(project_id: str):
        return store.get_project(project_id)

    @app.post("/projects/{project_id}/documents", dependencies=[guarded])
    def upload(project_id: str, body: UploadIn):
        records = store.upload_documents(project_id, [f.model_dump() for f in body.files])
        return {"count": len(records), "records": records}

    @app.get("/projects/{project_id}/documents", dependencies=[guarded])
    def list_documents(project_id: str, status: str | None = None):
        return store.list_records(project_id, status)

    @app.get("/documents/{doc_id}", dependencies=[guarded])
    def get_document(doc_id: str):
        return store.get_record(doc_id)

    @app.put("/documents/{doc_id}/spans", dependencies=[guarded])
    def put_spans(doc_id: str, body: SaveSpansIn):
        return store.save_spans(
            doc_id, [s.model_dump() for s in body.spans], body.revision, body.editor
        )

    @app.post("/documents/{doc_id}/suggest", dependencies=[guarded])
    def suggest(doc_id: str):
        return store.suggest(doc_id)

    @app.post("/documents/{doc_id}/status", dependencies=[guarded])
    def set_status(doc_id: str, body: StatusIn):
        return store.set_status(doc_id, body.status)

    @app.get("/projects/{project_id}/export", dependencies=[guarded])
    def export(project_id: str, format: str = "jsonl", reviewed_only: bool = False):
        if format != "jsonl":
            raise _invalid(f"unsupported export format {format!r}")
        content = store.export_jsonl(project_id, reviewed_only)
        return PlainTextResponse(content, media_type="application/x-ndjson")

    @app.post("/projects/{project_id}/train", dependencies=[guarded])
    def start_train(project_id: str, body: TrainIn | None = None):
        config = body.model_dump() if body is not None else {}
        return store.start_train_job(project_id, config)

    @app.get("/jobs/{job_id}", dependencies=[guarded])
    def job_status(job_id: str):
        return store.get_job(job_id)

    return app
