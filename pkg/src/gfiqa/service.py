"""HTTP service for running a subjective study.

State is kept in memory behind a single writer lock and persisted as an
append-only JSONL event log, so a restarted service replays to exactly the
same state. Scores are collected one image at a time per subject (practice
set first, then a per-subject randomized main sequence) and exported or
aggregated into MOS on demand.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .study import compute_mos, partition_sessions, scatter_export

logger = logging.getLogger(__name__)

SCORE_LABELS = {5: "Excellent", 4: "Good", 3: "Fair", 2: "Poor", 1: "Bad"}


@dataclass
class RatingRecord:
    image_id: str
    subject_id: str
    session_id: int
    score: int
    timestamp: float
    seq: int
    practice: bool


@dataclass
class SessionState:
    session_id: int
    study_id: str
    image_ids: list[str]
    subjects: set[str] = field(default_factory=set)
    # latest-wins rating per (image, subject)
    ratings: dict[tuple[str, str], RatingRecord] = field(default_factory=dict)


@dataclass
class StudyState:
    study_id: str
    name: str
    seed: int
    practice: list[str]
    sessions: list[SessionState]
    min_subjects: int = 15
    domains: dict[str, str] = field(default_factory=dict)


class CreateStudyRequest(BaseModel):
    name: str = "study"
    images: list[str]
    n_sessions: int = 1
    seed: int = 0
    practice_images: list[str] = Field(default_factory=list)
    practice_size: int = 5
    min_subjects: int = 15
    image_paths: dict[str, str] = Field(default_factory=dict)
    domains: dict[str, str] = Field(default_factory=dict)


class EnrollRequest(BaseModel):
    subject_id: str
    session: Optional[int] = None


class RatingRequest(BaseModel):
    session: int
    subject: str
    image: str
    score: int


class StudyService:
    """In-memory study registry with event-log persistence."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.data_dir / "events.jsonl"
        self.lock = threading.Lock()
        self.studies: dict[str, StudyState] = {}
        self.sessions: dict[int, SessionState] = {}
        self.image_paths: dict[str, Path] = {}
        self._next_study = 1
        self._next_session = 1
        self._seq = 0
        self._replay()

    # persistence ---------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        with self.events_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay(self) -> None:
        if not self.events_path.exists():
            return
        with self.events_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "study":
            self._apply_study(event)
        elif kind == "enroll":
            session = self.sessions[event["session"]]
            session.subjects.add(event["subject"])
        elif kind == "rating":
            session = self.sessions[event["session"]]
            record = RatingRecord(
                image_id=event["image"],
                subject_id=event["subject"],
                session_id=event["session"],
                score=event["score"],
                timestamp=event["timestamp"],
                seq=event["seq"],
                practice=event["practice"],
            )
            session.ratings[(record.image_id, record.subject_id)] = record
            self._seq = max(self._seq, record.seq)

    def _apply_study(self, event: dict) -> None:
        sessions = []
        for sess in event["sessions"]:
            state = SessionState(
                session_id=sess["session_id"],
                study_id=event["study_id"],
                image_ids=list(sess["image_ids"]),
            )
            sessions.append(state)
            self.sessions[state.session_id] = state
            self._next_session = max(self._next_session, state.session_id + 1)
        study = StudyState(
            study_id=event["study_id"],
            name=event["name"],
            seed=event["seed"],
            practice=list(event["practice"]),
            sessions=sessions,
            min_subjects=event.get("min_subjects", 15),
            domains=dict(event.get("domains", {})),
        )
        self.studies[study.study_id] = study
        for image_id, path in event.get("image_paths", {}).items():
            self.image_paths[image_id] = Path(path)
        number = int(study.study_id.split("-")[-1])
        self._next_study = max(self._next_study, number + 1)

    # operations ----------------------------------------------------------

    def create_study(self, req: CreateStudyRequest) -> StudyState:
        if not req.images:
            raise HTTPException(400, "study needs at least one image")
        if len(set(req.images)) != len(req.images):
            raise HTTPException(400, "duplicate image ids in study")
        with self.lock:
            practice = list(req.practice_images)
            main = [i for i in req.images if i not in set(practice)]
            if not practice and req.practice_size > 0:
                # carve the practice set out of the corpus deterministically
                take = min(req.practice_size, max(0, len(main) - req.n_sessions))
                rng = random.Random(req.seed ^ 0x5EED)
                practice = rng.sample(main, take) if take else []
                main = [i for i in main if i not in set(practice)]
            partition = partition_sessions(main, req.n_sessions, req.seed)
            study_id = f"study-{self._next_study}"
            self._next_study += 1
            sessions = []
            for image_ids in partition:
                state = SessionState(
                    session_id=self._next_session,
                    study_id=study_id,
                    image_ids=image_ids,
                )
                self._next_session += 1
                sessions.append(state)
                self.sessions[state.session_id] = state
            study = StudyState(
                study_id=study_id,
                name=req.name,
                seed=req.seed,
                practice=practice,
                sessions=sessions,
                min_subjects=req.min_subjects,
                domains=dict(req.domains),
            )
            self.studies[study_id] = study
            for image_id, path in req.image_paths.items():
                self.image_paths[image_id] = Path(path)
            self._append_event(
                {
                    "type": "study",
                    "study_id": study_id,
                    "name": req.name,
                    "seed": req.seed,
                    "practice": practice,
                    "min_subjects": req.min_subjects,
                    "sessions": [
                        {"session_id": s.session_id, "image_ids": s.image_ids}
                        for s in sessions
                    ],
                    "image_paths": {k: str(v) for k, v in req.image_paths.items()},
                    "domains": req.domains,
                }
            )
            return study

    def _study(self, study_id: str) -> StudyState:
        study = self.studies.get(study_id)
        if study is None:
            raise HTTPException(404, f"unknown study {study_id}")
        return study

    def _session(self, session_id: int) -> SessionState:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def enroll(self, study_id: str, req: EnrollRequest) -> SessionState:
        study = self._study(study_id)
        with self.lock:
            if req.session is not None:
                session = self._session(req.session)
                if session.study_id != study_id:
                    raise HTTPException(400, "session belongs to another study")
            else:
                session = min(
                    study.sessions, key=lambda s: (len(s.subjects), s.session_id)
                )
            session.subjects.add(req.subject_id)
            self._append_event(
                {
                    "type": "enroll",
                    "session": session.session_id,
                    "subject": req.subject_id,
                }
            )
            return session

    def _subject_order(self, study: StudyState, session: SessionState, subject: str):
        rng = random.Random(f"{study.seed}:{session.session_id}:{subject}")
        order = list(session.image_ids)
        rng.shuffle(order)
        return order

    def next_image(self, session_id: int, subject: str) -> dict:
        session = self._session(session_id)
        study = self._study(session.study_id)
        if subject not in session.subjects:
            raise HTTPException(403, f"subject {subject} is not enrolled")
        rated = {
            image_id
            for (image_id, subj) in session.ratings
            if subj == subject
        }
        for index, image_id in enumerate(study.practice):
            if image_id not in rated:
                return {
                    "image_id": image_id,
                    "practice": True,
                    "index": index,
                    "total": len(study.practice),
                    "done": False,
                    "scale": SCORE_LABELS,
                }
        order = self._subject_order(study, session, subject)
        rated_main = [i for i in order if i in rated]
        for index, image_id in enumerate(order):
            if image_id not in rated:
                return {
                    "image_id": image_id,
                    "practice": False,
                    "index": index,
                    "total": len(order),
                    "rated": len(rated_main),
                    "done": False,
                    "scale": SCORE_LABELS,
                }
        return {
            "done": True,
            "practice": False,
            "rated": len(rated_main),
            "total": len(order),
        }

    def submit_rating(self, req: RatingRequest) -> dict:
        session = self._session(req.session)
        study = self._study(session.study_id)
        if req.subject not in session.subjects:
            raise HTTPException(403, f"subject {req.subject} is not enrolled")
        if not isinstance(req.score, int) or not 1 <= req.score <= 5:
            raise HTTPException(400, f"score {req.score} outside the 1..5 scale")
        practice = req.image in study.practice
        if not practice and req.image not in session.image_ids:
            raise HTTPException(
                400, f"image {req.image} does not belong to session {req.session}"
            )
        with self.lock:
            if not practice:
                rated = {
                    image_id
                    for (image_id, subj) in session.ratings
                    if subj == req.subject
                }
                missing = [i for i in study.practice if i not in rated]
                if missing:
                    raise HTTPException(
                        409,
                        f"practice set incomplete ({len(missing)} items left); "
                        "rate the practice images first",
                    )
            key = (req.image, req.subject)
            duplicate = key in session.ratings
            self._seq += 1
            record = RatingRecord(
                image_id=req.image,
                subject_id=req.subject,
                session_id=req.session,
                score=req.score,
                timestamp=time.time(),
                seq=self._seq,
                practice=practice,
            )
            if duplicate:
                logger.info(
                    "duplicate rating for image %s by %s overwritten",
                    req.image,
                    req.subject,
                )
            session.ratings[key] = record
            self._append_event(
                {
                    "type": "rating",
                    "session": record.session_id,
                    "subject": record.subject_id,
                    "image": record.image_id,
                    "score": record.score,
                    "timestamp": record.timestamp,
                    "seq": record.seq,
                    "practice": record.practice,
                }
            )
        return {"accepted": True, "duplicate": duplicate, "practice": practice}

    def export_lines(self, study_id: str) -> list[str]:
        """Latest-wins main-sequence records, one CSV line each (practice
        calibration items are excluded)."""
        study = self._study(study_id)
        records = []
        for session in study.sessions:
            for record in session.ratings.values():
                if not record.practice:
                    records.append(record)
        records.sort(key=lambda r: r.seq)
        return [
            f"{r.image_id},{r.subject_id},{r.session_id},{r.score},{r.timestamp!r}"
            for r in records
        ]

    def study_mos(self, study_id: str) -> dict:
        study = self._study(study_id)
        sessions_out = []
        combined: dict[str, float] = {}
        for session in study.sessions:
            ratings: dict[str, dict[str, float]] = {}
            for record in session.ratings.values():
                if record.practice:
                    continue
                ratings.setdefault(record.subject_id, {})[record.image_id] = float(
                    record.score
                )
            entry: dict = {"session_id": session.session_id}
            try:
                result = compute_mos(ratings)
            except Exception as exc:  # surfaced per session, study stays usable
                entry["error"] = str(exc)
            else:
                entry.update(
                    {
                        "mos": result.mos,
                        "n_subjects": result.n_subjects,
                        "m_subjects": result.m_subjects,
                        "rejected_subjects": sorted(result.rejected_subjects),
                        "flagged_subjects": sorted(result.flagged_subjects),
                        "histogram": result.histogram,
                    }
                )
                combined.update(result.mos)
            sessions_out.append(entry)
        histogram = [0] * 20
        for value in combined.values():
            histogram[min(19, int(value // 5))] += 1
        return {
            "study_id": study_id,
            "sessions": sessions_out,
            "mos": combined,
            "histogram": histogram,
            "scatter": [
                {"image_id": i, "domain": d, "mos": m}
                for i, d, m in scatter_export(combined, study.domains)
            ],
        }


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="gfiqa subjective study")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    service = StudyService(data_dir)
    app.state.service = service

    @app.post("/studies")
    def create_study(req: CreateStudyRequest):
        study = service.create_study(req)
        return {
            "study_id": study.study_id,
            "sessions": [
                {"session_id": s.session_id, "n_images": len(s.image_ids)}
                for s in study.sessions
            ],
            "practice": study.practice,
        }

    @app.get("/studies/{study_id}")
    def get_study(study_id: str):
        study = service._study(study_id)
        return {
            "study_id": study.study_id,
            "name": study.name,
            "practice": study.practice,
            "sessions": [
                {
                    "session_id": s.session_id,
                    "n_images": len(s.image_ids),
                    "subjects": sorted(s.subjects),
                }
                for s in study.sessions
            ],
        }

    @app.post("/studies/{study_id}/subjects")
    def enroll(study_id: str, req: EnrollRequest):
        session = service.enroll(study_id, req)
        return {
            "session": session.session_id,
            "n_images": len(session.image_ids),
            "practice": service._study(study_id).practice,
        }

    @app.get("/sessions/{session_id}/next")
    def next_image(session_id: int, subject: str = Query(...)):
        return service.next_image(session_id, subject)

    @app.post("/ratings")
    def submit_rating(req: RatingRequest):
        return service.submit_rating(req)

    @app.get("/studies/{study_id}/export", response_class=PlainTextResponse)
    def export(study_id: str):
        return "\n".join(service.export_lines(study_id)) + "\n"

    @app.get("/studies/{study_id}/mos")
    def study_mos(study_id: str):
        return service.study_mos(study_id)

    @app.get("/images/{image_id}")
    def serve_image(image_id: str):
        path = service.image_paths.get(image_id)
        if path is None or not path.is_file():
            raise HTTPException(404, f"no file registered for image {image_id}")
        return FileResponse(path)

    return app
