"""Per-vehicle posterior persistence.

One JSON document per vehicle, written atomically (temp file + rename).
Concurrent writers are serialized per vehicle through an advisory lock file;
acquisition retries briefly and then fails rather than blocking a batch job.
"""

from __future__ import annotations

import fcntl
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .bayes import PosteriorState, PriorSpec, init_state
from .errors import StoreError


@dataclass
class PosteriorStore:
    root: Path
    prior: PriorSpec
    lock_retries: int = 20
    lock_retry_delay_s: float = 0.05

    def __post_init__(self):
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _doc_path(self, vehicle_id: str) -> Path:
        safe = vehicle_id.replace(os.sep, "_")
        return self.root / f"{safe}.json"

    @contextmanager
    def lock(self, vehicle_id: str):
        """Advisory per-vehicle lock; retry briefly, then fail."""
        lock_path = self._doc_path(vehicle_id).with_suffix(".lock")
        fh = open(lock_path, "a+")
        try:
            for attempt in range(self.lock_retries):
                try:
                    fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
                    break
                except OSError:
                    time.sleep(self.lock_retry_delay_s)
            else:
                raise StoreError(
                    f"could not lock posterior for {vehicle_id!r} after "
                    f"{self.lock_retries} attempts"
                )
            yield
        finally:
            try:
                fcntl.flock(fh, fcntl.LOCK_UN)
            finally:
                fh.close()

    def exists(self, vehicle_id: str) -> bool:
        return self._doc_path(vehicle_id).exists()

    def load(self, vehicle_id: str) -> PosteriorState:
        """Read a vehicle's state; a missing document initializes from the prior."""
        path = self._doc_path(vehicle_id)
        if not path.exists():
            return init_state(self.prior, vehicle_id)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            return PosteriorState(
                vehicle_id=doc["vehicle_id"],
                mu=float(doc["mu"]),
                kappa=float(doc["kappa"]),
                a=float(doc["a"]),
                b=float(doc["b"]),
                n_trips=int(doc["n_trips"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"corrupt posterior document {path}: {exc}") from exc

    def save(self, state: PosteriorState, lower_bound_trips: int | None = None) -> Path:
        """Atomically persist a state document."""
        path = self._doc_path(state.vehicle_id)
        doc = {
            "vehicle_id": state.vehicle_id,
            "mu": state.mu,
            "kappa": state.kappa,
            "a": state.a,
            "b": state.b,
            "n_trips": state.n_trips,
            "updated_at": datetime.now(timezone.utc).isoformat(),
        }
        if lower_bound_trips is not None:
            doc["lower_bound_trips"] = lower_bound_trips
        elif path.exists():
            try:
                old = json.loads(path.read_text(encoding="utf-8"))
                if "lower_bound_trips" in old:
                    doc["lower_bound_trips"] = old["lower_bound_trips"]
            except json.JSONDecodeError:
                pass
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path

    def lower_bound_trips(self, vehicle_id: str) -> int:
        path = self._doc_path(vehicle_id)
        if not path.exists():
            return 0
        try:
            return int(json.loads(path.read_text(encoding="utf-8")).get(
                "lower_bound_trips", 0))
        except (json.JSONDecodeError, TypeError, ValueError):
            return 0
