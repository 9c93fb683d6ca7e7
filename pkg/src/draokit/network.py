"""Star-topology network simulation with distributed-prox-model accounting.

The simulation tracks exactly what the lower-bound arguments need: which
coordinates have ever been touched in each node's memory, how many
communication rounds have elapsed, and (optionally) whether every
communicated payload really lies in the span of its sender's memory.

One `exchange` is one communication round: every worker ships one vector
to the server and the server broadcasts one vector back, both drawn from
the sender's memory.  Linear-graph topologies from the lower-bound
constructions are emulated by charging extra rounds per round trip
(`CommPolicy.linear_graph`), not by modelling hops explicitly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .prox import ProxCounter

NONZERO_EPS = 1e-14
SPAN_RTOL = 1e-8


class DPMViolation(RuntimeError):
    """A communicated payload fell outside the sender's memory span."""


@dataclass
class CommPolicy:
    """Round charges per solver step; data, not code.

    Defaults follow the published accounting: one round per DRAO
    iteration, two per DRAO-S phase (broadcast leg plus collection leg),
    one per SD iteration.  `linear_graph` charges a diameter's worth of
    rounds per one-way trip for the 2-endpoint chain emulation.
    """

    rounds_per_drao_iteration: int = 1
    rounds_per_draos_phase: int = 2
    rounds_per_sd_iteration: int = 1
    label: str = "star-default"

    def __post_init__(self):
        for v in (self.rounds_per_drao_iteration, self.rounds_per_draos_phase,
                  self.rounds_per_sd_iteration):
            if v < 1:
                raise ValueError("round charges must be positive integers")

    @classmethod
    def standard(cls) -> "CommPolicy":
        return cls()

    @classmethod
    def dpm_strict(cls) -> "CommPolicy":
        """Certification accounting: a DRAO iteration is a full round trip."""
        return cls(rounds_per_drao_iteration=2, label="dpm-strict")

    @classmethod
    def linear_graph(cls, diameter: int) -> "CommPolicy":
        """2-endpoint chain with hop delay: one-way trips cost `diameter` rounds."""
        if diameter < 2:
            raise ValueError("graph diameter must be >= 2")
        return cls(rounds_per_drao_iteration=diameter,
                   rounds_per_draos_phase=diameter,
                   rounds_per_sd_iteration=max(1, math.ceil(diameter / 2)),
                   label=f"linear-graph-diam-{diameter}")

    def document(self) -> dict:
        return {
            "label": self.label,
            "rounds_per_drao_iteration": self.rounds_per_drao_iteration,
            "rounds_per_draos_phase": self.rounds_per_draos_phase,
            "rounds_per_sd_iteration": self.rounds_per_sd_iteration,
        }


class _Memory:
    """One node memory: nonzero-coordinate mask plus optional orthonormal span basis."""

    def __init__(self, name: str, track_span: bool):
        self.name = name
        self.track_span = track_span
        self.mask: np.ndarray | None = None
        self.basis: list[np.ndarray] = []
        self.count = 0

    def note(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        if self.mask is None:
            self.mask = np.zeros(v.shape[0], dtype=bool)
        self.mask |= np.abs(v) > NONZERO_EPS
        self.count += 1
        if self.track_span:
            res = self._residual_vector(v)
            nrm = float(np.linalg.norm(res))
            # grow the basis whenever the residual is non-negligible relative
            # to the vector itself, so a noted vector always passes in_span
            if nrm > 1e-12 * max(float(np.linalg.norm(v)), 1e-300):
                self.basis.append(res / nrm)

    def _residual_vector(self, v: np.ndarray) -> np.ndarray:
        res = np.array(v, dtype=float)
        for b in self.basis:
            res -= np.dot(b, res) * b
        # second Gram-Schmidt pass for numerical hygiene
        for b in self.basis:
            res -= np.dot(b, res) * b
        return res

    def span_residual(self, v: np.ndarray) -> float:
        if not self.track_span:
            return 0.0
        return float(np.linalg.norm(self._residual_vector(v)))

    def in_span(self, v: np.ndarray) -> bool:
        nrm = float(np.linalg.norm(v))
        if nrm <= NONZERO_EPS:
            return True
        return self.span_residual(v) <= SPAN_RTOL * nrm

    def max_nonzero_index(self) -> int:
        if self.mask is None or not self.mask.any():
            return 0
        return int(np.max(np.nonzero(self.mask)[0])) + 1

    def min_nonzero_index(self) -> int:
        if self.mask is None or not self.mask.any():
            return 0
        return int(np.min(np.nonzero(self.mask)[0])) + 1


class StarNetwork:
    """Server plus m workers, each with a primal and a dual memory.

    All memories start as {0}.  Vectors a node materializes locally are
    `note`d into its memory (mask update, optional span basis); the
    `exchange` primitive moves one vector per worker per direction and
    advances the round counter.
    """

    def __init__(self, m: int, track_span: bool = False,
                 trace_path: str | None = None):
        if m < 1:
            raise ValueError("need at least one worker")
        self.m = m
        self.track_span = track_span
        self.rounds = 0
        self.counters = ProxCounter()
        self.server = _Memory("server", track_span)
        self.worker_primal = [_Memory(f"worker{i}", track_span) for i in range(m)]
        self.worker_dual = [_Memory(f"worker{i}.dual", track_span) for i in range(m)]
        self.history: list[dict] = []
        self._trace_path = trace_path
        self._trace_file = open(trace_path, "w") if trace_path else None

    # -- local computation hooks -------------------------------------------

    def note_server(self, v: np.ndarray) -> None:
        self.server.note(v)

    def note_worker(self, i: int, v: np.ndarray) -> None:
        self.worker_primal[i].note(v)

    def note_worker_dual(self, i: int, pi: np.ndarray) -> None:
        self.worker_dual[i].note(pi)

    # -- the round primitive --------------------------------------------------

    def exchange(self, worker_payloads, server_payload: np.ndarray | None,
                 check_span: bool | None = None, extra: dict | None = None) -> None:
        """One communication round: workers -> server, server -> workers.

        Each payload must lie in the span of its sender's memory; the check
        runs only when span tracking is on (it needs the bases) and can be
        forced off per call for speed.
        """
        check = self.track_span if check_span is None else (check_span and self.track_span)
        if worker_payloads is None:
            worker_payloads = [None] * self.m
        if len(worker_payloads) != self.m:
            raise ValueError("one payload slot per worker")
        for i, payload in enumerate(worker_payloads):
            if payload is None:
                continue
            payload = np.asarray(payload, dtype=float)
            if check and not self.worker_primal[i].in_span(payload):
                raise DPMViolation(
                    f"DPM violation: payload outside memory span (worker {i})")
            self.server.note(payload)
        if server_payload is not None:
            server_payload = np.asarray(server_payload, dtype=float)
            if check and not self.server.in_span(server_payload):
                raise DPMViolation(
                    "DPM violation: payload outside memory span (server)")
            for i in range(self.m):
                self.worker_primal[i].note(server_payload)
        self.rounds += 1
        self._record(extra)

    def idle_rounds(self, k: int, extra: dict | None = None) -> None:
        """Advance the round counter without moving data (hop-delay padding)."""
        for _ in range(max(0, int(k))):
            self.rounds += 1
            self._record(extra)

    def _record(self, extra: dict | None) -> None:
        rec = {
            "t": self.rounds,
            "rounds": self.rounds,
            "p_proj": self.counters.p_projections,
            "max_idx": self.max_nonzero_index(),
            "min_idx": self.min_nonzero_index(),
        }
        if extra:
            rec.update(extra)
        self.history.append(rec)
        if self._trace_file is not None:
            self._trace_file.write(json.dumps(rec) + "\n")
            self._trace_file.flush()

    # -- reporting -------------------------------------------------------------

    def max_nonzero_index(self) -> int:
        idx = self.server.max_nonzero_index()
        for mem in self.worker_primal:
            idx = max(idx, mem.max_nonzero_index())
        for mem in self.worker_dual:
            idx = max(idx, mem.max_nonzero_index())
        return idx

    def min_nonzero_index(self) -> int:
        """Smallest 1-based coordinate ever nonzero in any primal memory (0 if none)."""
        vals = [self.server.min_nonzero_index()]
        vals += [mem.min_nonzero_index() for mem in self.worker_primal]
        vals = [v for v in vals if v > 0]
        return min(vals) if vals else 0

    def report_counters(self) -> dict:
        snap = self.counters.snapshot()
        snap["rounds"] = self.rounds
        return snap

    def close(self) -> None:
        if self._trace_file is not None:
            self._trace_file.close()
            self._trace_file = None
