"""Star-network simulation: rounds, spans, coordinate tracking, traces."""

import json

import numpy as np
import pytest

from draokit import CommPolicy, DPMViolation, StarNetwork


class TestExchange:
    def test_zero_payloads_keep_spans(self):
        net = StarNetwork(2, track_span=True)
        net.exchange([np.zeros(4), np.zeros(4)], np.zeros(4))
        assert net.rounds == 1
        assert net.max_nonzero_index() == 0

    def test_coordinate_tracking(self):
        net = StarNetwork(2)
        e3 = np.zeros(5)
        e3[2] = 1.0  # 1-based index 3
        net.note_worker(0, e3)
        net.exchange([e3, np.zeros(5)], None)
        assert net.max_nonzero_index() == 3
        assert net.min_nonzero_index() == 3

    def test_span_violation_raises(self):
        net = StarNetwork(1, track_span=True)
        rogue = np.array([0.0, 1.0, 0.0])
        with pytest.raises(DPMViolation):
            net.exchange([rogue], None)

    def test_noted_vector_passes_span(self):
        net = StarNetwork(1, track_span=True)
        v = np.array([0.3, -1.2, 0.0])
        net.note_worker(0, v)
        net.exchange([2.5 * v], None)  # scalar multiple stays in span
        assert net.rounds == 1

    def test_span_reconstruction_property(self):
        # vectors stored in a memory are reconstructible from its basis
        net = StarNetwork(1, track_span=True)
        rng = np.random.default_rng(0)
        stored = []
        for _ in range(10):
            v = rng.normal(size=6)
            net.note_server(v)
            stored.append(v)
        for v in stored:
            assert net.server.span_residual(v) <= 1e-8 * np.linalg.norm(v)

    def test_fresh_network_counters(self):
        net = StarNetwork(3)
        snap = net.report_counters()
        assert snap == {"p_projections": 0, "pi_proxes": 0, "x_proxes": 0,
                        "rounds": 0}

    def test_trace_stream(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        net = StarNetwork(1, trace_path=str(path))
        net.exchange([np.zeros(2)], np.zeros(2), extra={"obj": 1.5})
        net.close()
        rec = json.loads(path.read_text().strip())
        assert rec["t"] == 1 and rec["rounds"] == 1
        assert rec["obj"] == 1.5
        assert "p_proj" in rec and "max_idx" in rec


class TestCommPolicy:
    def test_defaults(self):
        pol = CommPolicy.standard()
        assert pol.rounds_per_drao_iteration == 1
        assert pol.rounds_per_draos_phase == 2
        assert pol.rounds_per_sd_iteration == 1

    def test_positive_required(self):
        with pytest.raises(ValueError):
            CommPolicy(rounds_per_drao_iteration=0)

    def test_linear_graph_charges(self):
        pol = CommPolicy.linear_graph(4)
        assert pol.rounds_per_drao_iteration == 4
        assert pol.rounds_per_draos_phase == 4
        assert pol.rounds_per_sd_iteration == 2

    def test_document_states_policy(self):
        doc = CommPolicy.dpm_strict().document()
        assert doc["label"] == "dpm-strict"
        assert doc["rounds_per_drao_iteration"] == 2
