import io
import json
import subprocess
import sys

import pytest

from enrolcast_bridge.residual import ResidualLinear
from enrolcast_bridge.server import handle_request, serve
from enrolcast_bridge.spec import BridgeError, BridgeModelSpec
from enrolcast_bridge.stubs import stub_model
from enrolcast_bridge.models import load_model

BRIDGE = [sys.executable, "-m", "enrolcast_bridge"]
HISTORY = [[2007 + i, 4000.0 + 120.5 * i] for i in range(12)]


def request_doc(request_id="r-1", horizon=1, levels=(0.1, 0.5, 0.9), covariates=None):
    return {
        "request_id": request_id,
        "series_id": "domestic",
        "target_history": HISTORY,
        "covariate_history": covariates or {},
        "horizon": horizon,
        "quantile_levels": list(levels),
    }


class BridgeProcess:
    def __init__(self, *args):
        self.proc = subprocess.Popen(
            BRIDGE + list(args),
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
            text=True, bufsize=1,
        )
        self.handshake = json.loads(self.proc.stdout.readline())

    def ask(self, doc):
        self.proc.stdin.write(json.dumps(doc) + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def send_raw(self, line):
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return self.proc.stdout.readline()

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)


@pytest.fixture
def persistence_bridge():
    b = BridgeProcess("--family", "stub-persistence")
    yield b
    b.close()


class TestHandshake:
    def test_announces_protocol_and_covariate_support(self, persistence_bridge):
        h = persistence_bridge.handshake
        assert h["protocol"] == "enrolcast-adapter/1"
        assert h["name"] == "stub-persistence"
        assert h["supports_covariates"] is False
        assert h["sample_paths"] == 256

    def test_residual_mode_announces_covariate_support(self):
        b = BridgeProcess("--family", "stub-persistence", "--covariate-mode", "residual-linear")
        try:
            assert b.handshake["supports_covariates"] is True
            assert b.handshake["covariate_mode"] == "residual-linear"
        finally:
            b.close()

    def test_unavailable_family_fails_handshake_and_exit(self):
        proc = subprocess.Popen(
            BRIDGE + ["--family", "chronos-bolt", "--size", "tiny"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
            text=True,
        )
        line = proc.stdout.readline()
        out, _ = proc.communicate(timeout=30)
        doc = json.loads(line)
        assert "error" in doc
        assert proc.returncode != 0


class TestSpec:
    def test_family_capability_table_enforced(self):
        with pytest.raises(BridgeError):
            BridgeModelSpec(family="chronos-bolt", covariate_mode="native")
        with pytest.raises(BridgeError):
            BridgeModelSpec(family="chronos-2", covariate_mode="residual-linear")
        assert BridgeModelSpec(family="moirai").covariate_mode == "native"
        assert BridgeModelSpec(family="timesfm").covariate_mode == "residual-linear"

    def test_unknown_family(self):
        with pytest.raises(BridgeError):
            BridgeModelSpec(family="prophet")


class TestStubForecasts:
    def test_constant_history_smoke_contract(self, persistence_bridge):
        doc = persistence_bridge.ask(request_doc(horizon=3))
        assert len(doc["steps"]) == 3
        for step in doc["steps"]:
            vals = [step["quantiles"][k] for k in sorted(step["quantiles"], key=float)]
            assert vals == sorted(vals)
            assert all(isinstance(v, float) for v in vals)

    def test_arbitrary_quantile_level_lists(self, persistence_bridge):
        levels = (0.033, 0.2, 0.41, 0.77, 0.985)
        doc = persistence_bridge.ask(request_doc(levels=levels))
        got = {float(k) for k in doc["steps"][0]["quantiles"]}
        assert got == set(levels)

    def test_noisy_stub_seeded_reproducible(self):
        b1 = BridgeProcess("--family", "stub-noisy-persistence", "--seed", "7")
        b2 = BridgeProcess("--family", "stub-noisy-persistence", "--seed", "7")
        b3 = BridgeProcess("--family", "stub-noisy-persistence", "--seed", "8")
        try:
            r1 = b1.ask(request_doc())
            r2 = b2.ask(request_doc())
            r3 = b3.ask(request_doc())
            assert r1 == r2
            assert r1 != r3
        finally:
            b1.close(); b2.close(); b3.close()

    def test_deterministic_across_repeats(self, persistence_bridge):
        r1 = persistence_bridge.ask(request_doc(request_id="a"))
        r2 = persistence_bridge.ask(request_doc(request_id="a"))
        assert r1 == r2


class TestPersistenceStubMatchesPrimaryBaseline:
    def test_bit_for_bit_against_primary(self, persistence_bridge):
        from enrolcast.baselines import persistence_forecast

        levels = (0.1, 0.5, 0.9)
        doc = persistence_bridge.ask(request_doc(horizon=2, levels=levels))
        expected = persistence_forecast(
            [v for _, v in HISTORY], horizon=2, quantile_levels=levels
        )
        assert len(doc["steps"]) == len(expected.steps)
        for got, want in zip(doc["steps"], expected.steps):
            assert got["point"] == want.point  # bitwise float equality
            for lv in levels:
                assert got["quantiles"][repr(lv)] == want.quantiles[lv]

    def test_engine_adapter_route_matches_in_process(self):
        from enrolcast.adapters import (
            AdapterDescriptor,
            ChildProcessAdapter,
            ForecastRequest,
            PersistenceAdapter,
            forecast,
        )

        req = ForecastRequest(
            request_id="r-42",
            series_id="domestic",
            target_history=tuple((y, v) for y, v in HISTORY),
            covariate_history={},
            horizon=2,
            quantile_levels=(0.1, 0.5, 0.9),
        )
        child = ChildProcessAdapter(
            AdapterDescriptor(
                name="bridge-persistence",
                transport="child-process",
                command=" ".join(BRIDGE + ["--family", "stub-persistence"]),
                timeout_seconds=60,
            )
        )
        try:
            via_bridge = forecast(child, req)
        finally:
            child.close()
        in_process = forecast(PersistenceAdapter(), req)
        assert via_bridge.steps == in_process.steps


class TestResidualLinearMode:
    def test_empty_covariates_equal_covariate_free_reply(self):
        b = BridgeProcess("--family", "stub-persistence", "--covariate-mode", "residual-linear")
        try:
            bare = b.ask(request_doc(request_id="x"))
            empty = b.ask(request_doc(request_id="x", covariates={}))
            assert bare["steps"] == empty["steps"]
        finally:
            b.close()

    def test_covariates_shift_the_forecast(self):
        base = stub_model(BridgeModelSpec(family="stub-persistence"))
        wrapped = ResidualLinear(base)
        history = [(2000 + t, 10.0 + 2.0 * t) for t in range(10)]
        cov = {"year": [(2000 + t, float(2000 + t)) for t in range(10)]}
        steps = wrapped.predict(history, cov, 1, [0.5])
        # persistence under-forecasts a linear trend by the slope
        assert steps[0]["point"] == pytest.approx(10.0 + 2.0 * 9 + 2.0, abs=1e-6)

    def test_zero_covariates_no_op(self):
        base = stub_model(BridgeModelSpec(family="stub-persistence"))
        wrapped = ResidualLinear(base)
        history = [(2000 + t, 10.0 + 2.0 * t) for t in range(10)]
        cov = {"z": [(2000 + t, 0.0) for t in range(10)]}
        assert wrapped.predict(history, cov, 1, [0.5]) == base.predict(history, {}, 1, [0.5])


def fuzz_frames(n=1000):
    """Deterministic malformed traffic: broken json, wrong shapes, junk.

    Frames are never blank: the protocol skips blank lines without replying,
    so a reply is owed for every frame produced here.
    """
    import random

    rng = random.Random(12345)
    frames = []
    junk_pool = [
        '""', "{", "}", "[]", "null", "true", "1e309", '"text"',
        '{"request_id": 1}', '{"target_history": "nope"}',
        '{"request_id": "r", "target_history": []}',
        '{"request_id": "r", "target_history": [[2020]]}',
        '{"request_id": "r", "target_history": [["a", "b"]]}',
        '{"request_id": "r", "target_history": [[2020, 1.0]], "horizon": 0}',
        '{"request_id": "r", "target_history": [[2020, 1.0]], "horizon": "x"}',
        '{"request_id": "r", "target_history": [[2020, 1.0]], "quantile_levels": [2.0]}',
        '{"request_id": "r", "target_history": [[2020, 1.0]], "covariate_history": 5}',
    ]
    for i in range(n):
        pick = rng.random()
        if pick < 0.4:
            frames.append(rng.choice(junk_pool))
        elif pick < 0.7:
            frames.append("".join(chr(rng.randint(33, 126)) for _ in range(rng.randint(1, 60))))
        else:
            doc = request_doc(request_id=f"f-{i}")
            victim = rng.choice(["target_history", "horizon", "quantile_levels"])
            doc[victim] = rng.choice([None, "garbage", 3.14, {"a": 1}, [[None, None]]])
            frames.append(json.dumps(doc))
    return frames


class TestProtocolFuzzing:
    def test_thousand_malformed_frames_zero_crashes_in_process(self):
        spec = BridgeModelSpec(family="stub-persistence")
        frames = fuzz_frames(1000)
        stdin = io.StringIO("\n".join(frames) + "\n")
        stdout = io.StringIO()
        code = serve(spec, stdin=stdin, stdout=stdout)
        assert code == 0
        lines = stdout.getvalue().strip().splitlines()
        assert len(lines) == 1 + 1000  # handshake + one reply per frame
        for line in lines[1:]:
            doc = json.loads(line)
            assert "error" in doc or "steps" in doc

    def test_subprocess_survives_garbage_then_serves(self, persistence_bridge):
        for frame in fuzz_frames(60):
            reply = persistence_bridge.send_raw(frame)
            assert reply, "server must answer every frame"
        doc = persistence_bridge.ask(request_doc())
        assert doc["steps"][0]["point"] == HISTORY[-1][1]
        assert persistence_bridge.proc.poll() is None


class TestHandleRequestUnit:
    def test_valid_request(self):
        model = load_model(BridgeModelSpec(family="stub-persistence"))
        reply = handle_request(model, request_doc())
        assert reply["steps"][0]["point"] == HISTORY[-1][1]

    def test_error_reply_carries_request_id(self):
        model = load_model(BridgeModelSpec(family="stub-persistence"))
        reply = handle_request(model, {"request_id": "zz", "target_history": []})
        assert reply["request_id"] == "zz"
        assert reply["error"]["type"] == "inference-failure"
