import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from muxdeembed.campaign import make_scenario, simulate_campaign
from muxdeembed.estimator import EstimatorSettings, estimate
from muxdeembed.fileio import (
    ParseError,
    SchemaError,
    TouchstoneDocument,
    load_campaign,
    load_report,
    load_scenario,
    parse_touchstone,
    read_touchstone,
    save_campaign,
    save_report,
    save_scenario,
    write_touchstone,
)
from muxdeembed.tln import step2_series

ONE_PORT = """! one port
# GHz S MA R 50
1.0 0.5 90
2.0 0.25 -90
"""

TWO_PORT = """# MHz S RI R 50
100 0.1 0.0 0.2 0.0 0.3 0.0 0.4 0.0
"""


def test_one_port_ma():
    doc = parse_touchstone(ONE_PORT)
    assert doc.n_ports == 1 and doc.format == "MA" and doc.reference_impedance == 50
    assert doc.comments == ["one port"]
    (f0, s0), (f1, s1) = doc.frequency_points
    assert f0 == 1e9 and f1 == 2e9
    assert s0[0, 0] == pytest.approx(0.5j, abs=1e-15)
    assert s1[0, 0] == pytest.approx(-0.25j, abs=1e-15)


def test_two_port_order():
    (f, s), = parse_touchstone(TWO_PORT).frequency_points
    assert f == 1e8
    # S11 S21 S12 S22
    np.testing.assert_array_equal(s, [[0.1, 0.3], [0.2, 0.4]])


def test_db_format():
    doc = parse_touchstone("# Hz S DB R 75\n1 -20 180\n")
    assert doc.frequency_points[0][1][0, 0] == pytest.approx(-0.1, abs=1e-15)
    assert doc.reference_impedance == 75


def test_three_port_layout():
    s = np.arange(9).reshape(3, 3) + 0.5j
    doc = TouchstoneDocument(3, [(1.0, s)])
    text = write_touchstone(doc)
    lines = text.splitlines()
    assert len(lines) == 4
    assert [len(line.split()) for line in lines[1:]] == [7, 6, 6]
    np.testing.assert_array_equal(parse_touchstone(text).frequency_points[0][1], s)


def test_five_port_wraps_rows():
    s = np.ones((5, 5)) * 0.1
    text = write_touchstone(TouchstoneDocument(5, [(1.0, s)]))
    counts = [len(line.split()) for line in text.splitlines()[1:]]
    assert counts == [9, 2] + [8, 2] * 4


@pytest.mark.parametrize("text", [
    "1 0.5 0\n",  # no option line
    "# GHz S RI\n1 0.5 0\n",  # missing R
    "# GHz RI R 50\n1 0.5 0\n",  # missing S
    "# GHz S RI R 50 R 50\n1 0.5 0\n",
    "# GHz Z RI R 50\n1 0.5 0\n",
    "# GHz S RI R 50\n1 0.5\n",
    "# GHz S RI R 50\n2 0.5 0\n1 0.5 0\n",
    "# GHz S RI R 50\n1 nan 0\n",
    "# GHz S RI R 50\n[Version] 2.0\n",
    "# GHz S RI R -5\n1 0.5 0\n",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_touchstone(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        parse_touchstone("# GHz S RI R 50\n1 0.5 0\n2 0.5 x\n")
    assert exc.value.line == 3 and exc.value.column == 7


def _random_doc(rng, n, n_f, fmt):
    freqs = np.cumsum(rng.uniform(1, 1e9, n_f))
    pts = [(float(f), rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) for f in freqs]
    return TouchstoneDocument(n, pts, fmt, float(rng.choice([50.0, 75.0, 1.5])), ["random"])


@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_round_trip_ri_exact(n, n_f, seed):
    doc = _random_doc(np.random.default_rng(seed), n, n_f, "RI")
    text = write_touchstone(doc)
    again = parse_touchstone(text)
    assert again.n_ports == n and again.reference_impedance == doc.reference_impedance
    for (f, s), (g, t) in zip(doc.frequency_points, again.frequency_points):
        assert f == g
        assert np.max(np.abs(s - t)) <= 1e-12
    assert write_touchstone(again) == text


@given(st.integers(1, 8), st.sampled_from(["MA", "DB"]), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_round_trip_polar(n, fmt, seed):
    doc = _random_doc(np.random.default_rng(seed), n, 2, "RI")
    again = parse_touchstone(write_touchstone(doc, fmt))
    for (_, s), (_, t) in zip(doc.frequency_points, again.frequency_points):
        assert np.max(np.abs(s - t)) <= 1e-12 * max(1, np.max(np.abs(s)))


@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_mutation_fuzz(n, seed, data):
    text = write_touchstone(_random_doc(np.random.default_rng(seed), n, 2, "RI"))
    lines = text.splitlines()
    idx = data.draw(st.integers(1, len(lines) - 1))  # skip the comment line
    toks = lines[idx].split()
    k = data.draw(st.integers(0, len(toks) - 1))
    if data.draw(st.booleans()):
        toks[k] = data.draw(st.sampled_from(["abc", "1.0.0", "--1", "0x", "inf", "NaN"]))
    else:
        del toks[k]
    lines[idx] = " ".join(toks)
    with pytest.raises(ParseError):
        parse_touchstone("\n".join(lines) + "\n", n_ports=n)


def test_read_touchstone_uses_extension(tmp_path):
    doc = _random_doc(np.random.default_rng(0), 4, 3, "RI")
    path = tmp_path / "x.s4p"
    path.write_text(write_touchstone(doc))
    assert read_touchstone(path).n_ports == 4


def test_document_validation():
    with pytest.raises(ValueError):
        TouchstoneDocument(2, [(1.0, np.eye(3))])
    with pytest.raises(ValueError):
        TouchstoneDocument(1, [(2.0, np.eye(1)), (1.0, np.eye(1))])


@pytest.fixture(scope="module")
def noisy():
    scen = make_scenario(4, 8, seed=4, snr_db=40, ota_knowledge_error_db=30)
    return scen


def _same_campaign(a, b):
    assert a.configs == b.configs and a.tx == b.tx and a.rx == b.rx and a.n_s == b.n_s
    assert a.noise_sigma == b.noise_sigma and a.snr_db == b.snr_db
    assert a.ota_knowledge_error_db == b.ota_knowledge_error_db
    for x, y in zip(a.h_meas, b.h_meas):
        assert x.tobytes() == y.tobytes()
    for x, y in zip(a.pf_known, b.pf_known):
        for blk in ("s_aa", "s_as", "s_sa", "s_ss"):
            assert getattr(x, blk).tobytes() == getattr(y, blk).tobytes()


@pytest.mark.parametrize("p", [0, 1, 30])
def test_campaign_round_trip_bit_identical(tmp_path, noisy, p):
    camp = simulate_campaign(noisy, step2_series(4, max(p, 1), 0)).prefix(p)
    path = tmp_path / "c.json"
    save_campaign(path, camp, noisy)
    back, scen = load_campaign(path)
    _same_campaign(camp, back)
    assert scen.s_ota.entries.tobytes() == noisy.s_ota.entries.tobytes()
    assert scen.s_dut_true.entries.tobytes() == noisy.s_dut_true.entries.tobytes()
    assert scen.hw == noisy.hw and scen.partition == noisy.partition


def test_campaign_noise_free_infinite_levels(tmp_path):
    scen = make_scenario(2, 2, 0)
    camp = simulate_campaign(scen, step2_series(2, 3, 0))
    save_campaign(tmp_path / "c.json", camp)
    back, none = load_campaign(tmp_path / "c.json")
    assert none is None and math.isinf(back.snr_db) and back.noise_sigma is None
    _same_campaign(camp, back)


def test_scenario_round_trip(tmp_path, noisy):
    save_scenario(tmp_path / "s.json", noisy)
    back = load_scenario(tmp_path / "s.json")
    assert back.seed == noisy.seed and back.snr_db == noisy.snr_db
    assert back.s_ota.entries.tobytes() == noisy.s_ota.entries.tobytes()


def test_schema_errors(tmp_path, noisy):
    camp = simulate_campaign(noisy, step2_series(4, 2, 0))
    path = tmp_path / "c.json"
    save_campaign(path, camp)
    text = path.read_text()
    doc = json.loads(text)

    def check(mut):
        path.write_text(mut)
        with pytest.raises(SchemaError):
            load_campaign(path)

    check(text[: len(text) // 2])
    check(json.dumps({**doc, "schema_version": 0}))
    check(json.dumps({**doc, "configs": doc["configs"][:1]}))
    check(json.dumps({**doc, "configs": ["TT", "TTTT"]}))
    check(json.dumps({k: v for k, v in doc.items() if k != "h_meas"}))
    check(text.replace(repr(float(camp.h_meas[0][0, 0].real)), "NaN", 1))
    check(json.dumps({**doc, "tx": [0, 99]}))
    check("[]")


def test_report_round_trip(tmp_path):
    scen = make_scenario(2, 2, 0)
    camp = simulate_campaign(scen, step2_series(2, 2, 0))
    rep = estimate(camp, EstimatorSettings(max_iters=50, n_restarts=2))
    save_report(tmp_path / "r.json", rep, {"mse": 0.5}, tmp_path / "t.csv")
    back = load_report(tmp_path / "r.json")
    np.testing.assert_array_equal(back["theta_hat"], rep.theta_hat)
    assert back["mse"] == 0.5 and back["final_loss"] == rep.final_loss
    trace = (tmp_path / "t.csv").read_text().splitlines()
    assert trace[0] == "iteration,loss" and len(trace) == len(rep.loss_trace) + 1
