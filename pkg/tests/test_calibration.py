import json
from pathlib import Path
from dataclasses import replace

import jsonschema
import numpy as np
import pytest

from snn_hfo import calibration as cal
from snn_hfo import synth
from snn_hfo.errors import NoAdmissibleConfig
from snn_hfo.network import Network, NetworkConfig, Population


@pytest.fixture(scope="module")
def corpus():
    return synth.generate_corpus(3, 3, 21)


def _point(**kw):
    p = dict(gi_refractory=5e-3, gi_tau_mem=2.5e-4, gi_threshold=0.3, poiss_gi_weight=19.0,
             di_refractory=3.3e-4, di_tau_mem=2.2e-4, di_threshold=140.0,
             sl_refractory=5e-4, sl_tau_mem=3.5e-4, sl_threshold=28.0)
    p.update(kw)
    return p


def test_grid_iterates_in_axis_order():
    g = cal.CalibrationGrid(gi_threshold=(1.0, 2.0), sl_threshold=(5.0, 6.0, 7.0))
    pts = list(g)
    assert g.size == 6 == len(pts)
    # first axis outermost, last axis fastest
    assert [(p["gi_threshold"], p["sl_threshold"]) for p in pts] == [
        (1.0, 5.0), (1.0, 6.0), (1.0, 7.0), (2.0, 5.0), (2.0, 6.0), (2.0, 7.0)]


def test_grid_dict_round_trip():
    g = cal.CalibrationGrid(di_threshold=(100.0, 150.0))
    assert cal.CalibrationGrid.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        cal.CalibrationGrid.from_dict({"bogus": [1]})


def test_identical_classes_have_no_admissible_point(corpus):
    hfos = corpus.of_kind(synth.Kind.HFO)
    twins = [replace(s, spec=replace(s.spec, kind=synth.Kind.TRANSIENT, hfo_duration=s.spec.hfo_duration))
             for s in hfos]
    fake = synth.Corpus(hfos + twins, corpus.base_seed)
    grid = cal.CalibrationGrid(sl_threshold=(5.0, 28.0, 1e4))
    with pytest.raises(NoAdmissibleConfig):
        cal.calibrate_unknowns(fake, grid)


def test_unreachable_threshold_detects_nothing(corpus):
    prep = cal.prepare_corpus(corpus, NetworkConfig())
    rep = cal.evaluate_point(_point(sl_threshold=1e6), prep, NetworkConfig(), early_exit=False)
    assert rep.hfo_detected == 0 and rep.transient_detected == 0 and not rep.admissible


def test_first_admissible_point_in_order_is_returned(corpus):
    prep = cal.prepare_corpus(corpus, NetworkConfig())
    grid = cal.CalibrationGrid(**{k: (v,) for k, v in _point().items()})
    grid = replace(grid, sl_threshold=(1e6, 28.0, 27.0))
    reports = [cal.evaluate_point(p, prep, NetworkConfig(), early_exit=False) for p in grid]
    ok = [i for i, r in enumerate(reports) if r.admissible]
    if not ok:
        with pytest.raises(NoAdmissibleConfig):
            cal.calibrate_unknowns(corpus, grid, prepared=prep)
        return
    res = cal.calibrate_unknowns(corpus, grid, prepared=prep)
    full = [i for i in ok if reports[i].silenced_all]
    if full:
        assert res.grid_index == full[0]
    else:
        best = max(reports[i].hfo_silenced for i in ok)
        assert res.grid_index == next(i for i in ok if reports[i].hfo_silenced == best)


def test_prepared_snippets_have_support_for_events(corpus):
    prep = cal.prepare_corpus(corpus, NetworkConfig())
    for p in prep:
        assert p.support is not None
        assert p.container_tick <= p.support[0] <= p.support[1] < p.n_ticks


def _result(corpus):
    p = _point()
    rep = cal.GridPointReport(p, 3, 3, 0, 3, 0, 0, 3, 130.0)
    return cal.CalibrationResult(cal.calibration_from_point(p), p, 0, rep, 1,
                                 cal.CalibrationGrid(), corpus.base_seed)


def test_save_and_load(tmp_path, corpus):
    path = cal.save_calibration(_result(corpus), tmp_path / "c.json")
    d = json.loads(path.read_text())
    assert d["schema"] == cal.SCHEMA and d["search"]["axes_order"] == list(cal.AXES)
    back = cal.load_calibration(path)
    assert back.poiss_gi_weight == 19.0
    assert back.neuron[Population.DIS_INHIBITORY].i_threshold == 140.0


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("poiss_gi_weight_fa"),
    lambda d: d["neuron"].pop("second_layer"),
    lambda d: d["neuron"].update(extra=d["neuron"]["second_layer"]),
    lambda d: d["neuron"]["dis_inhibitory"].update(tau_mem=-1.0),
    lambda d: d.update(schema="other"),
])
def test_schema_rejects_bad_files(tmp_path, corpus, mutate):
    d = _result(corpus).to_dict()
    mutate(d)
    with pytest.raises(jsonschema.ValidationError):
        cal.calibration_from_dict(d)


# --- dis-inhibition contract with the shipped calibration ---------------------

BUILTIN = Path(cal.__file__).with_name("data") / "default_calibration.json"


@pytest.fixture(scope="module")
def gi_gaps():
    """Longest global-inhibitory silence overlapping each default-corpus snippet (s)."""
    base = NetworkConfig()
    net = Network(base.with_calibration(cal.load_calibration(BUILTIN)))
    out = {synth.Kind.HFO: [], synth.Kind.TRANSIENT: []}
    for prep in cal.prepare_corpus(synth.generate_corpus(11, 11, 0), base):
        gi = net.run(prep.up, prep.dn, prep.duration, drive=prep.drive).ticks_of(Population.GLOBAL_INHIBITORY)
        edges = np.concatenate([[0], gi, [prep.n_ticks]])
        keep = edges[1:] > prep.container_tick
        out[prep.kind].append(float(np.max(np.diff(edges)[keep])) * base.tick)
    return out


def test_builtin_calibration_opens_gi_gap_on_every_hfo(gi_gaps):
    assert min(gi_gaps[synth.Kind.HFO]) >= 10e-3


def test_builtin_calibration_keeps_gi_busy_through_transients(gi_gaps):
    assert max(gi_gaps[synth.Kind.TRANSIENT]) < 5e-3
