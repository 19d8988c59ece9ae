from dataclasses import replace

import pytest

from predalloc.core import InvalidInputError, Prediction
from predalloc.generators import INSTANCE4, LOGNORMAL, MANUAL1
from predalloc.harness import (
    SUMMARY_HEADER,
    SweepConfig,
    SweepReport,
    _floats,
    config_from_options,
    derive_seed,
    emit_report,
    parse_key_values,
    report_from_runs,
    run_single,
    run_sweep,
    runs_csv,
    summary_csv,
)

ETAS = tuple(round(0.1 * k, 10) for k in range(1, 11))


@pytest.fixture(scope="module")
def instance1_report():
    return run_sweep(SweepConfig(etas=ETAS, error_rates=(0.0,), repetitions=2, generator=MANUAL1))


def _cell(report, eta, err=0.0):
    return next(c for c in report.cells if c.eta == eta and c.error_rate == err)


def test_instance1_ratios(instance1_report):
    assert _cell(instance1_report, 0.1).mean >= 0.9
    assert _cell(instance1_report, 1.0).mean == pytest.approx(1030 / 3 / 500, abs=1e-9)
    assert all(c.half_width == 0 for c in instance1_report.cells)  # fixed instance, no noise at error 0


def test_summary_csv_header_and_rows(instance1_report):
    lines = summary_csv(instance1_report).splitlines()
    assert lines[0] == ",".join(SUMMARY_HEADER)
    assert len(lines) == 1 + len(ETAS)


def test_report_rebuilds_summary(instance1_report):
    again = report_from_runs(runs_csv(instance1_report))
    assert summary_csv(again) == summary_csv(instance1_report)


def test_sweep_is_deterministic_and_worker_independent():
    cfg = SweepConfig(
        etas=(0.0, 0.5, 1.0), error_rates=(0.0, 1.0), repetitions=3,
        generator=replace(INSTANCE4, buyers=10, items=15, d_bound=4), time_budget=1,
    )
    a = run_sweep(cfg)
    b = run_sweep(cfg)
    c = run_sweep(replace(cfg, workers=2))
    assert summary_csv(a) == summary_csv(b) == summary_csv(c)
    assert runs_csv(a) == runs_csv(c)
    # random_bounded draws a new instance per repetition
    assert len({r.opt for r in a.runs}) == 3


def test_single_cell_report(tmp_path):
    cfg = SweepConfig(etas=(0.5,), error_rates=(0.0,), repetitions=1, generator=MANUAL1)
    rep = run_sweep(cfg)
    assert len(summary_csv(rep).splitlines()) == 2
    assert rep.cells[0].half_width == 0
    paths = emit_report(rep, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["ratio.svg", "ratio_err0.svg", "runs.csv", "summary.csv"]
    svg = (tmp_path / "ratio.svg").read_text()
    assert svg.startswith("<?xml") and "</svg>" in svg


def test_emit_report_is_byte_stable(tmp_path, instance1_report):
    emit_report(instance1_report, tmp_path / "a")
    emit_report(instance1_report, tmp_path / "b")
    for name in ("summary.csv", "runs.csv", "ratio.svg", "ratio_err0.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_report_refused(tmp_path):
    with pytest.raises(InvalidInputError):
        emit_report(SweepReport("algo1", [], []), tmp_path)


@pytest.mark.parametrize(
    "kw",
    [
        {"etas": ()},
        {"error_rates": ()},
        {"repetitions": 0},
        {"etas": (1.5,)},
        {"algorithm": "nope"},
        {"generator": None},
        {"ci": "bootstrap"},
    ],
)
def test_invalid_configs(kw):
    cfg = replace(SweepConfig(generator=MANUAL1), **kw)
    with pytest.raises(InvalidInputError):
        cfg.validate()


def test_follow_prediction_with_infeasible_prediction(instance1):
    nums, audits = run_single(instance1, "follow_prediction", 0.5, Prediction((5, 5, 3, 4, 5)), 500.0)
    assert nums["p_value"] == 0 and not nums["p_feasible"]
    assert nums["ratio"] == pytest.approx(0.6)
    assert audits == {"primal_feasible": True, "consistency": True, "robustness": True, "ratio_le_one": True}


def test_algo2_eta_zero_warns_and_substitutes():
    from predalloc.generators import generate

    inst = generate(replace(LOGNORMAL, buyers=8, items=30))
    with pytest.warns(UserWarning):
        nums, audits = run_single(inst, "algo2", 0.0, Prediction.none(30), 1.0)
    assert nums["eta_used"] == pytest.approx(1e-3)


def test_algo1_audits_on_instance1(instance1):
    nums, audits = run_single(instance1, "algo1", 0.1, Prediction((1, 2, 3, 4, 5)), 500.0)
    assert audits["primal_feasible"] and audits["dual_feasible"]
    assert audits["consistency"] and audits["robustness"]
    assert nums["ratio"] == pytest.approx(0.92)


def test_derive_seed_is_stable_and_separates_cells():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    seeds = {derive_seed(0, a, b) for a in range(5) for b in range(5)}
    assert len(seeds) == 25
    assert derive_seed(1, 0) != derive_seed(0, 0)
    assert 0 <= derive_seed(2**40, 3) < 2**64


def test_float_grid_parsing():
    assert _floats("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert _floats("0.1, 0.5") == (0.1, 0.5)
    with pytest.raises(InvalidInputError):
        _floats("0:1")


def test_config_from_key_values():
    text = """
    # instance 4 style, small
    algorithm = waterfill_baseline
    preset = instance4
    buyers = 12
    d_bound = 6
    price-low = 20
    etas = 0:1:0.5
    error_rates = 0,1
    reps = 3
    """
    opts = parse_key_values(text.replace("reps", "repetitions"))
    assert opts["price_low"] == "20"
    cfg = config_from_options(opts)
    assert cfg.algorithm == "waterfill_baseline"
    assert cfg.generator.buyers == 12 and cfg.generator.price_range == (20.0, 100.0)
    assert cfg.etas == (0.0, 0.5, 1.0) and cfg.repetitions == 3
    with pytest.raises(InvalidInputError):
        parse_key_values("no equals sign")
    with pytest.raises(InvalidInputError):
        config_from_options({"preset": "instance9"})
    with pytest.raises(InvalidInputError):
        config_from_options({"preset": "instance1", "repetitions": "many"})
