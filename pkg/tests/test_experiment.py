import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from cvna import experiment
from cvna.cli import main
from cvna.experiment import (
    CELL_COLUMNS,
    CellError,
    RunConfig,
    cvna_ratio,
    derive_seed,
    load_config,
    run_cell,
    run_sweep,
    size_scan,
    write_outputs,
)

SMALL = RunConfig(n=300, degrees=(20, 598), leverages=(2.0,), rhos=(0.0, 0.3),
                  n_shock_samples=20, n_network_instances=2)


def test_config_defaults_are_desk_scale():
    cfg = RunConfig()
    assert cfg.n == 2000
    assert cfg.n_realizations == 1000
    big = cfg.full_scale()
    assert (big.n, big.n_realizations) == (10_000, 5000)


@pytest.mark.parametrize(
    "field,value",
    [("degrees", ()), ("degrees", (3,)), ("leverages", ()), ("rhos", (1.0,)), ("modes", ("plot",)),
     ("n_shock_samples", 0), ("probs", (0.5, 0.5, 0.5)), ("limit_convention", "other")],
)
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        replace(RunConfig(), **{field: value})


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('n = 500\ndegrees = [10, 20]\nleverages = [1.5]\nrhos = [0.1]\n'
                    'modes = ["simulate"]\nmaster_seed = 9\n')
    cfg = load_config(path)
    assert cfg.n == 500 and cfg.degrees == (10, 20) and cfg.master_seed == 9
    assert cfg.modes == ("simulate",)


def test_unknown_config_key_is_an_error(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("n = 500\nnetwork_size = 3\n")
    with pytest.raises(ValueError, match="network_size"):
        load_config(path)


def test_derived_seeds_are_distinct_and_stable():
    a = derive_seed(1, 1, 0, 5).generate_state(4)
    assert np.array_equal(a, derive_seed(1, 1, 0, 5).generate_state(4))
    others = [derive_seed(1, 1, 0, 6), derive_seed(1, 1, 1, 5), derive_seed(2, 1, 0, 5),
              derive_seed(1, 0, 0, 5)]
    assert all(not np.array_equal(a, o.generate_state(4)) for o in others)


def test_cvna_ratio():
    assert cvna_ratio(0.28, 0.02) == pytest.approx(14.0)
    assert cvna_ratio(0.02, 0.02) == 1.0
    assert cvna_ratio(1.0, 0.09) == pytest.approx(11.11, abs=0.01)
    with pytest.raises(ZeroDivisionError):
        cvna_ratio(0.1, 0.0)


def test_zero_leverage_cell():
    s = run_cell(replace(SMALL, n_shock_samples=100), 20, 0.0, 0.0)
    assert s.triggered_fraction == 0.0
    assert abs(s.q_mean - 0.02) <= 3 * s.q_std_error
    assert math.isnan(s.q_median_triggered)
    assert s.q_limit == 0.02


def test_supercritical_cell_defaults_everyone():
    cfg = RunConfig(n=2000, leverages=(14.0,), rhos=(0.0,), modes=("simulate", "limit"))
    s = run_cell(cfg, 2000, 14.0, 0.0)
    assert s.q_mean > 0.99
    assert s.q_limit == 1.0


def test_complete_network_is_all_or_nothing():
    # every bank sees the same count of initial defaults, so the run cascades
    # exactly when that count reaches the middle class threshold (36 of 1999)
    cfg = RunConfig(n=2000, leverages=(14.0,), rhos=(0.0,), n_shock_samples=100,
                    modes=("simulate",))
    s = run_cell(cfg, 3998, 14.0, 0.0)
    assert set(np.round(s.q_values[s.triggered], 12)) <= {1.0}
    p_cascade = stats.binom.sf(35, 2000, 0.02)
    se = math.sqrt(p_cascade * (1 - p_cascade) / s.n_realizations)
    assert abs(s.triggered_fraction - p_cascade) < 4 * se


def test_cell_errors_name_the_cell():
    with pytest.raises(CellError, match="k=1000"):
        run_cell(SMALL, 1000, 2.0, 0.0)


def test_summary_statistics():
    s = run_cell(SMALL, 20, 8.0, 0.3)
    assert s.n_realizations == 40
    assert 0.0 <= s.triggered_fraction <= 1.0
    assert s.histogram.sum() == 40
    assert s.q_mean >= 0.02 - 3 * max(s.q_std_error, 1e-3)
    hit = s.q_values[s.triggered]
    if hit.size:
        assert s.q_median_triggered == np.median(hit)
        assert (hit > 0).all()


def test_empty_sweep_writes_header_only(tmp_path):
    write_outputs([], SMALL, tmp_path)
    assert (tmp_path / "cells.csv").read_text() == ",".join(CELL_COLUMNS) + "\n"


def test_one_cell_output(tmp_path):
    s = run_cell(SMALL, 20, 2.0, 0.3)
    paths = write_outputs([s], SMALL, tmp_path)
    lines = paths["cells"].read_text().splitlines()
    assert len(lines) == 2
    row = dict(zip(CELL_COLUMNS, lines[1].split(",")))
    assert row["k"] == "20" and row["n_realizations"] == "40"
    hist = json.loads((tmp_path / "hist_20_2_0.3.json").read_text())
    assert sum(hist["counts"]) == 40
    assert len(hist["counts"]) == 100 and len(hist["bin_edges"]) == 101
    echo = json.loads((tmp_path / "config_echo.json").read_text())
    assert echo["config"]["master_seed"] == SMALL.master_seed


def test_rerun_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        write_outputs(run_sweep(SMALL), SMALL, tmp_path / sub)
    assert (tmp_path / "a" / "cells.csv").read_bytes() == (tmp_path / "b" / "cells.csv").read_bytes()
    other = replace(SMALL, master_seed=SMALL.master_seed + 1)
    write_outputs(run_sweep(other), other, tmp_path / "c")
    assert (tmp_path / "a" / "cells.csv").read_bytes() != (tmp_path / "c" / "cells.csv").read_bytes()


def test_size_scan_uses_complete_networks_below_threshold():
    cfg = replace(SMALL, sizes=(300, 800), leverages=(0.2,), rhos=(0.0,), n_shock_samples=50)
    out = size_scan(cfg)
    assert [s.k for s in out] == [598, 1598]
    for s in out:
        assert s.triggered_fraction == 0.0
        assert abs(s.q_mean - 0.02) <= 3 * s.q_std_error
        assert s.q_limit == 0.02


def test_size_scan_approaches_the_uncorrelated_limit():
    cfg = replace(SMALL, sizes=(300, 800, 2000), leverages=(8.0,), rhos=(0.0,),
                  n_shock_samples=100, n_network_instances=1)
    q = [s.q_mean for s in size_scan(cfg)]
    assert q[0] > q[1] > q[2]
    assert abs(q[2] - 0.02) < 0.01


def test_subcritical_excess_shrinks_with_degree():
    cfg = RunConfig(n=2000, leverages=(4.0,), rhos=(0.0,), n_shock_samples=40,
                    modes=("simulate",))
    ks = (20, 100, 500, 3998)
    excess = [run_cell(cfg, k, 4.0, 0.0).q_mean - 0.02 for k in ks]
    slope = np.polyfit(np.log(ks), excess, 1)[0]
    assert slope < 0
    assert abs(excess[-1]) < 0.005


def test_analytic_and_limit_tables():
    cfg = replace(SMALL, leverages=(8.0,), rhos=(0.0, 0.1))
    rows = experiment.limit_table(cfg)
    assert rows[0]["regime"] == "subcritical" and rows[0]["q_limit"] == 0.02
    assert rows[1]["q_limit"] == pytest.approx(0.28, abs=0.005)
    a = experiment.analytic_table(replace(cfg, degrees=(20,)))
    assert [r["method"] for r in a] == ["truncated-enumeration", "monotone"]


# --------------------------------------------------------------------- CLI
def run_cli(*argv):
    return main(list(argv))


def test_cli_pmf(capsys):
    assert run_cli("pmf", "--counts", "2,0,0", "--probs", "0.5,0.3,0.2") == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.25)
    run_cli("pmf", "--counts", "2,0,0", "--probs", "0.5,0.3,0.2", "--rho", "0.3")
    assert 0.25 < float(capsys.readouterr().out) < 0.5


def test_cli_limit(tmp_path, capsys):
    run_cli("limit", "--out", str(tmp_path), "--leverages", "8", "--rhos", "0,0.1")
    text = (tmp_path / "limits.csv").read_text()
    assert text.startswith("leverage,rho,q_limit,regime,convention\n")
    assert "8.0,0.0,0.02,subcritical," in text


def test_cli_analytic(tmp_path):
    run_cli("analytic", "--out", str(tmp_path), "--degrees", "20", "--leverages", "2",
            "--rhos", "0")
    lines = (tmp_path / "analytic.csv").read_text().splitlines()
    assert lines[0] == "k,leverage,rho,q_expected,method,error_bound"
    assert len(lines) == 2


def test_cli_simulate_with_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('n = 200\ndegrees = [10]\nleverages = [4.0]\nrhos = [0.3]\n'
                   'n_shock_samples = 10\nn_network_instances = 1\n')
    run_cli("simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3")
    lines = (tmp_path / "o" / "cells.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("10,4.0,0.3,200,10,")
    echo = json.loads((tmp_path / "o" / "config_echo.json").read_text())
    assert echo["config"]["master_seed"] == 3


def test_cli_size_scan(tmp_path, capsys):
    run_cli("size-scan", "--out", str(tmp_path), "--sizes", "50,80", "--leverages", "0.2",
            "--rhos", "0")
    assert "n=    80" in capsys.readouterr().out
    assert len((tmp_path / "cells.csv").read_text().splitlines()) == 3


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit):
        run_cli("plot")


def test_cli_full_scale_flag_and_alias():
    from cvna.cli import _resolve, build_parser

    for flag in ("--full-scale", "--paper-scale"):
        cfg = _resolve(build_parser().parse_args(["limit", flag]))
        assert (cfg.n, cfg.n_realizations) == (10_000, 5000)
