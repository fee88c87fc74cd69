import hashlib
import json
import math
from pathlib import Path

import pytest

from distcaputo.cli import main
from distcaputo.errors import ParseError, ValidationError
from distcaputo.scenario import parse_scenario, parse_scenario_text

SCEN = Path(__file__).resolve().parents[1] / "scenarios"

SMALL = """
name: small
weight: {kind: indicator, lo: 0.6, hi: 0.8}
grid: {M: 64}
modes: 2
checks: [resolvent, kernel_bound, energy_identity, energy_estimate, coercivity, weak_residual]
"""


def test_minimal_scenario_defaults():
    sc = parse_scenario_text("weight: {kind: uniform}\n")
    assert sc.grid.T == 1.0 and sc.grid.M == 256 and sc.grid.q is None
    assert sc.domain.kind == "interval" and math.isclose(sc.domain.lengths[0], math.pi)
    assert sc.modes == 4 and sc.mollification == "auto"
    assert sc.initial == "sqrt(2/L)*sin(pi*x/L)"
    assert sc.checks == ("resolvent", "energy_identity", "coercivity", "continuity")


def test_shipped_scenarios_parse():
    names = {p.stem for p in SCEN.glob("*.yaml")}
    assert {"heat", "forced", "m_regime", "manufactured"} <= names
    for p in SCEN.glob("*.yaml"):
        assert parse_scenario(p).digest == hashlib.sha256(p.read_bytes()).hexdigest()


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as exc:
        parse_scenario_text("weight: {kind: uniform}\nsource: \"sin(x) +* 2\"\n")
    assert (exc.value.line, exc.value.column) == (2, 18)
    with pytest.raises(ParseError) as exc:
        parse_scenario_text("weight: {kind: uniform}\nbogus: 1\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        parse_scenario_text("weight: [unclosed\n")


def test_validation_errors():
    with pytest.raises(ValidationError) as exc:
        parse_scenario_text("weight: {kind: uniform, value: 0}\n")
    assert exc.value.field == "weight mass"
    with pytest.raises(ValidationError) as exc:
        parse_scenario_text("weight: {kind: indicator, lo: 0.6, hi: 0.8}\nchecks: [continuity_m]\n")
    assert exc.value.field == "checks"
    with pytest.raises(ValidationError):
        parse_scenario_text("weight: {kind: indicator, lo: 0.3, hi: 0.45}\nchecks: [continuity_upper]\n")
    with pytest.raises(ValidationError):
        parse_scenario_text("weight: {kind: uniform}\ngrid: {M: 32}\n")
    with pytest.raises(ValidationError):
        parse_scenario_text("weight: {kind: uniform}\nmollification: 1\n")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("runs")
    scen = d / "small.yaml"
    scen.write_text(SMALL)
    out1, out2 = d / "a", d / "b"
    codes = [main(["check", "--scenario", str(scen), "--out", str(o), "--tol", "1e-11"]) for o in (out1, out2)]
    return scen, out1, out2, codes


def test_check_exit_and_manifest(small_run):
    scen, out, _, codes = small_run
    assert codes == [0, 0]
    man = json.loads((out / "manifest.json").read_text())
    digest = hashlib.sha256(scen.read_bytes()).hexdigest()
    assert man["scenario_digest"] == digest and man["exit_status"] == 0
    for key in ("gamma", "kernel_tables", "solution", "checks", "versions", "wall_times"):
        assert key in man
    assert all(man["checks"].values())
    for art in man["artifacts"]:
        path = out / art["path"]
        assert path.exists()
        assert art["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
        assert art["scenario_digest"] == digest
        if path.suffix == ".json":
            assert json.loads(path.read_text())["scenario_digest"] == digest
        else:
            # every CSV has a JSON companion with the same stem
            assert json.loads(path.with_suffix(".json").read_text())["scenario_digest"] == digest
    sol_meta = json.loads((out / "solution.json").read_text())
    assert sol_meta["tolerances"]["picard_tol"] == 1e-11


def test_deterministic_csv(small_run):
    _, a, b, _ = small_run
    csvs = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert csvs
    for rel in csvs:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_failing_check_sets_exit(tmp_path):
    scen = tmp_path / "strict.yaml"
    scen.write_text(SMALL.replace("checks: [", "tolerances: {resolvent: 1.0e-12}\nchecks: ["))
    assert main(["kernel-table", "--scenario", str(scen), "--out", str(tmp_path / "o")]) == 1
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["exit_status"] == 1


def test_bad_inputs_exit_nonzero(tmp_path, capsys):
    assert main(["check", "--scenario", str(tmp_path / "missing.yaml")]) != 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("weight: {kind: indicator, lo: 0.6, hi: 0.8}\nchecks: [continuity_m]\n")
    assert main(["check", "--scenario", str(bad), "--out", str(tmp_path / "o")]) != 0
    assert not (tmp_path / "o" / "solution.csv").exists()
    assert "ValidationError" in capsys.readouterr().err


def test_analyze_weight(tmp_path, capsys):
    scen = tmp_path / "w.yaml"
    scen.write_text("weight: {kind: uniform}\n")
    assert main(["analyze-weight", "--scenario", str(scen), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
    info = json.loads((tmp_path / "o" / "weight.json").read_text())
    assert info["exponents"]["gamma"] == pytest.approx(1 / 3, abs=1e-10)
    assert info["regime"] == "upper"


def test_converge(tmp_path):
    out = tmp_path / "conv"
    code = main(["converge", "--scenario", str(SCEN / "manufactured.yaml"), "--out", str(out),
                 "--M", "64", "128", "256"])
    assert code == 0
    tab = json.loads((out / "convergence.json").read_text())
    assert min(tab["ratios"]) >= 1.5 and tab["rate"] > 1.0
