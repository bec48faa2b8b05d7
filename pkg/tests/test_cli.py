"""Command-line interface: schemas, determinism, exit codes, figures."""

import json
from fractions import Fraction
from pathlib import Path

import pytest

from covtomo.algebra import Polynomial
from covtomo.cli import main
from covtomo.domain import StarDomain
from covtomo.forms import Connection, Form, exterior_d, wedge
from covtomo.metric import codifferential


def write_json(path: Path, data: dict) -> str:
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def interval_domain(tmp_path):
    dom = StarDomain.interval(0, 1, center=Fraction(1, 2), grid=33)
    return write_json(tmp_path / "dom.json", dom.to_json())


def test_examples_all_pass(capsys):
    assert main(["examples", "--name", "all"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_examples_artifact_content(tmp_path, capsys):
    assert main(["examples", "--name", "ex-0form-1d", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "ex-0form-1d.json").read_text())
    assert data["Phi"] == "x+1"
    assert data["J"] == "dx"
    assert data["HJ"] == "x-1/2"
    assert data["c"] == "3/2"
    assert data["pass"] is True
    assert data["connection_relation"]["residual_zero_at_33_points"] is True


def test_verify_command(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["verify", "--seed", "7", "--count", "24", "--dims", "1,2",
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["failures"] == 0
    assert report["entries"] == "all-pass"


def test_verify_determinism(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["verify", "--seed", "3", "--count", "12", "--dims", "2", "--out", str(a)])
    main(["verify", "--seed", "3", "--count", "12", "--dims", "2", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_decompose_command(tmp_path, interval_domain):
    form = write_json(tmp_path / "w.json", Form.basis_one_form(1, 0).to_json())
    out = tmp_path / "dec.json"
    assert main(["decompose", "--form", form, "--domain", interval_domain,
                 "--out", str(out)]) == 0
    dec = json.loads(out.read_text())
    assert Form.from_json(dec["exact"]) == Form.basis_one_form(1, 0)
    assert Form.from_json(dec["antiexact"]).is_zero


def test_extend_harmonic_command(tmp_path, interval_domain):
    alpha = write_json(tmp_path / "alpha.json",
                       {"kind": "endpoints", "lo": ["1"], "hi": ["2"]})
    out = tmp_path / "ext.json"
    assert main(["extend", "--mode", "harmonic", "--alpha", alpha,
                 "--domain", interval_domain, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    phi = Form.from_json(data["Phi"])
    assert phi == Form.from_scalar(Polynomial.variable(1, 0) + Polynomial.const(1, 1))
    assert Form.from_json(data["J_ext"]) == Form.basis_one_form(1, 0)


def test_extend_heat_requires_T(tmp_path, interval_domain):
    alpha = write_json(tmp_path / "alpha.json",
                       {"kind": "endpoints", "lo": ["1"], "hi": ["2"]})
    with pytest.raises(SystemExit):
        main(["extend", "--mode", "heat", "--alpha", alpha,
              "--domain", interval_domain])


def test_extend_radial_distribution(tmp_path, interval_domain):
    alpha = write_json(tmp_path / "alpha.json",
                       {"kind": "endpoints", "lo": ["1"], "hi": ["2"]})
    out = tmp_path / "rad.json"
    assert main(["extend", "--mode", "radial", "--alpha", alpha,
                 "--domain", interval_domain, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["J_ext"]["atoms"] == [{"loc": "1/2", "weight": "1"}]


def test_solve_command(tmp_path):
    dom = StarDomain.ball(2, 2)
    domain = write_json(tmp_path / "dom.json", dom.to_json())
    x2 = Polynomial.variable(2, 0)
    Je = exterior_d(Form.monomial(2, 1, (1,), x2 * x2))
    J = write_json(tmp_path / "J.json", Je.to_json())
    A = write_json(tmp_path / "A.json", Connection.scalar(
        [Polynomial.const(2, Fraction(1, 2)), Polynomial.zero(2)]).form.to_json())
    out = tmp_path / "sol.json"
    assert main(["solve", "--J", J, "--A", A, "--domain", domain,
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["residual_max"] < 1e-8
    assert data["radius"] == pytest.approx(2.0)


def test_recover_connection_command(tmp_path, interval_domain):
    alpha = write_json(tmp_path / "alpha.json",
                       {"kind": "endpoints", "lo": ["1"], "hi": ["2"]})
    J = write_json(tmp_path / "J.json", Form.zero(1, 1).to_json())
    out = tmp_path / "rec.json"
    assert main(["recover", "connection", "--alpha", alpha, "--J", J,
                 "--domain", interval_domain, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["non_polynomial"] is True
    multiplier = Polynomial.from_json(data["relation"]["multiplier"])
    assert multiplier == Polynomial.variable(1, 0) + Polynomial.const(1, 1)


def test_recover_current_command(tmp_path, interval_domain):
    alpha = write_json(tmp_path / "alpha.json",
                       {"kind": "endpoints", "lo": ["1"], "hi": ["2"]})
    out = tmp_path / "cur.json"
    assert main(["recover", "current", "--alpha", alpha,
                 "--domain", interval_domain, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["branch"] == "exact-current"
    assert Form.from_json(data["recovered"]) == Form.basis_one_form(1, 0)
    assert Form.from_json(data["c_data"]) == Form.from_constant(1, Fraction(3, 2))


def test_recover_joint_command(tmp_path):
    dom = StarDomain.box(2, 1, grid=9)
    domain = write_json(tmp_path / "dom2.json", dom.to_json())
    alpha = write_json(tmp_path / "alpha2.json",
                       {"kind": "form", "form": Form.from_constant(2, 1).to_json()})
    out = tmp_path / "joint.json"
    assert main(["recover", "joint", "--alpha", alpha, "--domain", domain,
                 "--a", "1.0", "--b", "1.0", "--ansatz-degree", "1",
                 "--iterations", "30", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["monotone"] is True
    assert data["residuals"]["lattice_norm_A"] <= 1e-6


def test_tower_command(tmp_path):
    from covtomo.tower import LevelSpec

    dom = StarDomain.box(3, 1, grid=13)
    x3, y3, z3 = (Polynomial.variable(3, i) for i in range(3))
    phi2 = Form(3, 1, {((1,), (0,)): x3, ((0,), (0,)): -y3})
    A_top = Connection.scalar([Polynomial.const(3, Fraction(1, 4)),
                               Polynomial.zero(3), Polynomial.zero(3)])
    J = exterior_d(phi2) + wedge(A_top.form, phi2)
    spec = {
        "levels": [
            LevelSpec("contravariant", X=(x3, y3, z3)).to_json(),
            LevelSpec("covariant", A=A_top).to_json(),
        ],
        "J": J.to_json(),
        "alpha": {"kind": "form", "form": phi2.to_json()},
    }
    spec_path = write_json(tmp_path / "tower.json", spec)
    domain = write_json(tmp_path / "dom.json", dom.to_json())
    out = tmp_path / "tower-out.json"
    assert main(["tower", "solve", "--spec", spec_path, "--domain", domain,
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["status"] == "solved"
    assert data["composed_residual"] <= 1e-8


def test_maxwell_command(tmp_path):
    dom = StarDomain.ball(3, 1)
    x3, y3, z3 = (Polynomial.variable(3, i) for i in range(3))
    A_star = Form(3, 1, {((0,), (0,)): y3 * z3, ((1,), (0,)): x3 * x3})
    F_star = exterior_d(A_star)
    J_star = codifferential(F_star)
    J = write_json(tmp_path / "J.json", J_star.to_json())
    aF = write_json(tmp_path / "aF.json", F_star.to_json())
    domain = write_json(tmp_path / "dom.json", dom.to_json())
    out = tmp_path / "mx.json"
    assert main(["maxwell", "--J", J, "--alphaF", aF, "--degree", "3",
                 "--domain", domain, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["residual_dF"] <= 1e-6
    assert data["residual_coexact"] <= 1e-6


def test_plotdata_harmonic_csv_and_figure(tmp_path, interval_domain, capsys):
    # 1D form result -> two columns x, phi with phi = x + 1
    form = write_json(tmp_path / "phi.json",
                      Form.from_scalar(Polynomial.variable(1, 0)
                                       + Polynomial.const(1, 1)).to_json())
    out = tmp_path / "plot.csv"
    assert main(["plotdata", "--result", form, "--out", str(out),
                 "--samples", "5"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "x,phi"
    row = lines[1].split(",")
    assert float(row[1]) == float(row[0]) + 1
    assert (tmp_path / "plot.png").exists()


def test_plotdata_distribution(tmp_path):
    from covtomo.extension import Distribution1D

    dist = Distribution1D(
        [(Fraction(0), Fraction(1, 2), Polynomial.const(1, 1)),
         (Fraction(1, 2), Fraction(1), Polynomial.const(1, 2))],
        [(Fraction(1, 2), Fraction(1))],
        [(Fraction(1, 2), Fraction(1))],
    )
    src = tmp_path / "dist.json"
    src.write_text(json.dumps(dist.to_json()))
    out = tmp_path / "dist.csv"
    assert main(["plotdata", "--result", str(src), "--out", str(out)]) == 0
    text = out.read_text()
    assert "atom,1/2" in text and "piece,0,1/2" in text
    assert (tmp_path / "dist.png").exists()


def test_plotdata_empty_result_header_only(tmp_path):
    src = tmp_path / "empty.json"
    src.write_text(json.dumps({}))
    out = tmp_path / "empty.csv"
    assert main(["plotdata", "--result", str(src), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "key,value"


def test_plotdata_no_figure_flag(tmp_path):
    form = write_json(tmp_path / "phi.json",
                      Form.from_scalar(Polynomial.variable(1, 0)).to_json())
    out = tmp_path / "nofig.csv"
    assert main(["plotdata", "--result", str(form), "--out", str(out),
                 "--no-fig"]) == 0
    assert not (tmp_path / "nofig.png").exists()


def test_cli_outputs_byte_identical(tmp_path, interval_domain):
    form = write_json(tmp_path / "w.json", Form.basis_one_form(1, 0).to_json())
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["decompose", "--form", form, "--domain", interval_domain, "--out", str(a)])
    main(["decompose", "--form", form, "--domain", interval_domain, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
