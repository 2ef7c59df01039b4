import math

import numpy as np
import pytest

from elastosg.analysis import convergence_order
from elastosg.cli import build_config, main, read_config_file
from elastosg.errors import CFLError, ConfigurationError
from elastosg.harness import (
    CSV_HEADER,
    TableRow,
    dyadic_label,
    export_snapshot,
    parse_dyadic,
    read_snapshot,
    read_table_csv,
    run_field_report,
    run_spatial_study,
    run_temporal_study,
    write_table_csv,
)
from elastosg.problem import recover_stress

from conftest import UNIT_PARAMS, unit_space


def test_dyadic_labels():
    assert dyadic_label(2.0**-7) == "2^-7"
    assert dyadic_label(1.0) == "2^0"
    assert dyadic_label(0.3) == "0.3"
    assert parse_dyadic("2^-7") == parse_dyadic("2**-7") == 2.0**-7
    assert parse_dyadic("0.125") == 0.125


def test_csv_round_trip(tmp_path):
    rows = [
        TableRow("2^-1", 0.1, None, 0.3, None, 1.25, 0.5),
        TableRow("2^-2", 0.0125, convergence_order(0.1, 0.0125), 0.075, 2.0, 2.5, 0.25),
    ]
    path = tmp_path / "t.csv"
    text = write_table_csv(rows, path)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_table_csv(path)
    assert back[0]["order_u"] is None and back[1]["order_u"] == 3.0
    assert back[1]["error_u"] == 0.0125
    assert write_table_csv(rows, timing=False).splitlines()[1].endswith(",")


def test_spatial_study_structure():
    rows = run_spatial_study(1, [1, 2], 2.0**-7, reference_cells=4)
    assert [r.resolution for r in rows] == ["2^0", "2^-1"]
    assert rows[0].order_u is None and rows[0].order_psi is None
    assert math.isfinite(rows[1].order_u)
    assert rows[1].order_u == convergence_order(rows[0].error_u, rows[1].error_u)
    assert rows[1].order_psi == convergence_order(rows[0].error_psi, rows[1].error_psi)
    assert all(r.error_u >= 0 and r.error_psi >= 0 for r in rows)


def test_spatial_study_rejects_empty_ladder():
    with pytest.raises(ConfigurationError):
        run_spatial_study(1, [], 2.0**-7)


def test_spatial_study_names_the_offending_rung():
    with pytest.raises(CFLError, match="n=8"):
        run_spatial_study(1, [1, 2, 4], 2.0**-3)


def test_temporal_study_single_rung():
    rows = run_temporal_study(1, 2, [2.0**-4])
    assert len(rows) == 1 and rows[0].order_u is None and rows[0].resolution == "2^-4"


def test_temporal_study_orders_are_self_consistent():
    rows = run_temporal_study(1, 2, [2.0**-5, 2.0**-6], sigma_reference=2.0**-8)
    assert rows[1].order_u == convergence_order(rows[0].error_u, rows[1].error_u)
    assert rows[0].error_u > rows[1].error_u > 0


def test_temporal_study_gate():
    with pytest.raises(CFLError, match="sigma=2\\^-1"):
        run_temporal_study(1, 4, [2.0**-1, 2.0**-2])


def test_field_report_zero_data():
    rep = run_field_report(1, 2, 2.0**-4, zero_initial_data=True)
    assert rep.values() == [0.0] * 7


def test_field_report_values(tmp_path):
    rep = run_field_report(1, 2, 2.0**-4, export_every=8, export_dir=tmp_path)
    assert all(math.isfinite(v) and v >= 0 for v in rep.values())
    assert np.array_equal(rep.psi_matrix, rep.psi_matrix.T)
    assert rep.psi_matrix[0, 1] == rep.psi_matrix[1, 0] == rep.psi_max["12"]
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"snapshot_{k:06d}.txt" for k in (0, 8, 16)]


def test_snapshot_round_trip(tmp_path):
    space = unit_space(2, 2)
    from elastosg.assembly import assemble_mass

    u = np.random.default_rng(0).standard_normal(space.vector_dof_count) / 3
    psi = recover_stress(space, u, UNIT_PARAMS, assemble_mass(space))
    path = export_snapshot(tmp_path / "s.txt", space, u, psi, t=0.0078125)
    assert len(path.read_text().splitlines()) == space.scalar_dof_count + 1
    t, coords, back, psi_back = read_snapshot(path)
    assert t == 0.0078125
    assert np.array_equal(back, u)
    assert np.array_equal(coords, space.dof_coords)
    assert np.array_equal(psi_back.components, psi.components)


def test_snapshot_of_zero_field(tmp_path):
    space = unit_space(1, 1)
    path = export_snapshot(tmp_path / "z.txt", space, np.zeros(space.vector_dof_count))
    _, _, u, stress = read_snapshot(path)
    assert not u.any() and stress is None


def test_config_file_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nexample = 2\ncells = 3\nsigma = 2^-6\nC_ts = 0.25\nallow_unstable = yes\n")
    settings = read_config_file(path)
    cfg = build_config(settings)
    assert cfg.example == 2 and cfg.cells_per_axis == 3 and cfg.sigma == 2.0**-6
    assert cfg.C_ts == 0.25 and cfg.allow_unstable
    settings["cells"] = "5"
    assert build_config(settings).cells_per_axis == 5
    with pytest.raises(ConfigurationError):
        build_config({"allow_unstable": "maybe"})


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "field.csv"
    assert main(["--example", "1", "--cells", "2", "--sigma", "2^-4", "--out", str(out)]) == 0
    assert out.read_text().startswith("quantity,value\nu,")
    bad = tmp_path / "bad.cfg"
    bad.write_text("C_ts = 0.8\n")
    assert main(["--config", str(bad), "--cells", "2", "--sigma", "2^-4"]) == 2
    assert main(["--cells", "4", "--sigma", "2^-1"]) == 2
    assert main(["--cells", "4", "--sigma", "2^-4"]) == 3
    assert "instability" in capsys.readouterr().err


def test_cli_csv_is_byte_identical(tmp_path):
    args = ["--study", "temporal", "--cells", "2", "--ladder", "2^-4,2^-5", "--no-timing"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == ",".join(CSV_HEADER)


def test_desk_scale_spatial_errors_decrease(tmp_path):
    path = tmp_path / "spatial.csv"
    write_table_csv(run_spatial_study(1, [1, 2, 4], 2.0**-7), path)
    errs = [r["error_u"] for r in read_table_csv(path)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
