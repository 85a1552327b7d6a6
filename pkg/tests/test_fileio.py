import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockomp.blocks import BlockLayout
from blockomp.errors import FormatError, ParseError, ValidationError
from blockomp.experiments import EnsembleSpec, SweepCell, SweepGrid, phase_sweep
from blockomp.fileio import (
    RIP_COLUMNS,
    SWEEP_COLUMNS,
    emit_results,
    fmt,
    format_matrix,
    parse_config,
    read_matrix,
    read_vector,
    write_matrix,
    write_vector,
)
from blockomp.rip import block_rip_constant_exact


class TestParseConfig:
    def test_minimal(self):
        spec = parse_config('{"L":16,"N":24,"d":2,"K":2,"seed":1,"trials":10}')
        assert spec == EnsembleSpec(L=16, N=24, d=2, K=2, seed=1, trials=10)
        assert spec.coeff_model == "gaussian" and spec.matrix_model == "gaussian_normalized"
        assert spec.residual_tol == 1e-10 and spec.max_iterations is None

    def test_bad_d(self):
        with pytest.raises(ValidationError) as exc:
            parse_config('{"d":0}')
        assert exc.value.field == "d"

    def test_missing_key(self):
        with pytest.raises(ValidationError) as exc:
            parse_config('{"L":4,"N":4,"d":2}')
        assert exc.value.field == "K"

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as exc:
            parse_config('{"L":4,"N":4,"d":2,"K":1,"colour":1}')
        assert exc.value.field == "colour"

    @pytest.mark.parametrize("doc,field", [
        ('{"L":4,"N":5,"d":2,"K":1}', "N"),
        ('{"L":4,"N":4,"d":2,"K":1,"coeff_model":"cauchy"}', "coeff_model"),
        ('{"L":4,"N":4,"d":2,"K":true}', "K"),
        ('{"L":4,"N":4,"d":2,"K":1,"epsilon":-0.1}', "epsilon"),
        ('{"L":4,"N":4,"d":2,"K":1,"L_values":[]}', "L_values"),
        ('{"L":4,"N":4,"d":2,"K":3}', "config"),
    ])
    def test_invalid_fields(self, doc, field):
        with pytest.raises(ValidationError) as exc:
            parse_config(doc)
        assert exc.value.field == field

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as exc:
            parse_config('{\n  "L": 4,\n  "N": \n}')
        assert exc.value.line == 4

    def test_not_an_object(self):
        with pytest.raises(ParseError):
            parse_config("[1, 2]")

    @given(st.integers(1, 30), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**40),
           st.sampled_from(["gaussian", "rademacher", "unit_block"]), st.floats(0, 2),
           st.one_of(st.none(), st.integers(1, 9)))
    def test_round_trip(self, L, d, m, seed, coeff, eps, cap):
        spec = EnsembleSpec(L=L, N=m * d, d=d, K=1, seed=seed, coeff_model=coeff, epsilon=eps,
                            max_iterations=cap, L_values=(L, L + 1))
        assert parse_config(json.dumps(spec.to_dict())) == spec


class TestMatrixFile:
    def test_identity(self):
        a = read_matrix(io.StringIO("# dense 2 2\n1 0\n0 1\n"))
        np.testing.assert_array_equal(a, np.eye(2))

    def test_comments_and_blank_lines(self):
        text = "\n# dense 2 3\n# a comment\n1 2 3  # trailing\n\n4 5 6\n"
        np.testing.assert_array_equal(read_matrix(io.StringIO(text)), [[1, 2, 3], [4, 5, 6]])

    @pytest.mark.parametrize("text,line", [
        ("# dense 2 2\n1 0\n0\n", 3),
        ("# dense 2 2\n1 0\n", 2),
        ("# dense 1 2\n1 0\n2 2\n", 3),
        ("# dense 1 2\n1 x\n", 2),
        ("1 2\n", 1),
        ("# dense 1 1\nnan\n", 2),
    ])
    def test_format_errors(self, text, line):
        with pytest.raises(FormatError) as exc:
            read_matrix(io.StringIO(text))
        assert exc.value.line == line
        assert f"line {line}" in str(exc.value)

    def test_column_reported(self):
        with pytest.raises(FormatError) as exc:
            read_matrix(io.StringIO("# dense 1 3\n1.0 2.0 oops\n"))
        assert exc.value.column == 9

    def test_round_trip_bitwise(self, tmp_path):
        g = np.random.default_rng(0)
        for i in range(100):
            a = g.standard_normal((int(g.integers(1, 6)), int(g.integers(1, 6)))) * 10.0 ** g.integers(-30, 30)
            path = tmp_path / f"m{i}.txt"
            write_matrix(a, path)
            assert np.array_equal(read_matrix(path), a)

    def test_vector_round_trip(self):
        v = np.array([0.1, -2.5, 3e-300])
        buf = io.StringIO()
        write_vector(v, buf)
        buf.seek(0)
        assert np.array_equal(read_vector(buf), v)

    def test_vector_shape(self):
        with pytest.raises(FormatError):
            read_vector(io.StringIO(format_matrix(np.eye(2))))


class TestEmit:
    def test_empty_grid_header_only(self):
        grid = SweepGrid((), (), 2, [])
        assert emit_results("sweep", grid) == ",".join(SWEEP_COLUMNS) + "\n"

    def test_identity_cell(self):
        spec = EnsembleSpec(L=8, N=8, d=2, K=2, trials=3, matrix_model="orthonormal_perturbed")
        lines = emit_results("sweep", phase_sweep(spec)).splitlines()
        assert lines[1:] == ["8,2,2,block_omp,3,3,1,2", "8,2,2,omp,3,3,1,4"]

    def test_sorted(self):
        cells = [SweepCell(12, 1, 2, "omp", 1, 1, 2.0, 2), SweepCell(8, 2, 2, "omp", 1, 0, 4.0, 0),
                 SweepCell(8, 2, 2, "block_omp", 1, 1, 2.0, 2)]
        lines = emit_results("sweep", SweepGrid((8, 12), (1, 2), 2, cells)).splitlines()[1:]
        assert [ln.split(",")[:4] for ln in lines] == [["8", "2", "2", "block_omp"], ["8", "2", "2", "omp"],
                                                        ["12", "1", "2", "omp"]]

    def test_float_digits(self):
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(True) == "true"

    def test_rip_csv_and_json(self):
        cert = block_rip_constant_exact(np.eye(6), BlockLayout(6, 2), 2)
        csv_text = emit_results("rip", [cert])
        assert csv_text.splitlines()[0] == ",".join(RIP_COLUMNS)
        assert csv_text.splitlines()[1] == "2,2,0,0.353553390593,true,1;2"
        doc = json.loads(emit_results("rip", [cert], "json", config={"seed": 1}))
        assert doc["config"] == {"seed": 1} and doc["rows"][0]["worst_support"] == "1;2"
        assert doc["version"]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            emit_results("nope", [])
