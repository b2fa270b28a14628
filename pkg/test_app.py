import json
import math

import openpyxl
import pandas as pd
import pytest

import app
from app import main, trace_path
from caprecap import chapman_from_counts, estimate_caprecap
from engine import IterationTrace
from errors import ZeroOverlap
from utils.report_export import RunReport, emit_trace, parse_trace_csv, trace_csv, trace_frame


def _traces(count):
    log_estimate = 70.0
    traces = []
    for t in range(1, count + 1):
        c_hat = 0.1 + 0.013 * t
        log_estimate += -2.302585092994046 * (1 - c_hat)
        traces.append(IterationTrace(t=t, m_upper=300 + t, m_lower=280 + t, n_elites=1000 + 7 * t,
                                     n_screened=990 + 5 * t, c_hat=c_hat,
                                     log_estimate_so_far=log_estimate, sample_size=10000))
    return traces


# ============================================
# Trace emission
# ============================================

def test_trace_columns(tmp_path):
    path = tmp_path / "trace.csv"
    emit_trace(_traces(1), 'csv', path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['t', 'log10_estimate', 'N_t', 'N_t_screened',
                                   'm_upper', 'm_lower', 'c_hat']
    assert len(frame) == 1


def test_trace_csv_round_trip():
    text = trace_csv(trace_frame(_traces(33)))
    assert trace_csv(parse_trace_csv(text)) == text


def test_trace_json_mirrors_fields(tmp_path):
    path = tmp_path / "trace.json"
    emit_trace(_traces(3), 'json', path)
    rows = json.loads(path.read_text())
    assert [row['t'] for row in rows] == [1, 2, 3]
    assert rows[0]['N_t'] == 1007
    assert rows[0]['c_hat'] == pytest.approx(0.113, rel=1e-6)


def test_trace_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_trace(_traces(1), 'xml', tmp_path / "t.xml")


def test_trace_path_per_run():
    assert str(trace_path("out/trace.csv", 0, 1)) == "out/trace.csv"
    assert str(trace_path("out/trace.csv", 2, 5)) == "out/trace.run3.csv"


def test_report_aggregate_recomputable():
    report = RunReport(command="count graph", config={'seed': 0})
    for run, value in enumerate([7146.2, 7169.2, 7468.7]):
        report.add_run({'run': run, 'seed': run, 'iterations': 10, 'log_estimate': math.log(value),
                        'estimate': value, 'status': 'ok', 'wall_time': 1.0})
    summary = report.aggregate()
    assert summary['mean_estimate'] == pytest.approx(sum([7146.2, 7169.2, 7468.7]) / 3)
    assert summary['relative_error'] == pytest.approx(
        pd.Series([7146.2, 7169.2, 7468.7]).std() / summary['mean_estimate'])
    assert 'wall_time' not in report.runs_frame().columns


def test_report_xlsx(tmp_path):
    report = RunReport(command="count graph", config={'seed': 0, 'rho': 0.5})
    report.add_run({'run': 0, 'seed': 0, 'iterations': 10, 'log_estimate': math.log(7392.0),
                    'estimate': 7392.0, 'status': 'ok', 'wall_time': 1.0}, _traces(2))
    path = tmp_path / "report.xlsx"
    report.save(path)
    wb = openpyxl.load_workbook(path)
    assert wb.sheetnames == ["Runs", "Summary", "Trace"]


# ============================================
# Command line
# ============================================

def _count_graph(tmp_path, *extra):
    return ['count', 'graph', '--degrees', str(tmp_path / "example_graph.txt"),
            '--samples', '500', '--rho', '0.5', *extra]


@pytest.fixture
def graph_file(tmp_path, data_dir):
    (tmp_path / "example_graph.txt").write_text((data_dir / "example_graph.txt").read_text())
    return tmp_path


def test_count_graph_runs(graph_file, capsys):
    assert main(_count_graph(graph_file, '--runs', '2')) == 0
    out = capsys.readouterr().out
    assert "Mean" in out and "RE =" in out


def test_invalid_rho_exits_2(graph_file, capsys):
    assert main(_count_graph(graph_file, '--rho', '1.5')) == 2
    assert "rho" in capsys.readouterr().err


def test_missing_instance_exits_2(tmp_path):
    assert main(['count', 'sat', '--cnf', str(tmp_path / "missing.cnf")]) == 2


def test_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 3 1\n1 2 9 0\n")
    assert main(['count', 'sat', '--cnf', str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_argparse_usage_exits_2():
    with pytest.raises(SystemExit) as info:
        main(['count', 'graph'])
    assert info.value.code == 2


def test_iteration_limit_exits_1(data_dir, tmp_path):
    argv = ['count', 'graph', '--degrees', str(data_dir / "small_graph.txt"), '--samples', '200',
            '--rho', '0.5', '--max-iterations', '2', '--trace', str(tmp_path / "t.csv")]
    assert main(argv) == 1
    assert len(pd.read_csv(tmp_path / "t.csv")) == 2


def test_ecap_needs_sat_instance(graph_file):
    assert main(_count_graph(graph_file, '--estimator', 'ecap')) == 2


def test_reports_are_reproducible(graph_file):
    outputs = []
    for threads in ('1', '4', '1'):
        path = graph_file / "report.json"
        assert main(_count_graph(graph_file, '--runs', '2', '--samples', '3000', '--threads', threads,
                                 '--report', str(path))) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_report_contents_with_oracle(graph_file):
    path = graph_file / "report.json"
    assert main(_count_graph(graph_file, '--runs', '2', '--oracle', '--timings',
                             '--report', str(path))) == 0
    report = json.loads(path.read_text())
    assert report['config']['seed'] == 0
    assert [run['seed'] for run in report['runs']] == [0, 1]
    assert report['aggregate']['exact_count'] == 6
    assert 'rel_deviation' in report['runs'][0]
    assert 'wall_time' in report['runs'][0]
    assert len(report['runs'][0]['trace']) == report['runs'][0]['iterations']


def test_caprecap_estimator(data_dir, tmp_path):
    path = tmp_path / "report.json"
    argv = ['count', 'sat', '--cnf', str(data_dir / "example.cnf"), '--samples', '1000',
            '--estimator', 'caprecap', '--cap-n1', '500', '--cap-n2', '500', '--report', str(path)]
    assert main(argv) == 0
    run = json.loads(path.read_text())['runs'][0]
    assert run['estimator'] == 'caprecap'
    assert run['overlap'] > 0


def test_auto_estimator_on_table(data_dir, tmp_path):
    path = tmp_path / "report.json"
    argv = ['count', 'table', '--spec', str(data_dir / "model1.json"), '--samples', '1000',
            '--rho', '0.5', '--estimator', 'auto', '--report', str(path)]
    assert main(argv) == 0
    assert json.loads(path.read_text())['runs'][0]['estimator'] == 'split'


def test_generate_sat(tmp_path, capsys):
    out = tmp_path / "f.cnf"
    assert main(['generate', 'sat', '--vars', '12', '--clauses', '40', '--seed', '3',
                 '--out', str(out)]) == 0
    text = out.read_text()
    assert "p cnf 12 40" in text
    assert main(['generate', 'sat', '--vars', '12', '--clauses', '40', '--seed', '3']) == 0
    assert capsys.readouterr().out == text


def test_caprecap_on_graph_exits_2(graph_file, capsys):
    assert main(_count_graph(graph_file, '--estimator', 'caprecap')) == 2
    assert "--estimator split" in capsys.readouterr().err


def test_auto_estimator_on_graph_stays_split(graph_file):
    path = graph_file / "report.json"
    assert main(_count_graph(graph_file, '--estimator', 'auto', '--report', str(path))) == 0
    assert json.loads(path.read_text())['runs'][0]['estimator'] == 'split'


def test_zero_overlap_run_does_not_stop_the_batch(data_dir, tmp_path, monkeypatch):
    calls = []

    def first_call_misses(*args, **kwargs):
        calls.append(1)
        if len(calls) == 1:
            raise ZeroOverlap("batches share no state", chapman_from_counts(10, 10, 0))
        return estimate_caprecap(*args, **kwargs)

    monkeypatch.setattr(app, 'estimate_caprecap', first_call_misses)
    path = tmp_path / "report.json"
    argv = ['count', 'sat', '--cnf', str(data_dir / "example.cnf"), '--samples', '1000',
            '--runs', '3', '--estimator', 'caprecap', '--cap-n1', '500', '--cap-n2', '500',
            '--report', str(path)]
    assert main(argv) == 0
    report = json.loads(path.read_text())
    assert [run['status'] for run in report['runs']] == ['zero_overlap', 'ok', 'ok']
    assert report['runs'][0]['overlap'] == 0
    assert report['aggregate']['runs'] == 3
    assert report['aggregate']['successful_runs'] == 2


def test_non_utf8_instance_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cnf"
    bad.write_bytes(b"p cnf 3 1\n1 2 \xff 0\n")
    assert main(['count', 'sat', '--cnf', str(bad)]) == 2
    assert "UTF-8" in capsys.readouterr().err
