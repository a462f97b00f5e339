import json

from neural_field_spectrum.solver_log import EVENT_TYPES, SolverLog, log_level, make_tagged_printer


def test_counts_and_ring():
    log = SolverLog(capacity=3)
    for i in range(5):
        log.log("contour_point", w=complex(i, 1))
    assert log.count("contour_point") == 5
    recent = log.get_recent_events()
    assert len(recent) == 3
    assert recent[-1]["w"] == [4.0, 1.0]
    assert log.get_recent_events(1) == recent[-1:]


def test_unknown_event_still_counted():
    log = SolverLog()
    log.log("custom_event", detail="x")
    assert log.count("custom_event") == 1
    assert "custom_event" not in EVENT_TYPES


def test_diagnostics():
    log = SolverLog()
    assert log.get_diagnostics()["newton"] == {"total": 0, "success_rate_pct": None}
    for _ in range(3):
        log.log("newton_converged", iterations=4, residual=1e-14)
    log.log("newton_failed", detail="stalled", residual=0.3)
    log.log("eigenpair_found", z=1.34j)
    diag = log.get_diagnostics()
    assert diag["newton"] == {"total": 4, "success_rate_pct": 75.0}
    assert diag["last_failure"]["detail"] == "stalled"
    assert diag["log_file"] is None
    assert len(diag["recent_events"]) == 5


def test_reset():
    log = SolverLog()
    log.log("blowup", time=1.0)
    log.reset()
    assert log.count("blowup") == 0
    assert log.get_recent_events() == []


def test_file_sink(tmp_path):
    path = tmp_path / "logs" / "solver.log"
    log = SolverLog(log_file=path)
    log.log("bisection_step", c_hat=-3.1, width=0.01, skipped=None)
    log.log("contour_point", w=0.5 + 1j)
    entries = [json.loads(line) for line in path.read_text().splitlines()]
    assert [e["event"] for e in entries] == ["bisection_step", "contour_point"]
    assert "skipped" not in entries[0]
    assert entries[1]["w"] == [0.5, 1.0]

    log.set_log_file(None)
    log.log("blowup")
    assert len(path.read_text().splitlines()) == 2


def test_numpy_scalars(tmp_path):
    import numpy as np

    path = tmp_path / "solver.log"
    log = SolverLog(log_file=path)
    log.log("newton_converged", residual=np.float64(1e-13), iterations=np.int64(5), z=np.complex128(1 + 2j))
    entry = json.loads(path.read_text())
    assert entry["iterations"] == 5
    assert entry["z"] == [1.0, 2.0]


def test_log_level(monkeypatch):
    monkeypatch.setenv("NF_SPECTRUM_LOG_LEVEL", "debug")
    assert log_level() == 2
    monkeypatch.setenv("NF_SPECTRUM_LOG_LEVEL", "QUIET")
    assert log_level() == 0
    monkeypatch.setenv("NF_SPECTRUM_LOG_LEVEL", "nonsense")
    assert log_level() == 1


def test_tagged_printer(monkeypatch, capsys):
    monkeypatch.setenv("NF_SPECTRUM_LOG_LEVEL", "info")
    make_tagged_printer("Hopf")("tracked 13 points")
    make_tagged_printer("Hopf", level=2)("hidden")
    captured = capsys.readouterr()
    assert captured.err == "[Hopf] tracked 13 points\n"
    assert captured.out == ""
