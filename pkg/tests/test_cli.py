import json

from duplexkit.cli import main

from helpers import GOLDENS


def write(path, lines):
    path.write_text("".join(json.dumps(l, ensure_ascii=False) + "\n" for l in lines), encoding="utf-8")
    return str(path)


def test_compile_golden(tmp_path, capsys):
    out = tmp_path / "a1.wire"
    stats = tmp_path / "stats.jsonl"
    assert main(["compile", str(GOLDENS / "a1_asr_human.jsonl"), "-o", str(out), "--stats", str(stats)]) == 0
    assert out.read_text(encoding="utf-8").rstrip("\n") == (GOLDENS / "a1_asr_human.wire").read_text(encoding="utf-8").rstrip("\n")
    assert json.loads(stats.read_text())["chunks"] == 9


def test_compile_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["compile", str(empty)]) == 0
    assert capsys.readouterr().out == ""


def test_compile_undrainable_fails(tmp_path, capsys):
    spec = {"task": "dialogue", "duration_s": 0.32,
            "actions": [{"id": 1, "name": "asr", "offset_s": 0.16, "planning": "一二三四五六七八九十十一"}]}
    assert main(["compile", write(tmp_path / "s.jsonl", [spec])]) == 1
    assert "undrained" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    assert main(["validate", str(GOLDENS / "a3_toolcall.wire")]) == 0
    assert "16 chunks, 0 problems" in capsys.readouterr().out
    bad = tmp_path / "bad.wire"
    bad.write_text("<|user_audio_begin|> U U <|user_audio_end|> <|action_end|>\n")
    assert main(["validate", str(bad)]) == 1


def test_schedule_dump(capsys):
    assert main(["schedule-dump", str(GOLDENS / "a3_toolcall.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "anchor 3" in out and "[10]" in out


def test_score_pipeline(tmp_path, capsys):
    cases = tmp_path / "normal.jsonl"
    assert main(["gen-cases", "--scenario", "normal", "--n", "20", "--seed", "1", "-o", str(cases)]) == 0
    assert len(cases.read_text().splitlines()) == 20
    run = tmp_path / "run"
    assert main(["score", "--cases", str(cases), "--policy", "trace_replay", "--out", str(run)]) == 0
    report = json.loads((run / "report.json").read_text())
    assert report["rows"][0]["accuracy"] == 100.0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["policy"] == "trace_replay" and manifest["config"]["clock"]["chunk_ms"] == 160
    assert main(["score", "--cases", str(cases), "--policy", "always_silent"]) == 0
    assert "0.00" in capsys.readouterr().out


def test_prefill_off_keeps_normal_and_pause(tmp_path, capsys):
    lines = []
    for scen in ("normal", "interrupt", "pause"):
        path = tmp_path / f"{scen}.jsonl"
        main(["gen-cases", "--scenario", scen, "--n", "3", "-o", str(path)])
        lines += path.read_text().splitlines()
    mixed = tmp_path / "mixed.jsonl"
    mixed.write_text("\n".join(lines) + "\n")
    run = tmp_path / "run"
    assert main(["score", "--cases", str(mixed), "--policy", "trace_replay", "--prefill", "off", "--out", str(run)]) == 0
    groups = [r["group"] for r in json.loads((run / "report.json").read_text())["rows"]]
    assert groups == ["normal", "pause", "avg"]


def test_clock_from_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DUPLEX_CLOCK_MS", "240")
    spec = {"task": "dialogue", "duration_s": 1.2}
    assert main(["compile", write(tmp_path / "s.jsonl", [spec])]) == 0
    out = capsys.readouterr().out
    assert '"chunk_ms": 240' in out and len(out.strip().splitlines()) == 6


def test_run_writes_event_log(tmp_path):
    cases = tmp_path / "c.jsonl"
    main(["gen-cases", "--scenario", "interrupt", "--n", "2", "-o", str(cases)])
    out = tmp_path / "log.jsonl"
    assert main(["run", "--cases", str(cases), "--policy", "never_yield", "-o", str(out)]) == 0
    kinds = {json.loads(l)["kind"] for l in out.read_text().splitlines()}
    assert kinds == {"speak"}
