import logging
import shutil
import sys

import pytest

from regraph.errors import (
    AllJobsFailed,
    ConfigError,
    EmptyRoot,
    MissingFixture,
    StageOrderError,
    StageTimeout,
    ToolFailure,
)
from regraph.graph import Provenance, corpus_to_json
from regraph.pipeline import (
    Backend,
    BinaryJob,
    Layout,
    Stage,
    ToolchainConfig,
    default_fixture_dir,
    discover_jobs,
    fixture_tree,
    preprocess,
    process_job,
    render_command,
    run_stage,
    sha256_file,
    worker_count,
)

PY = sys.executable
ALL_TOOLS = all(shutil.which(t) for t in ("retdec-decompiler", "opt", "joern"))


def touch(path, data=b"\x7fELF"):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


def external(tmp_path, **templates):
    base = dict(
        lifter_cmd=f"{PY} -c \"import shutil,sys; shutil.copy(sys.argv[-2], sys.argv[-1])\" {{in}} {{out}}",
        optimizer_cmd=f"{PY} -c \"import shutil,sys; shutil.copy(sys.argv[-2], sys.argv[-1])\" {{opt_level}} {{in}} {{out}}",
        decompiler_cmd="true",
        cpg_extractor_cmd="true",
    )
    base.update(templates)
    return ToolchainConfig(work_dir=str(tmp_path / "work"), backend=Backend.EXTERNAL, **base)


# -- discovery --------------------------------------------------------------


def test_discover_single(tmp_path):
    touch(tmp_path / "openplc/arm/O3/a.bin")
    jobs = discover_jobs(tmp_path)
    assert len(jobs) == 1
    assert jobs[0].provenance == Provenance("openplc", "arm", "O3")


def test_discover_empty(tmp_path):
    with pytest.raises(EmptyRoot):
        discover_jobs(tmp_path)


def test_discover_eight_in_lexicographic_order(tmp_path):
    expected = []
    for proj in ("beta", "alpha"):
        for arch in ("x86", "arm"):
            for opt in ("O3", "O0"):
                touch(tmp_path / proj / arch / opt / "p.bin")
                expected.append(f"{proj}/{arch}/{opt}/p.bin")
    jobs = discover_jobs(tmp_path)
    got = [str(j.input_path.relative_to(tmp_path)) for j in jobs]
    assert got == sorted(expected)
    assert got[0] == "alpha/arm/O0/p.bin"
    assert len({j.job_id for j in jobs}) == 8


def test_discover_flat_layout(tmp_path):
    touch(tmp_path / "x.bin")
    jobs = discover_jobs(tmp_path, Layout.FLAT)
    assert jobs[0].provenance == Provenance()


def test_worker_env(monkeypatch):
    monkeypatch.setenv("REGRAPH_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("REGRAPH_WORKERS", "x")
    assert worker_count(2) == 2


# -- config -----------------------------------------------------------------


def test_external_optimizer_must_be_highest_level():
    with pytest.raises(ConfigError):
        ToolchainConfig(backend="EXTERNAL", optimizer_cmd="opt -O1 {in} -o {out}")
    ToolchainConfig(backend="EXTERNAL", optimizer_cmd="opt -O3 {in} -o {out}")


def test_render_command_placeholders(tmp_path):
    argv = render_command("opt {opt_level} '{in}' -o {out}", tmp_path / "a b.ll", tmp_path / "o.ll")
    assert argv == ["opt", "-O3", str(tmp_path / "a b.ll"), "-o", str(tmp_path / "o.ll")]


# -- stages -----------------------------------------------------------------


def fixture_job():
    return discover_jobs(fixture_tree())[1]  # openplc/x86/O0


def test_fixture_lift_passthrough(tmp_path, monkeypatch):
    import subprocess

    def boom(*a, **k):
        raise AssertionError("no process may be spawned")

    monkeypatch.setattr(subprocess, "run", boom)
    job = fixture_job()
    cfg = ToolchainConfig(work_dir=str(tmp_path))
    out = run_stage(job, Stage.LIFT, cfg)
    digest = sha256_file(job.input_path)[:16]
    assert out.read_bytes() == (default_fixture_dir() / digest / "lifted.ll").read_bytes()


def test_stage_order_enforced(tmp_path):
    cfg = ToolchainConfig(work_dir=str(tmp_path))
    with pytest.raises(StageOrderError):
        run_stage(fixture_job(), Stage.DECOMPILE, cfg)


def test_missing_fixture(tmp_path):
    job = BinaryJob(touch(tmp_path / "in" / "unknown.bin", b"not a fixture"))
    with pytest.raises(MissingFixture):
        run_stage(job, Stage.LIFT, ToolchainConfig(work_dir=str(tmp_path / "w")))


def test_tool_failure_carries_stderr(tmp_path):
    job = BinaryJob(touch(tmp_path / "in" / "a.bin"))
    cfg = external(tmp_path, lifter_cmd="sh -c 'echo broken-lifter >&2; exit 1'")
    with pytest.raises(ToolFailure) as err:
        run_stage(job, Stage.LIFT, cfg)
    assert "broken-lifter" in err.value.stderr
    log_file = tmp_path / "work" / "logs" / job.job_id / "LIFT.log"
    assert "broken-lifter" in log_file.read_text()


def test_missing_tool_is_tool_failure(tmp_path):
    job = BinaryJob(touch(tmp_path / "in" / "a.bin"))
    cfg = external(tmp_path, lifter_cmd="definitely-not-a-real-tool-xyz {in} {out}")
    with pytest.raises(ToolFailure):
        run_stage(job, Stage.LIFT, cfg)


def test_timeout(tmp_path):
    job = BinaryJob(touch(tmp_path / "in" / "a.bin"))
    cfg = external(tmp_path, lifter_cmd="sleep 5")
    cfg.timeout_secs = 1
    with pytest.raises(StageTimeout):
        run_stage(job, Stage.LIFT, cfg)


def test_external_stages_chain_through_templates(tmp_path):
    job = BinaryJob(touch(tmp_path / "in" / "a.bin", b"payload"))
    cfg = external(tmp_path)
    run_stage(job, Stage.LIFT, cfg)
    out = run_stage(job, Stage.REOPT, cfg)
    assert out.read_bytes() == b"payload"


@pytest.mark.external
@pytest.mark.skipif(shutil.which("opt") is None, reason="LLVM opt not installed")
def test_external_optimizer_changes_ir(tmp_path):
    job = fixture_job()
    fx = ToolchainConfig(work_dir=str(tmp_path))
    lifted = run_stage(job, Stage.LIFT, fx)
    cfg = ToolchainConfig(work_dir=str(tmp_path), backend="EXTERNAL", optimizer_cmd="opt -O3 -S {in} -o {out}")
    out = run_stage(job, Stage.REOPT, cfg)
    assert out.exists() and out.read_bytes() != lifted.read_bytes()


@pytest.mark.external
@pytest.mark.skipif(not ALL_TOOLS, reason="lifter/optimizer/CPG extractor not installed")
def test_external_openplc_pair(tmp_path):
    cfg = ToolchainConfig(work_dir=str(tmp_path / "w"), backend="EXTERNAL")
    corpus = preprocess(fixture_tree(), cfg, tmp_path / "out")
    assert len(corpus) > 0


# -- composition ------------------------------------------------------------


def test_process_fixture_job(tmp_path):
    corpus = process_job(fixture_job(), ToolchainConfig(work_dir=str(tmp_path)))
    names = {g.function_name for g in corpus}
    assert names == {"__time_sub", "__time_add", "__normalize_timespec", "INTEGRAL_body__"}
    assert all(g.provenance == Provenance("openplc", "x86", "O0") for g in corpus)


def test_openplc_pair_both_contain_time_sub(tmp_path):
    import json

    truth = json.loads((default_fixture_dir() / "truth.json").read_text())
    corpus = preprocess(fixture_tree(), ToolchainConfig(work_dir=str(tmp_path / "w")), tmp_path / "out")
    by_arch = {}
    for g in corpus:
        by_arch.setdefault(g.provenance.architecture, set()).add(g.display_name)
    for arch in ("x86", "arm"):
        assert any(truth[n] == truth["__time_sub"] for n in by_arch[arch])
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
        "openplc__arm__O3__plc_prog.bin.json",
        "openplc__x86__O0__plc_prog.bin.json",
    ]


def test_corrupt_fixture_skipped(tmp_path, caplog):
    fixtures = tmp_path / "fixtures"
    shutil.copytree(default_fixture_dir(), fixtures)
    bad = discover_jobs(fixture_tree())[0]
    (fixtures / sha256_file(bad.input_path)[:16] / "cpg.json").write_text("{broken")
    cfg = ToolchainConfig(work_dir=str(tmp_path / "w"), fixture_dir=str(fixtures))
    with caplog.at_level(logging.ERROR, logger="regraph.pipeline"):
        corpus = preprocess(fixture_tree(), cfg, tmp_path / "out")
    assert {g.provenance.architecture for g in corpus} == {"x86"}
    failed = [r for r in caplog.records if r.levelno == logging.ERROR]
    assert len(failed) == 1 and "openplc__arm__O3" in failed[0].getMessage()


def test_all_jobs_failed(tmp_path):
    touch(tmp_path / "in" / "p" / "a" / "O0" / "x.bin", b"nothing")
    with pytest.raises(AllJobsFailed):
        preprocess(tmp_path / "in", ToolchainConfig(work_dir=str(tmp_path / "w")), tmp_path / "out")


def test_preprocess_deterministic_and_parallel_safe(tmp_path, monkeypatch):
    a = preprocess(fixture_tree(), ToolchainConfig(work_dir=str(tmp_path / "w1")), tmp_path / "o1")
    monkeypatch.setenv("REGRAPH_WORKERS", "2")
    b = preprocess(fixture_tree(), ToolchainConfig(work_dir=str(tmp_path / "w2")), tmp_path / "o2")
    assert corpus_to_json(a) == corpus_to_json(b)
