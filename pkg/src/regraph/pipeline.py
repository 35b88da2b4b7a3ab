"""Preprocessing chain: lift -> re-optimize -> decompile -> extract CPG.

External tools are driven through command templates with ``{in}``/``{out}``
placeholders. The FIXTURE backend replays frozen stage artifacts looked up by
the SHA-256 of the input binary, so everything downstream runs without any
tool installed.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
import shlex
import shutil
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .errors import (
    AllJobsFailed,
    ConfigError,
    EmptyRoot,
    MissingFixture,
    ReGraphError,
    StageOrderError,
    StageTimeout,
    ToolFailure,
)
from .graph import (
    DEFAULT_MAX_NODES,
    FunctionCorpus,
    Provenance,
    import_cpg_export,
    merge_corpora,
    serialize_corpus,
    with_provenance,
)

log = logging.getLogger(__name__)

HIGHEST_OPT_LEVEL = "-O3"
FIXTURE_HASH_LEN = 16


class Stage(str, enum.Enum):
    LIFT = "LIFT"
    REOPT = "REOPT"
    DECOMPILE = "DECOMPILE"
    EXTRACT_CPG = "EXTRACT_CPG"


STAGES = tuple(Stage)
STAGE_OUTPUT = {
    Stage.LIFT: "lifted.ll",
    Stage.REOPT: "reopt.ll",
    Stage.DECOMPILE: "decompiled.c",
    Stage.EXTRACT_CPG: "cpg.json",
}


class Backend(str, enum.Enum):
    EXTERNAL = "EXTERNAL"
    FIXTURE = "FIXTURE"


class Layout(str, enum.Enum):
    DEFAULT_TREE = "DEFAULT_TREE"
    FLAT = "FLAT"


def default_fixture_dir() -> Path:
    return Path(str(resources.files("regraph").joinpath("fixtures")))


def fixture_tree() -> Path:
    """Binary tree (project/arch/opt/file) matching the shipped fixtures."""
    return default_fixture_dir() / "binaries"


@dataclass
class ToolchainConfig:
    lifter_cmd: str = "retdec-decompiler --stop-after bin2llvmir -o {out} {in}"
    optimizer_cmd: str = "opt {opt_level} -S {in} -o {out}"
    decompiler_cmd: str = "retdec-decompiler --backend-no-opts -o {out} {in}"
    cpg_extractor_cmd: str = "regraph-joern-export {in} {out}"
    work_dir: str = "work"
    timeout_secs: int = 600
    backend: Backend = Backend.FIXTURE
    fixture_dir: str | None = None
    workers: int = 1
    max_nodes: int = DEFAULT_MAX_NODES

    def __post_init__(self):
        if not isinstance(self.backend, Backend):
            self.backend = Backend(str(self.backend).upper())
        if int(self.timeout_secs) < 1:
            raise ConfigError("timeout_secs must be >= 1")
        if self.backend is Backend.EXTERNAL:
            for name in ("lifter_cmd", "optimizer_cmd", "decompiler_cmd", "cpg_extractor_cmd"):
                if not str(getattr(self, name)).strip():
                    raise ConfigError(f"{name} must be set for the EXTERNAL backend")
            opt = self.optimizer_cmd
            if "{opt_level}" not in opt and HIGHEST_OPT_LEVEL not in shlex.split(opt):
                raise ConfigError(
                    f"optimizer_cmd must request {HIGHEST_OPT_LEVEL} (or use {{opt_level}})"
                )

    @property
    def fixture_root(self) -> Path:
        return Path(self.fixture_dir) if self.fixture_dir else default_fixture_dir()

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ToolchainConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"toolchain config not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def worker_count(default: int = 1) -> int:
    env = os.environ.get("REGRAPH_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer REGRAPH_WORKERS=%r", env)
    return max(1, default)


@dataclass(frozen=True)
class BinaryJob:
    input_path: Path
    provenance: Provenance = field(default_factory=Provenance)
    job_id: str = ""

    def __post_init__(self):
        p = Path(self.input_path)
        if not p.is_file() or p.stat().st_size == 0:
            raise ReGraphError(f"input binary missing or empty: {p}")
        if not self.job_id:
            object.__setattr__(self, "job_id", p.name)


def _job_id(rel: Path) -> str:
    return "__".join(rel.parts)


def discover_jobs(root: str | Path, layout: Layout | str = Layout.DEFAULT_TREE) -> list[BinaryJob]:
    root = Path(root)
    layout = Layout(layout)
    if not root.is_dir():
        raise EmptyRoot(f"{root} is not a directory")
    jobs = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root)
        if path.stat().st_size == 0:
            log.warning("skipping empty file %s", path)
            continue
        if layout is Layout.DEFAULT_TREE:
            if len(rel.parts) < 4:
                log.warning("skipping %s: not under project/architecture/opt-level", rel)
                continue
            prov = Provenance(*rel.parts[:3])
        else:
            prov = Provenance()
        jobs.append(BinaryJob(path, prov, _job_id(rel)))
    if not jobs:
        raise EmptyRoot(f"no input binaries found under {root}")
    return jobs


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def job_dir(job: BinaryJob, cfg: ToolchainConfig) -> Path:
    return Path(cfg.work_dir) / "jobs" / job.job_id


def stage_output(job: BinaryJob, stage: Stage, cfg: ToolchainConfig) -> Path:
    return job_dir(job, cfg) / STAGE_OUTPUT[stage]


def _stage_input(job: BinaryJob, stage: Stage, cfg: ToolchainConfig) -> Path:
    idx = STAGES.index(stage)
    if idx == 0:
        return Path(job.input_path)
    prev = stage_output(job, STAGES[idx - 1], cfg)
    if not prev.is_file():
        raise StageOrderError(
            f"{job.job_id}: {stage.value} needs {STAGES[idx - 1].value} output {prev}"
        )
    return prev


def _template(stage: Stage, cfg: ToolchainConfig) -> str:
    return {
        Stage.LIFT: cfg.lifter_cmd,
        Stage.REOPT: cfg.optimizer_cmd,
        Stage.DECOMPILE: cfg.decompiler_cmd,
        Stage.EXTRACT_CPG: cfg.cpg_extractor_cmd,
    }[stage]


def render_command(template: str, src: Path, dst: Path) -> list[str]:
    subs = {"{in}": str(src), "{out}": str(dst), "{opt_level}": HIGHEST_OPT_LEVEL}
    argv = []
    for tok in shlex.split(template):
        for key, val in subs.items():
            tok = tok.replace(key, val)
        argv.append(tok)
    return argv


def run_stage(job: BinaryJob, stage: Stage | str, cfg: ToolchainConfig) -> Path:
    stage = Stage(stage)
    src = _stage_input(job, stage, cfg)
    dst = stage_output(job, stage, cfg)
    dst.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(cfg.work_dir) / "logs" / job.job_id / f"{stage.value}.log"
    log_path.parent.mkdir(parents=True, exist_ok=True)

    if cfg.backend is Backend.FIXTURE:
        digest = sha256_file(job.input_path)[:FIXTURE_HASH_LEN]
        fixture = cfg.fixture_root / digest / STAGE_OUTPUT[stage]
        if not fixture.is_file():
            raise MissingFixture(f"{job.job_id}: no {stage.value} fixture at {fixture}")
        shutil.copyfile(fixture, dst)
        log_path.write_text(f"fixture {digest}/{STAGE_OUTPUT[stage]}\n", encoding="utf-8")
        return dst

    argv = render_command(_template(stage, cfg), src, dst)
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=cfg.timeout_secs, check=False
        )
    except subprocess.TimeoutExpired as exc:
        log_path.write_text(f"$ {shlex.join(argv)}\n[timeout after {cfg.timeout_secs}s]\n")
        raise StageTimeout(f"{job.job_id}: {stage.value} exceeded {cfg.timeout_secs}s") from exc
    except OSError as exc:
        raise ToolFailure(f"{job.job_id}: {stage.value} could not start {argv[0]!r}", str(exc)) from exc
    log_path.write_text(
        f"$ {shlex.join(argv)}\n[exit {proc.returncode}]\n--- stdout\n{proc.stdout}--- stderr\n{proc.stderr}",
        encoding="utf-8",
    )
    if proc.returncode != 0:
        raise ToolFailure(f"{job.job_id}: {stage.value} exited {proc.returncode}", proc.stderr)
    if not dst.exists():
        raise ToolFailure(f"{job.job_id}: {stage.value} produced no output at {dst}", proc.stderr)
    return dst


def process_job(job: BinaryJob, cfg: ToolchainConfig) -> FunctionCorpus:
    out = None
    for stage in STAGES:
        out = run_stage(job, stage, cfg)
    corpus = import_cpg_export(out, format=None, max_nodes=cfg.max_nodes)
    return with_provenance(corpus, job.provenance)


def preprocess(
    root: str | Path,
    cfg: ToolchainConfig,
    out_dir: str | Path,
    layout: Layout | str = Layout.DEFAULT_TREE,
) -> FunctionCorpus:
    """Run every job through all four stages and merge the resulting CPGs.

    Writes ``<out_dir>/<job_id>.json`` (canonical GRAPH_JSON) per binary.
    Failing jobs are logged and skipped.
    """
    jobs = discover_jobs(root, layout)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = threading.Lock()
    failures: list[tuple[str, str]] = []

    def run(job: BinaryJob):
        try:
            corpus = process_job(job, cfg)
        except ReGraphError as exc:
            with lock:
                failures.append((job.job_id, str(exc)))
                log.error("job %s failed: %s", job.job_id, exc)
            return None
        serialize_corpus(corpus, out_dir / f"{job.job_id}.json")
        return corpus

    workers = worker_count(cfg.workers)
    if workers == 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    good = [c for c in results if c is not None]
    if not good:
        raise AllJobsFailed(f"all {len(jobs)} job(s) failed: " + "; ".join(m for _, m in failures))
    if failures:
        log.warning("%d of %d job(s) failed and were skipped", len(failures), len(jobs))
    return merge_corpora(good)
