"""Command-line surface for the dataset pipeline.

Subcommands mirror the pipeline stages: generate -> verify-tasks ->
synthesize -> verify-traj -> sample / export-sft -> run -> eval, plus
stats and validate.  All dataset files are newline-delimited JSON
(UTF-8, no BOM) whose first line is a ``{"_meta": ...}`` header that
readers skip; outputs are byte-stable for a fixed seed once the header
timestamp is pinned with --generated-at.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import click

from .bundles import bundled_scene_ids, load_bundled_scene
from .metrics import (
    EpisodeSample,
    MetricConfig,
    MetricError,
    TokenF1Judge,
    build_report,
    mcq_success,
)
from .ports import make_controller, parse_controller_spec
from .runtime import EpisodeResult, run_episode
from .scene import Scene, SceneValidationError, load_scene
from .tasks import (
    EqaTask,
    TaskGenConfig,
    check_task_integrity,
    generate_tasks,
    verify_task,
)
from .trajectory import (
    Trajectory,
    export_sft,
    replay_trajectory,
    sample_for_training,
    synthesize_trajectory,
    verify_trajectory,
)

MAX_SEED = 2**64 - 1


# --------------------------------------------------------------------------
# JSONL plumbing
# --------------------------------------------------------------------------


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _write_jsonl(
    out: Path,
    kind: str,
    records: list[dict],
    generated_at: str | None,
    seed: int | None = None,
    extra: dict | None = None,
) -> None:
    meta: dict = {"kind": kind, "generated_at": generated_at or _utc_now(), "count": len(records)}
    if seed is not None:
        meta["seed"] = seed
    if extra:
        meta.update(extra)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"_meta": meta}) + "\n")
        for record in records:
            fh.write(_dump(record) + "\n")


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    """(line_number, record) pairs, meta lines skipped; malformed lines abort."""
    rows: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise click.ClickException(f"{path}:{line_no}: malformed JSON ({exc})")
            if isinstance(doc, dict) and "_meta" in doc:
                continue
            if not isinstance(doc, dict):
                raise click.ClickException(f"{path}:{line_no}: record is not an object")
            rows.append((line_no, doc))
    return rows


def _read_jsonl_lenient(path: Path) -> list[tuple[int, dict | None]]:
    """Like _read_jsonl but maps malformed lines to None instead of
    aborting, so validate can report them as ordinary failures."""
    rows: list[tuple[int, dict | None]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                rows.append((line_no, None))
                continue
            if isinstance(doc, dict) and "_meta" in doc:
                continue
            rows.append((line_no, doc if isinstance(doc, dict) else None))
    return rows


def _write_json(out: Path, doc: dict) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# scene resolution
# --------------------------------------------------------------------------


class SceneResolver:
    """Find scenes by id in a directory of ``<scene_id>.json`` files,
    falling back to the bundled scenes."""

    def __init__(self, scene_dir: Path | None) -> None:
        self._dir = scene_dir
        self._cache: dict[str, Scene] = {}

    def get(self, scene_id: str) -> Scene:
        if scene_id in self._cache:
            return self._cache[scene_id]
        scene: Scene | None = None
        if self._dir is not None:
            candidate = self._dir / f"{scene_id}.json"
            if candidate.is_file():
                scene = load_scene(candidate)
        if scene is None and scene_id in bundled_scene_ids():
            scene = load_bundled_scene(scene_id)
        if scene is None:
            raise KeyError(scene_id)
        if scene.scene_id != scene_id:
            raise click.ClickException(
                f"scene file for {scene_id!r} declares scene_id {scene.scene_id!r}"
            )
        self._cache[scene_id] = scene
        return scene


def _load_scene_ref(ref: str) -> Scene:
    """A scene argument is a JSON path or a bundled scene id."""
    path = Path(ref)
    if path.is_file():
        try:
            return load_scene(path)
        except SceneValidationError as exc:
            raise click.ClickException(str(exc))
    if ref in bundled_scene_ids():
        return load_bundled_scene(ref)
    raise click.ClickException(
        f"scene {ref!r} is neither a file nor a bundled id ({', '.join(bundled_scene_ids())})"
    )


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    """The JSON config file: defaults for flags shared across stages."""

    scenes: list[str] = field(default_factory=list)
    task: TaskGenConfig = field(default_factory=TaskGenConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    controller: str = "builtin:heuristic"
    thresholds: dict[str, float] = field(
        default_factory=lambda: {"confidence": 0.5, "llm": 0.5, "trajectory": 0.8}
    )
    seed: int = 0
    max_steps: int = 50

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError("seed must fit in u64")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        for name, value in self.thresholds.items():
            if name not in ("confidence", "llm", "trajectory"):
                raise ValueError(f"unknown threshold {name!r}")
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"threshold {name!r} must be in [0, 1]")
        parse_controller_spec(self.controller)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {"scenes", "task", "metric", "controller", "thresholds", "seed", "max_steps"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs: dict = {k: doc[k] for k in known & set(doc)}
        if "task" in kwargs:
            kwargs["task"] = TaskGenConfig.from_dict(kwargs["task"])
        if "metric" in kwargs:
            m = dict(kwargs["metric"])
            unknown = set(m) - {"d_values", "hfov_deg"}
            if unknown:
                raise ValueError(f"unknown metric fields: {sorted(unknown)}")
            mkwargs: dict = {}
            if "d_values" in m:
                mkwargs["d_values"] = tuple(float(d) for d in m["d_values"])
            if "hfov_deg" in m:
                mkwargs["hfov"] = math.radians(float(m["hfov_deg"]))
            kwargs["metric"] = MetricConfig(**mkwargs)
        if "thresholds" in kwargs:
            base = {"confidence": 0.5, "llm": 0.5, "trajectory": 0.8}
            base.update(kwargs["thresholds"])
            kwargs["thresholds"] = base
        return cls(**kwargs)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return RunConfig.from_dict(doc)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise click.ClickException(f"bad config {path}: {exc}")


def _pick(flag, config_value):
    return config_value if flag is None else flag


def _parse_d_values(text: str | None, config: RunConfig) -> tuple[float, ...]:
    if text is None:
        return config.metric.d_values
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
        MetricConfig(d_values=values)  # domain check
    except (ValueError, MetricError) as exc:
        raise click.ClickException(f"bad --d value {text!r}: {exc}")
    return values


# --------------------------------------------------------------------------
# shared record codecs
# --------------------------------------------------------------------------


def _tasks_from_file(path: Path) -> list[tuple[int, EqaTask]]:
    tasks = []
    for line_no, doc in _read_jsonl(path):
        try:
            tasks.append((line_no, EqaTask.from_dict(doc)))
        except (KeyError, ValueError, TypeError) as exc:
            raise click.ClickException(f"{path}:{line_no}: bad task record ({exc})")
    return tasks


def _trajectories_from_file(path: Path) -> list[tuple[int, Trajectory]]:
    trajectories = []
    for line_no, doc in _read_jsonl(path):
        try:
            trajectories.append((line_no, Trajectory.from_dict(doc)))
        except (KeyError, ValueError, TypeError) as exc:
            raise click.ClickException(f"{path}:{line_no}: bad trajectory record ({exc})")
    return trajectories


_SCENE_DIR_OPT = click.option(
    "--scene-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory of <scene_id>.json files; bundled scenes are the fallback.",
)
_CONFIG_OPT = click.option("--config", type=click.Path(dir_okay=False), default=None)
_GENERATED_AT_OPT = click.option(
    "--generated-at", default=None, help="Pin the _meta timestamp for byte-stable output."
)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


@click.group()
def main() -> None:
    """Embodied-QA dataset pipeline."""


@main.command()
@click.argument("scenes", nargs=-1)
@_CONFIG_OPT
@click.option("--count", type=int, default=None, help="Tasks per scene.")
@click.option("--mcq-ratio", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def generate(scenes, config, count, mcq_ratio, seed, out, generated_at) -> None:
    """Generate tasks for SCENES (paths or bundled ids)."""
    cfg = _load_config(config)
    refs = list(scenes) or cfg.scenes
    if not refs:
        raise click.UsageError("no scenes given (arguments or config.scenes)")
    seed = _pick(seed, cfg.seed)
    task_cfg = cfg.task
    if count is not None or mcq_ratio is not None:
        task_cfg = TaskGenConfig(
            count=count if count is not None else cfg.task.count,
            type_weights=cfg.task.type_weights,
            mcq_ratio=mcq_ratio if mcq_ratio is not None else cfg.task.mcq_ratio,
            min_start_distance_m=cfg.task.min_start_distance_m,
        )
    records: list[dict] = []
    skipped_total = 0
    for ref in refs:
        scene = _load_scene_ref(ref)
        report = generate_tasks(scene, task_cfg, seed=seed)
        records.extend(task.to_dict() for task in report.tasks)
        skipped_total += len(report.skipped)
        click.echo(f"{scene.scene_id}: {len(report.tasks)} tasks, {len(report.skipped)} skipped")
    _write_jsonl(
        out, "tasks", records, generated_at, seed=seed, extra={"skipped": skipped_total}
    )
    click.echo(f"wrote {len(records)} tasks to {out}")


@main.command("verify-tasks")
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_SCENE_DIR_OPT
@_CONFIG_OPT
@click.option("--conf-threshold", type=float, default=None)
@click.option("--llm-threshold", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def verify_tasks_cmd(
    task_file, scene_dir, config, conf_threshold, llm_threshold, out, generated_at
) -> None:
    """Verify tasks with the oracle scorers; exit 1 if any is rejected."""
    cfg = _load_config(config)
    conf = _pick(conf_threshold, cfg.thresholds["confidence"])
    llm = _pick(llm_threshold, cfg.thresholds["llm"])
    resolver = SceneResolver(scene_dir)
    records = []
    rejected = 0
    for line_no, task in _tasks_from_file(task_file):
        try:
            scene = resolver.get(task.scene_id)
        except KeyError:
            raise click.ClickException(f"{task_file}:{line_no}: unknown scene {task.scene_id!r}")
        verdict = verify_task(task, scene, confidence_threshold=conf, llm_threshold=llm)
        rejected += not verdict.accepted
        records.append(verdict.to_dict())
    _write_jsonl(out, "task-verdicts", records, generated_at)
    click.echo(f"{len(records) - rejected}/{len(records)} tasks accepted")
    if rejected:
        raise SystemExit(1)


@main.command()
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_SCENE_DIR_OPT
@_CONFIG_OPT
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def synthesize(task_file, scene_dir, config, seed, out, generated_at) -> None:
    """Synthesize a ground-truth trajectory for every task."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg.seed)
    resolver = SceneResolver(scene_dir)
    records = []
    for line_no, task in _tasks_from_file(task_file):
        try:
            scene = resolver.get(task.scene_id)
        except KeyError:
            raise click.ClickException(f"{task_file}:{line_no}: unknown scene {task.scene_id!r}")
        traj = synthesize_trajectory(scene, task, seed=seed)
        records.append(traj.to_dict())
    _write_jsonl(out, "trajectories", records, generated_at, seed=seed)
    click.echo(f"wrote {len(records)} trajectories to {out}")


@main.command("verify-traj")
@click.argument("traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_CONFIG_OPT
@click.option("--llm-threshold", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def verify_traj_cmd(traj_file, config, llm_threshold, out, generated_at) -> None:
    """Rule-check and judge trajectories; exit 1 if any is rejected."""
    cfg = _load_config(config)
    threshold = _pick(llm_threshold, cfg.thresholds["trajectory"])
    records = []
    rejected = 0
    for _, traj in _trajectories_from_file(traj_file):
        verdict = verify_trajectory(traj, llm_threshold=threshold)
        rejected += not verdict.accepted
        records.append(verdict.to_dict())
    _write_jsonl(out, "trajectory-verdicts", records, generated_at)
    click.echo(f"{len(records) - rejected}/{len(records)} trajectories accepted")
    if rejected:
        raise SystemExit(1)


@main.command()
@click.argument("traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_CONFIG_OPT
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def sample(traj_file, config, seed, out, generated_at) -> None:
    """Reduce each trajectory to key steps plus a seeded non-key draw."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg.seed)
    records = []
    for _, traj in _trajectories_from_file(traj_file):
        kept = sample_for_training(traj, seed=seed)
        doc = traj.to_dict()
        doc["steps"] = [s.to_dict() for s in kept]
        doc["sampling"] = {
            "source_steps": len(traj.steps),
            "key": sum(s.is_key for s in traj.steps),
            "non_key_kept": sum(not s.is_key for s in kept),
        }
        records.append(doc)
    _write_jsonl(out, "sampled-trajectories", records, generated_at, seed=seed)
    click.echo(f"wrote {len(records)} sampled trajectories to {out}")


@main.command("export-sft")
@click.argument("traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Sample steps with this seed before export; omit to export every step.",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def export_sft_cmd(traj_file, seed, out, generated_at) -> None:
    """Export supervised records; histories are always the true prefix."""
    records = []
    for _, traj in _trajectories_from_file(traj_file):
        steps = sample_for_training(traj, seed=seed) if seed is not None else None
        records.extend(export_sft(traj, steps))
    _write_jsonl(out, "sft-records", records, generated_at, seed=seed)
    click.echo(f"wrote {len(records)} sft records to {out}")


@main.command()
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_SCENE_DIR_OPT
@_CONFIG_OPT
@click.option("--controller", "controller_spec", default=None, help="builtin:heuristic, builtin:oracle, exec:<argv>, or http:<url>.")
@click.option("--trajectories", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Trajectory file for builtin:oracle (else synthesized from --seed).")
@click.option("--seed", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_GENERATED_AT_OPT
def run(
    task_file,
    scene_dir,
    config,
    controller_spec,
    trajectories,
    seed,
    max_steps,
    out,
    generated_at,
) -> None:
    """Run one episode per task and record the results."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg.seed)
    max_steps = _pick(max_steps, cfg.max_steps)
    spec = parse_controller_spec(_pick(controller_spec, cfg.controller))
    resolver = SceneResolver(scene_dir)

    replays: dict[str, Trajectory] = {}
    if trajectories is not None:
        replays = {traj.task_id: traj for _, traj in _trajectories_from_file(trajectories)}

    shared = None
    if spec.kind != "builtin" or spec.target == "heuristic":
        shared = make_controller(spec)
    records = []
    finals = 0
    try:
        for line_no, task in _tasks_from_file(task_file):
            try:
                scene = resolver.get(task.scene_id)
            except KeyError:
                raise click.ClickException(
                    f"{task_file}:{line_no}: unknown scene {task.scene_id!r}"
                )
            if shared is not None:
                controller = shared
            elif trajectories is not None:
                traj = replays.get(task.task_id)
                if traj is None:
                    raise click.ClickException(
                        f"{trajectories} has no trajectory for task {task.task_id!r}"
                    )
                controller = make_controller(spec, trajectory=traj)
            else:
                traj = synthesize_trajectory(scene, task, seed=seed)
                controller = make_controller(spec, trajectory=traj)
            result = run_episode(scene, task, controller, max_steps=max_steps)
            finals += result.terminated_by == "final_answer"
            records.append(result.to_dict())
    finally:
        if shared is not None and hasattr(shared, "close"):
            shared.close()
    _write_jsonl(out, "episodes", records, generated_at, seed=seed)
    click.echo(f"{finals}/{len(records)} episodes reached a final answer")


@main.command("eval")
@click.argument("episode_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_SCENE_DIR_OPT
@_CONFIG_OPT
@click.option("--d", "d_text", default=None, help="Comma-separated recall distances, e.g. 5,10,15.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def eval_cmd(episode_file, task_file, scene_dir, config, d_text, out) -> None:
    """Aggregate episodes into the metric report.

    MCQ episodes score success by normalized exact match; open episodes
    by the deterministic judge's sigma / 5.
    """
    cfg = _load_config(config)
    d_values = _parse_d_values(d_text, cfg)
    resolver = SceneResolver(scene_dir)
    tasks = {task.task_id: task for _, task in _tasks_from_file(task_file)}
    judge = TokenF1Judge()
    samples = []
    for line_no, doc in _read_jsonl(episode_file):
        try:
            episode = EpisodeResult.from_dict(doc)
        except (KeyError, ValueError, TypeError) as exc:
            raise click.ClickException(f"{episode_file}:{line_no}: bad episode ({exc})")
        task = tasks.get(episode.task_id)
        if task is None:
            raise click.ClickException(
                f"{episode_file}:{line_no}: episode references unknown task {episode.task_id!r}"
            )
        try:
            scene = resolver.get(task.scene_id)
            objects = [scene.object_by_id(oid) for oid in task.related_object_ids]
        except KeyError as exc:
            raise click.ClickException(
                f"{episode_file}:{line_no}: task {task.task_id!r} references {exc}"
            )
        if task.format == "mcq":
            success = float(mcq_success(episode.answer, task.answer, task.options))
        else:
            predicted = episode.answer if episode.answer is not None else ""
            success = judge.judge(predicted, task.answer).sigma / 5.0
        samples.append(
            EpisodeSample(
                episode_id=episode.task_id,
                success=success,
                poses=episode.visited_poses,
                objects=objects,
                shortest_path_m=task.shortest_path_m,
                traveled_m=episode.traveled_m,
                steps_used=episode.steps_used,
                hfov=scene.camera.hfov,
            )
        )
    if not samples:
        raise click.ClickException("no episodes to evaluate")
    report = build_report(samples, MetricConfig(d_values=d_values))
    _write_json(out, report.to_dict())
    click.echo(
        f"n={report.n} success_rate={report.success_rate:.1f}% "
        + " ".join(f"e_path@{k}={v:.4f}" for k, v in report.e_path.items())
    )


@main.command()
@click.argument("traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def stats(traj_file, out) -> None:
    """Corpus statistics for a trajectory file."""
    rows = _trajectories_from_file(traj_file)
    if not rows:
        raise click.ClickException("no trajectories to summarize")
    n = len(rows)
    step_counts = []
    tool_counts = []
    lengths = []
    step_hist: dict[str, int] = {}
    tool_hist: dict[str, int] = {}
    for _, traj in rows:
        step_counts.append(len(traj.steps))
        tools = 0
        for step in traj.steps:
            name = step.code.partition("(")[0]
            tool_hist[name] = tool_hist.get(name, 0) + 1
            if name not in ("GoNextPoint", "FinalAnswer"):
                tools += 1
        tool_counts.append(tools)
        length = 0.0
        prev = traj.initial_pose
        for step in traj.steps:
            length += math.dist(prev.position, step.pose_after.position)
            prev = step.pose_after
        lengths.append(length)
        step_hist[str(len(traj.steps))] = step_hist.get(str(len(traj.steps)), 0) + 1
    doc = {
        "n": n,
        "avg_steps": sum(step_counts) / n,
        "avg_tool_calls": sum(tool_counts) / n,
        "avg_length_m": sum(lengths) / n,
        "steps_histogram": dict(sorted(step_hist.items(), key=lambda kv: int(kv[0]))),
        "tool_histogram": dict(sorted(tool_hist.items())),
    }
    _write_json(out, doc)
    click.echo(
        f"n={n} avg_steps={doc['avg_steps']:.2f} "
        f"avg_tool_calls={doc['avg_tool_calls']:.2f} avg_length_m={doc['avg_length_m']:.2f}"
    )


@main.command()
@click.option("--tasks", "task_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--trajectories", "traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@_SCENE_DIR_OPT
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def validate(task_file, traj_file, scene_dir, out) -> None:
    """Cross-file referential integrity plus byte-exact replay.

    Exit code 0 iff zero failures; each failure carries its file and
    line number.
    """
    resolver = SceneResolver(scene_dir)
    failures: list[dict] = []

    def fail(file: Path, line: int, record_id: str, problem: str) -> None:
        failures.append(
            {"file": str(file), "line": line, "id": record_id, "problem": problem}
        )

    tasks: dict[str, EqaTask] = {}
    for line_no, doc in _read_jsonl_lenient(task_file):
        if doc is None:
            fail(task_file, line_no, "?", "malformed-json")
            continue
        try:
            task = EqaTask.from_dict(doc)
        except (KeyError, ValueError, TypeError) as exc:
            fail(task_file, line_no, str(doc.get("task_id", "?")), f"bad-record: {exc}")
            continue
        try:
            scene = resolver.get(task.scene_id)
        except KeyError:
            fail(task_file, line_no, task.task_id, f"unknown-scene: {task.scene_id}")
            continue
        for problem in check_task_integrity(task, scene):
            fail(task_file, line_no, task.task_id, problem)
        tasks[task.task_id] = task

    n_trajectories = 0
    for line_no, doc in _read_jsonl_lenient(traj_file):
        n_trajectories += 1
        if doc is None:
            fail(traj_file, line_no, "?", "malformed-json")
            continue
        try:
            traj = Trajectory.from_dict(doc)
        except (KeyError, ValueError, TypeError) as exc:
            fail(traj_file, line_no, str(doc.get("task_id", "?")), f"bad-record: {exc}")
            continue
        task = tasks.get(traj.task_id)
        if task is None:
            fail(traj_file, line_no, traj.task_id, "unknown-task")
            continue
        try:
            scene = resolver.get(traj.scene_id)
        except KeyError:
            fail(traj_file, line_no, traj.task_id, f"unknown-scene: {traj.scene_id}")
            continue
        for problem in replay_trajectory(scene, traj):
            fail(traj_file, line_no, traj.task_id, f"replay-mismatch: {problem}")

    report = {
        "n_tasks": len(tasks),
        "n_trajectories": n_trajectories,
        "n_failures": len(failures),
        "failures": failures,
    }
    if out is not None:
        _write_json(out, report)
    for failure in failures[:20]:
        click.echo(
            f"{failure['file']}:{failure['line']}: {failure['id']}: {failure['problem']}"
        )
    click.echo(
        f"{report['n_tasks']} tasks, {report['n_trajectories']} trajectories, "
        f"{report['n_failures']} failures"
    )
    if failures:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
