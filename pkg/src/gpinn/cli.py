#!/usr/bin/env python3
"""
CLI interface for gpinn
"""

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
from rich import print as rprint

from . import __version__, formats
from .config import (
    GRADIENT_METHODS,
    PRESETS,
    ExperimentConfig,
    Settings,
    SweepCell,
    dump_experiment,
    load_experiment,
    parse_experiment,
)
from .errors import ConfigError, GpinnError, ProblemError, TrainingDivergedError
from .metrics import grid_for
from .optimize import RunResult, rar_refine, train
from .ui import UI, console, setup_logging

ui = UI()

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INTERRUPTED = 130

SWEEP_METRICS_PREFIXES = ("u_error", "du_error_", "mean_abs_residual", "param_error_", "k_error")


def _parse_seeds(text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    try:
        return [int(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError:
        raise ConfigError(f"--seeds 는 쉼표로 구분한 정수여야 합니다: {text!r}", field="--seeds")


def _cache_dir(cache: Optional[str]) -> Path:
    return Path(cache) if cache else Settings().cache_dir()


def _experiment_dir(cfg: ExperimentConfig, out: Optional[str]) -> Path:
    return Path(out or Settings().get("output_dir") or cfg.output_dir) / cfg.name


def _default_cell(cfg: ExperimentConfig) -> SweepCell:
    w = cfg.train.weights.w if cfg.method in GRADIENT_METHODS else 0.0
    return SweepCell(method=cfg.method, n_points=cfg.train.n_points, w=w)


def default_jobs() -> int:
    """이 프로세스가 쓸 수 있는 CPU 수 (논리 코어 기준)"""
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def _fail(code: int, message: str, hint: Optional[str] = None):
    ui.show_error(message, exit_code=code, hint=hint)
    sys.exit(code)


def _guarded(body):
    """예외를 종료 코드로 변환"""
    try:
        return body()
    except KeyboardInterrupt:
        rprint("\n[yellow]👋 실행이 취소되었습니다.[/yellow]")
        sys.exit(EXIT_INTERRUPTED)
    except ConfigError as e:
        _fail(EXIT_CONFIG, f"설정 오류: {e}", "gpinn presets --export 로 예시 설정을 받아 비교해 보세요")
    except ProblemError as e:
        _fail(EXIT_CONFIG, f"문제 정의 오류: {e}")
    except TrainingDivergedError as e:
        hint = f"--resume {e.checkpoint} 로 이어서 실행할 수 있습니다" if e.checkpoint else None
        _fail(EXIT_DIVERGED, f"학습이 발산했습니다 (iteration {e.iteration}): {e}", hint)
    except GpinnError as e:
        _fail(EXIT_ERROR, f"오류가 발생했습니다: {e}")


def _metrics_rows(result: RunResult) -> List[Dict]:
    return [snap.as_row() for snap in result.snapshots]


def _write_points(path: Path, points: np.ndarray, provenance: np.ndarray, axis_names):
    formats.write_csv(path, list(axis_names) + ["provenance"],
                      ([*p, int(r)] for p, r in zip(points, provenance)))


def write_run_artifacts(run_dir: Path, result: RunResult, axis_names, rar: bool = False) -> List[str]:
    """metrics.csv, result.json, 파라미터 파일, (RAR) 라운드별 점 파일"""
    run_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    rows = _metrics_rows(result)
    header = list(rows[0].keys())
    for row in rows[1:]:
        header.extend(key for key in row if key not in header)
    formats.write_csv(run_dir / "metrics.csv", header, ([row.get(c) for c in header] for row in rows))
    artifacts.append("metrics.csv")

    formats.write_json(run_dir / "result.json", result.summary())
    artifacts.append("result.json")

    formats.save_params(run_dir / "params_u.gpnp", result.networks.u)
    artifacts.append("params_u.gpnp")
    if result.networks.k is not None:
        formats.save_params(run_dir / "params_k.gpnp", result.networks.k)
        artifacts.append("params_k.gpnp")

    if rar:
        points, provenance = result.points.T_f, result.points.provenance
        last = int(provenance.max()) if len(provenance) else 0
        for r in range(0, max(last, 0) + 1):
            keep = provenance <= r
            name = f"points_round_{r}.csv"
            _write_points(run_dir / name, points[keep], provenance[keep], axis_names)
            artifacts.append(name)

    if (run_dir / "checkpoint.gpck").exists():
        artifacts.append("checkpoint.gpck")
    return artifacts


def execute_run(config_json: str, cell: Dict, seed: int, run_dir: str, cache_dir: str,
                rar: bool = False, resume: Optional[str] = None, progress=None) -> Dict:
    """실행 하나 (sweep worker 에서도 호출)"""
    cfg = parse_experiment(json.loads(config_json))
    cell = SweepCell(**cell)
    spec = cfg.problem.build()
    train_cfg = cfg.run_config(cell.method, cell.w, cell.n_points, seed)
    run_path = Path(run_dir)
    if rar:
        result = rar_refine(spec, train_cfg, cfg.rar, cache_dir=Path(cache_dir), progress=progress,
                            checkpoint_dir=run_path, resume_from=resume)
    else:
        result = train(spec, train_cfg, cache_dir=Path(cache_dir), progress=progress,
                       checkpoint_dir=run_path, resume_from=resume)
    artifacts = write_run_artifacts(run_path, result, spec.axis_names, rar)
    return {"summary": result.summary(), "artifacts": artifacts}


def _sweep_worker(task: Dict) -> Dict:
    try:
        out = execute_run(task["config"], task["cell"], task["seed"], task["run_dir"], task["cache_dir"])
        return {**task, "status": "ok", **out}
    except Exception as e:  # 셀 하나의 실패는 sweep 을 멈추지 않는다
        return {**task, "status": "failed", "error": f"{type(e).__name__}: {e}", "artifacts": []}


def update_manifest(exp_dir: Path, cfg: ExperimentConfig, runs: List[Dict], extra_artifacts: List[str] = ()):
    """실험 디렉토리의 manifest.json 에 실행 기록을 합친다 (같은 cell/seed 는 교체)"""
    path = exp_dir / "manifest.json"
    manifest = formats.read_json(path) if path.exists() else {}
    entries = {(e["cell"], e["seed"]): e for e in manifest.get("runs", [])}
    for run in runs:
        entries[(run["cell"], run["seed"])] = run
    artifacts = sorted(set(manifest.get("artifacts", [])) | set(extra_artifacts))
    manifest = {
        "experiment": cfg.name,
        "version": __version__,
        "created_at": manifest.get("created_at", datetime.now().isoformat()),
        "updated_at": datetime.now().isoformat(),
        "config": cfg.model_dump(mode="json"),
        "artifacts": artifacts,
        "runs": sorted(entries.values(), key=lambda e: (e["cell"], e["seed"])),
    }
    formats.write_json(path, manifest)
    return path


def _run_entry(cell: SweepCell, seed: int, run_dir: Path, exp_dir: Path, status: str, artifacts: List[str],
               started: str, error: Optional[str] = None) -> Dict:
    rel = run_dir.relative_to(exp_dir)
    entry = {
        "cell": cell.name,
        "seed": seed,
        "dir": str(rel),
        "status": status,
        "artifacts": [str(rel / a) for a in artifacts],
        "started_at": started,
        "finished_at": datetime.now().isoformat(),
    }
    if error:
        entry["error"] = error
    return entry


def _single(config: str, out: Optional[str], seeds: Optional[str], cache: Optional[str],
            resume: Optional[str], rar: bool):
    cfg = load_experiment(config)
    if rar and cfg.rar is None:
        raise ConfigError("rar 섹션이 없습니다", field="rar")
    seed_list = _parse_seeds(seeds)
    seed = seed_list[0] if seed_list else cfg.train.seed
    cell = _default_cell(cfg)
    exp_dir = _experiment_dir(cfg, out)
    run_dir = exp_dir / cell.name / str(seed)
    cache_dir = _cache_dir(cache)

    title = "RAR 실행" if rar else "학습 실행"
    ui.show_header(f"{title}: {cfg.name}", {"문제": cfg.problem.name, "셀": cell.name, "seed": seed,
                                            "반복": cfg.train.iterations, "캐시": cache_dir})
    with console.status(f"[bold green]{cfg.problem.name} 테스트 격자 / 기준해 준비 중..."):
        grid_for(cfg.problem.build(), cache_dir)
    total = cfg.train.iterations + (cfg.rar.rounds * cfg.rar.iterations_per_round if rar else 0)
    started = datetime.now().isoformat()
    with ui.training_progress() as progress:
        task = progress.add_task(cfg.problem.name, total=total, loss="-")

        def on_step(iteration: int, loss: float):
            progress.update(task, completed=min(iteration, total), loss=f"{loss:.3e}")

        out_run = execute_run(dump_experiment(cfg), cell.model_dump(), seed, str(run_dir), str(cache_dir),
                              rar=rar, resume=resume, progress=on_step)
    update_manifest(exp_dir, cfg, [_run_entry(cell, seed, run_dir, exp_dir, "ok", out_run["artifacts"], started)])
    ui.show_result(out_run["summary"])
    ui.show_success("결과 저장", run_dir)


@click.group()
@click.version_option(version=__version__)
@click.option("-v", "--verbose", is_flag=True, help="DEBUG 로그 출력")
@click.option("-q", "--quiet", is_flag=True, help="경고 이상만 출력")
def cli(verbose, quiet):
    """🧮 gPINN 실험 도구

    gradient-enhanced PINN 과 RAR 실험을 설정 파일 / preset 으로 실행합니다.

    사용 예시:
      gpinn presets
      gpinn run --config 3.2.1 --out out
      gpinn sweep --config presets/3.2.1.json --jobs 8
      gpinn rar --config 3.4.1
      gpinn report --out out/3.2.1
    """
    setup_logging(verbose=verbose, quiet=quiet)


@cli.command()
@click.option("--config", "config", required=True, help="설정 파일 경로 또는 preset 이름")
@click.option("--out", help="출력 디렉토리 (기본값: 설정의 output_dir)")
@click.option("--seeds", help="seed (쉼표 구분, 첫 번째만 사용)")
@click.option("--cache", help="기준해 캐시 디렉토리")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), help="체크포인트에서 재개")
def run(config, out, seeds, cache, resume):
    """학습 한 번 실행"""
    _guarded(lambda: _single(config, out, seeds, cache, resume, rar=False))


@cli.command()
@click.option("--config", "config", required=True, help="설정 파일 경로 또는 preset 이름")
@click.option("--out", help="출력 디렉토리")
@click.option("--seeds", help="seed (쉼표 구분, 첫 번째만 사용)")
@click.option("--cache", help="기준해 캐시 디렉토리")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), help="체크포인트에서 재개")
def rar(config, out, seeds, cache, resume):
    """잔차 기반 적응 점 추가(RAR) 실행"""
    _guarded(lambda: _single(config, out, seeds, cache, resume, rar=True))


def aggregate(cells: List[SweepCell], outcomes: List[Dict]) -> List[Dict]:
    """셀별 평균과 표준편차 (seed 2개 이상이면 표본 표준편차)"""
    metric_names: List[str] = []
    for outcome in outcomes:
        for key in outcome.get("summary", {}).get("final", {}):
            if key.startswith(SWEEP_METRICS_PREFIXES) and key not in metric_names:
                metric_names.append(key)
    rows = []
    for cell in cells:
        mine = [o for o in outcomes if o["cell"]["method"] == cell.method and o["cell"]["n_points"] == cell.n_points
                and o["cell"]["w"] == cell.w]
        ok = [o["summary"]["final"] for o in mine if o["status"] == "ok"]
        row = {"cell": cell.name, "method": cell.method, "n_points": cell.n_points, "w": cell.w,
               "n_seeds": len(ok), "n_failed": len(mine) - len(ok)}
        for name in metric_names:
            values = np.array([float(f[name]) for f in ok if name in f], dtype=np.float64)
            row[f"mean_{name}"] = float(np.mean(values)) if len(values) else None
            row[f"std_{name}"] = float(np.std(values, ddof=1)) if len(values) > 1 else (0.0 if len(values) else None)
        rows.append(row)
    return rows


def _sweep(config: str, out: Optional[str], seeds: Optional[str], cache: Optional[str], jobs: Optional[int]):
    cfg = load_experiment(config)
    seed_list = cfg.seeds(_parse_seeds(seeds))
    cells = cfg.cells()
    exp_dir = _experiment_dir(cfg, out)
    cache_dir = _cache_dir(cache)
    jobs = jobs or Settings().get("jobs") or default_jobs()
    config_json = dump_experiment(cfg)

    tasks = []
    for cell in cells:
        for seed in seed_list:
            tasks.append({
                "config": config_json,
                "cell": cell.model_dump(),
                "seed": seed,
                "run_dir": str(exp_dir / cell.name / str(seed)),
                "cache_dir": str(cache_dir),
                "started_at": datetime.now().isoformat(),
            })

    ui.show_header(f"Sweep: {cfg.name}", {"문제": cfg.problem.name, "셀": len(cells), "seed": len(seed_list),
                                          "실행 수": len(tasks), "jobs": jobs})
    with console.status(f"[bold green]{cfg.problem.name} 테스트 격자 / 기준해 준비 중..."):
        grid_for(cfg.problem.build(), cache_dir)
    outcomes = []
    with ui.training_progress() as progress:
        bar = progress.add_task("sweep", total=len(tasks), loss="-")
        if jobs == 1:
            for task in tasks:
                outcomes.append(_sweep_worker(task))
                progress.advance(bar)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_sweep_worker, task) for task in tasks]
                try:
                    for future in as_completed(futures):
                        outcomes.append(future.result())
                        progress.advance(bar)
                except KeyboardInterrupt:
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise

    failed = [o for o in outcomes if o["status"] != "ok"]
    for o in failed:
        rprint(f"[red]❌ {SweepCell(**o['cell']).name} seed {o['seed']}: {o['error']}[/red]")

    rows = aggregate(cells, outcomes)
    header = ["cell", "method", "n_points", "w", "n_seeds", "n_failed"]
    for row in rows:
        header.extend(k for k in row if k not in header)
    formats.write_csv(exp_dir / "sweep.csv", header, ([row.get(c) for c in header] for row in rows))

    entries = [
        _run_entry(SweepCell(**o["cell"]), o["seed"], Path(o["run_dir"]), exp_dir, o["status"],
                   o.get("artifacts", []), o["started_at"], o.get("error"))
        for o in outcomes
    ]
    update_manifest(exp_dir, cfg, entries, ["sweep.csv"])
    ui.show_sweep_table(rows, [c for c in ("u_error", "mean_abs_residual") if any(f"mean_{c}" in r for r in rows)])
    if failed:
        ui.show_info(f"{len(failed)}/{len(tasks)}회 실패 (manifest.json 참고), 나머지로 집계했습니다")
    ui.show_success("집계 저장", exp_dir / "sweep.csv")


@cli.command()
@click.option("--config", "config", required=True, help="설정 파일 경로 또는 preset 이름")
@click.option("--out", help="출력 디렉토리")
@click.option("--seeds", help="seed 목록 (쉼표 구분, 기본값: 10개)")
@click.option("--cache", help="기준해 캐시 디렉토리")
@click.option("--jobs", type=click.IntRange(min=1), help="병렬 실행 수 (기본값: settings 의 jobs, 없으면 사용 가능한 논리 코어 수)")
def sweep(config, out, seeds, cache, jobs):
    """점 개수 / 가중치 / 방법 / seed 조합 실행 후 sweep.csv 집계"""
    _guarded(lambda: _sweep(config, out, seeds, cache, jobs))


def _ratio(a, b) -> str:
    try:
        return f"{float(a) / float(b):.2f}×"
    except (TypeError, ValueError, ZeroDivisionError):
        return "-"


def render_report(rows: List[Dict], title: str) -> str:
    """PINN(NN) 셀 대비 gPINN(gNN) 셀 비교 표"""
    metrics = [k[len("mean_"):] for k in rows[0] if k.startswith("mean_")] if rows else []
    lines = [f"# {title}", "", f"셀 {len(rows)}개, 값은 seed 평균 ± 표준편차입니다.", ""]
    lines.append("| n_points | method | w | seeds | " + " | ".join(metrics) + " | u_error / baseline |")
    lines.append("|" + "---|" * (len(metrics) + 5))
    by_points: Dict[str, List[Dict]] = {}
    for row in rows:
        by_points.setdefault(str(row["n_points"]), []).append(row)
    for n_points, group in by_points.items():
        baseline = next((r for r in group if r["method"] in ("pinn", "nn")), None)
        for row in group:
            values = []
            for m in metrics:
                mean, std = row.get(f"mean_{m}"), row.get(f"std_{m}")
                values.append("-" if mean in (None, "") else f"{float(mean):.3e} ± {float(std or 0):.1e}")
            ratio = _ratio(row.get("mean_u_error"), baseline.get("mean_u_error")) if baseline else "-"
            lines.append(f"| {n_points} | {row['method']} | {row['w']} | {row['n_seeds']} | "
                         + " | ".join(values) + f" | {ratio} |")
    return "\n".join(lines) + "\n"


def _report(out: str):
    exp_dir = Path(out)
    sweep_csv = exp_dir / "sweep.csv" if exp_dir.is_dir() else exp_dir
    if not sweep_csv.exists():
        raise ConfigError(f"sweep.csv 를 찾을 수 없습니다: {sweep_csv}", field="--out")
    rows = formats.read_csv(sweep_csv)
    report_path = sweep_csv.parent / "report.md"
    report_path.write_text(render_report(rows, f"{sweep_csv.parent.name} PINN vs gPINN"), encoding="utf-8")
    manifest = sweep_csv.parent / "manifest.json"
    if manifest.exists():
        data = formats.read_json(manifest)
        data["artifacts"] = sorted(set(data.get("artifacts", [])) | {"report.md"})
        formats.write_json(manifest, data)
    ui.show_sweep_table(rows, [c for c in ("u_error",) if rows and f"mean_{c}" in rows[0]])
    ui.show_success("보고서 저장", report_path)


@cli.command()
@click.option("--out", required=True, help="sweep.csv 가 있는 실험 디렉토리 (또는 sweep.csv 경로)")
def report(out):
    """sweep.csv 를 report.md 로 정리"""
    _guarded(lambda: _report(out))


@cli.command()
@click.option("--export", "export_dir", type=click.Path(file_okay=False), help="preset JSON 파일로 내보내기")
def presets(export_dir):
    """내장 preset 목록 보기"""
    ui.show_presets(PRESETS)
    if export_dir:
        target = Path(export_dir)
        for name in PRESETS:
            path = target / f"{name}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dump_experiment(parse_experiment({"preset": name})), encoding="utf-8")
        rprint(f"[green]✅ {len(PRESETS)}개 preset 을 {target} 에 저장했습니다.[/green]")


@cli.command()
@click.argument("key", required=False)
@click.argument("value", required=False)
def settings(key, value):
    """사용자 기본값 보기 / 설정 (cache_dir, jobs, output_dir)"""
    store = Settings()

    def body():
        if key and value is not None:
            if key == "jobs" and not value.isdigit():
                raise ConfigError(f"jobs 는 양의 정수여야 합니다: {value!r}", field="jobs")
            parsed = int(value) if key == "jobs" else value
            store.set(key, parsed)
            rprint(f"[green]✅ {key} = {parsed}[/green]")
            return
        current = store.load()
        for name, val in current.items():
            if key and name != key:
                continue
            console.print(f"[cyan]{name}[/cyan] = {val}")

    _guarded(body)


def main():
    """Main entry point"""
    cli()


if __name__ == '__main__':
    main()
