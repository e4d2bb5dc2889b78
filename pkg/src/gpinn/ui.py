"""
사용자 인터페이스 관리
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rich import print as rprint
from rich.console import Console, Group
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn, TimeRemainingColumn
from rich.table import Table

from . import __version__

console = Console()


def setup_logging(verbose: bool = False, quiet: bool = False):
    """라이브러리 로그를 RichHandler 로 출력"""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


def _fmt(value, digits: int = 4) -> str:
    if value is None or value == "":
        return "-"
    try:
        value = float(value)
    except (TypeError, ValueError):
        return str(value)
    if value != value:
        return "nan"
    return f"{value:.{digits}e}" if value and (abs(value) < 1e-2 or abs(value) >= 1e4) else f"{value:.{digits}g}"


class UI:
    def __init__(self):
        self.console = console

    def show_header(self, title: str, details: Optional[Dict[str, object]] = None):
        """실행 헤더: 제목과 실행 조건 (문제, 셀, seed 등)"""
        grid = Table.grid(padding=(0, 2))
        grid.add_column(style="dim")
        grid.add_column(style="bold")
        for key, value in (details or {}).items():
            grid.add_row(key, str(value))
        body = Group(f"[bold blue]{title}[/bold blue]", grid) if details else f"[bold blue]{title}[/bold blue]"
        self.console.print(Panel(body, style="blue", subtitle=f"gpinn {__version__}", padding=(0, 2)))

    def training_progress(self) -> Progress:
        return Progress(
            TextColumn("[bold green]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TextColumn("loss [cyan]{task.fields[loss]}"),
            TimeElapsedColumn(),
            TimeRemainingColumn(),
            console=self.console,
            transient=True,
        )

    def show_result(self, summary: Dict):
        """단일 실행 결과 테이블"""
        final = summary["final"]
        table = Table(title=f"{summary['problem']} (seed {summary['seed']}, {summary['n_points']} 점)")
        table.add_column("지표", style="cyan", min_width=22)
        table.add_column("값", style="green", justify="right")
        table.add_row("iteration", str(final["iteration"]))
        for key, value in final.items():
            if key in ("iteration", "n_points"):
                continue
            table.add_row(key, _fmt(value))
        table.add_row("wall clock (s)", f"{summary['wall_clock_seconds']:.1f}")
        self.console.print(table)

    def show_presets(self, presets: Dict[str, Dict]):
        table = Table(title=f"Preset ({len(presets)}개)")
        table.add_column("이름", style="cyan", width=12)
        table.add_column("문제", style="green", min_width=14)
        table.add_column("방법", style="yellow", width=6)
        table.add_column("Depth", style="magenta", justify="right")
        table.add_column("Width", style="magenta", justify="right")
        table.add_column("최적화", style="blue")
        table.add_column("학습률", style="white", justify="right")
        table.add_column("반복", style="white", justify="right")
        table.add_column("점", style="white", justify="right")
        table.add_column("RAR", style="cyan")
        for name, data in presets.items():
            train = data["train"]
            rar = data.get("rar")
            table.add_row(
                name,
                data["problem"]["name"],
                data["method"],
                str(train["depth"]),
                str(train["width"]),
                train["optimizer"],
                f"{train['learning_rate']:g}",
                f"{train['iterations']:,}",
                str(train["n_points"]),
                f"m={rar['m']} × {rar['rounds']}" if rar else "-",
            )
        self.console.print(table)

    def show_sweep_table(self, rows: Sequence[Dict], columns: Optional[List[str]] = None):
        """sweep.csv 셀별 평균 ± 표준편차"""
        if not rows:
            rprint("[yellow]📝 집계할 결과가 없습니다.[/yellow]")
            return
        columns = columns or [c[len("mean_"):] for c in rows[0] if c.startswith("mean_")]
        table = Table(title=f"Sweep 결과 ({len(rows)}개 셀)")
        table.add_column("셀", style="cyan")
        table.add_column("seed", style="white", justify="right")
        table.add_column("실패", style="red", justify="right")
        for name in columns:
            table.add_column(name, style="green", justify="right")
        for row in rows:
            cells = [_fmt(row.get(f"mean_{c}"), 3) + " ± " + _fmt(row.get(f"std_{c}"), 2) for c in columns]
            table.add_row(str(row["cell"]), str(row["n_seeds"]), str(row["n_failed"]), *cells)
        self.console.print(table)

    def show_error(self, message: str, exit_code: Optional[int] = None, hint: Optional[str] = None):
        """오류 패널; 종료 코드와 다음 조치를 함께 보여준다"""
        body = f"[red]❌ {message}[/red]"
        if hint:
            body += f"\n[yellow]💡 {hint}[/yellow]"
        title = "오류" if exit_code is None else f"오류 (exit {exit_code})"
        self.console.print(Panel(body, style="red", title=title, title_align="left"))

    def show_success(self, message: str, path: Optional[Path] = None):
        """완료 한 줄 (+ 산출물 경로)"""
        self.console.print(f"[green]✅ {message}[/green]")
        if path is not None:
            self.console.print(f"   [cyan]{path}[/cyan]")

    def show_info(self, message: str):
        self.console.print(f"[blue]ℹ️  {message}[/blue]")
