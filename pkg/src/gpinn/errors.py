"""
예외 계층
"""


class GpinnError(Exception):
    """gpinn 공통 예외"""


class GraphError(GpinnError, ValueError):
    """계산 그래프 사용 오류 (다른 그래프의 노드, 인자 개수, 비유한 값)"""


class NetworkError(GpinnError, ValueError):
    """네트워크 차원 / ansatz 불일치"""


class ProblemError(GpinnError, ValueError):
    """문제 정의 범위 밖의 호출"""


class LossError(GpinnError, ValueError):
    """손실 구성 오류"""


class TrainingDivergedError(GpinnError, RuntimeError):
    """학습 발산 (loss 또는 gradient 가 NaN/Inf)"""

    def __init__(self, message: str, iteration: int = -1, checkpoint=None):
        super().__init__(message)
        self.iteration = iteration
        self.checkpoint = checkpoint


class ReferenceSolutionError(GpinnError, RuntimeError):
    """기준해 계산 실패"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class ConfigError(GpinnError, ValueError):
    """설정 파일 스키마 위반"""

    def __init__(self, message: str, field: str = None, line: int = None):
        super().__init__(message)
        self.field = field
        self.line = line


class FormatError(GpinnError, ValueError):
    """바이너리 / CSV 산출물 형식 오류"""
