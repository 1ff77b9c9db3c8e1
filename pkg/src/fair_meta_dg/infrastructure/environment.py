"""실행 환경 정보 수집 및 로깅 유틸리티"""

import platform
import sys
from typing import Any

import numpy as np
import pandas as pd


def get_environment_info() -> dict[str, Any]:
    """OS, Python, 수치 라이브러리 버전을 수집합니다."""
    return {
        "os": {
            "system": platform.system(),
            "release": platform.release(),
            "machine": platform.machine(),
            "processor": platform.processor(),
        },
        "python": {
            "version": platform.python_version(),
            "implementation": platform.python_implementation(),
            "executable": sys.executable,
        },
        "libraries": {
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
    }


def format_environment_info(env_info: dict[str, Any]) -> str:
    lines = ["=" * 60, "Environment Information", "=" * 60]

    os_info = env_info.get("os", {})
    lines.append("\n[Operating System]")
    lines.append(f"  System: {os_info.get('system', 'Unknown')} {os_info.get('release', '')}".rstrip())
    lines.append(f"  Machine: {os_info.get('machine', 'Unknown')}")
    lines.append(f"  Processor: {os_info.get('processor', 'Unknown')}")

    py = env_info.get("python", {})
    lines.append("\n[Python]")
    lines.append(f"  Version: {py.get('implementation', '')} {py.get('version', 'Unknown')}".strip())
    lines.append(f"  Executable: {py.get('executable', 'Unknown')}")

    libs = env_info.get("libraries", {})
    if libs:
        lines.append("\n[Libraries]")
        for name, version in libs.items():
            lines.append(f"  {name}: {version}")

    lines.append("\n" + "=" * 60)
    return "\n".join(lines)
