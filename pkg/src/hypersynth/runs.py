"""Run directory layout and append-only metrics logging.

Every CLI invocation operates inside ``runs/<name>/`` containing the resolved
config, checkpoints/, metrics.jsonl and reports/.  Metrics records carry no
timestamps so reruns with the same seed and config reproduce the log
byte-for-byte.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig


class RunDir:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    @property
    def config_path(self) -> Path:
        return self.path / "config"

    @property
    def checkpoints(self) -> Path:
        return self.path / "checkpoints"

    @property
    def metrics_path(self) -> Path:
        return self.path / "metrics.jsonl"

    @property
    def reports(self) -> Path:
        return self.path / "reports"

    def create(self, cfg: RunConfig, fresh: bool = False) -> "RunDir":
        self.path.mkdir(parents=True, exist_ok=True)
        self.checkpoints.mkdir(exist_ok=True)
        self.reports.mkdir(exist_ok=True)
        if fresh and self.metrics_path.exists():
            self.metrics_path.unlink()
        cfg.save(self.config_path)
        return self

    def log_metrics(self, record: dict) -> None:
        with open(self.metrics_path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    def read_metrics(self) -> list[dict]:
        if not self.metrics_path.exists():
            return []
        return [json.loads(ln) for ln in self.metrics_path.read_text().splitlines() if ln.strip()]

    def checkpoint_path(self, step: int | None = None) -> Path:
        return self.checkpoints / ("final.ckpt" if step is None else f"step_{step:08d}.ckpt")

    def latest_checkpoint(self) -> Path | None:
        final = self.checkpoint_path()
        if final.exists():
            return final
        steps = sorted(self.checkpoints.glob("step_*.ckpt"))
        return steps[-1] if steps else None

    def write_report(self, name: str, payload: dict) -> Path:
        self.reports.mkdir(parents=True, exist_ok=True)
        out = self.reports / f"{name}.json"
        out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return out


class Workspace:
    """runs/<name> resolver rooted at the config's runs_root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def run(self, name: str) -> RunDir:
        return RunDir(self.root / name)

    @classmethod
    def from_config(cls, cfg: RunConfig, base_dir: str | Path = ".") -> "Workspace":
        root = Path(cfg.get("paths.runs_root"))
        if not root.is_absolute():
            root = Path(base_dir) / root
        return cls(root)
