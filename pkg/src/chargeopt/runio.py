"""Run artifacts: hashed configs, manifests, CSV and JSON-lines writers."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict

TRAJECTORY_COLUMNS = ("t", "I", "V", "soc", "T_jel", "T_can",
                      "J_SEI_int", "J_LP_int", "delta_film")
METRICS_COLUMNS = ("episode", "eval_mean", "eval_min", "eval_max",
                   "J_V", "J_Q", "J_pi", "buffer_size")
COMPARISON_COLUMNS = ("strategy", "t_given", "sei_total", "violations",
                      "peak_T", "peak_V", "terminal_soc", "status")
EPISODE_LOG_KEYS = ("k", "t", "a", "I", "V", "soc", "T_jel", "T_can",
                    "J_SEI_int", "J_LP_int", "violation", "reward", "done",
                    "cause")


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def append_csv_row(path, columns, row):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        if new:
            w.writeheader()
        w.writerow(row)


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str
    created: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S"))
    outputs: list = field(default_factory=list)

    def add(self, *paths):
        for p in paths:
            name = str(p)
            if name not in self.outputs:
                self.outputs.append(name)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls(**json.load(f))
