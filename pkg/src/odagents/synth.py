"""Seeded synthetic job-log and telemetry generator.

Emulates the shape of a real supercomputer's job telemetry: science domains
with distinct power/energy regimes, CPU vs GPU offsets, and noise that scales
with signal level. Emits a scheduler-log table plus joinable per-node power
and energy tables for the analytics store, a catalog manifest describing
them, and a per-job training file carrying the 16 prediction targets.

Per-node draws are limited to a few sampled nodes per job; whole-job totals
scale the sampled per-node mean by the node count.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .prediction import FEATURE_REGISTRY

SCHEMA_VERSION = 1

NODES_SAMPLED_PER_JOB = 4


@dataclass(frozen=True)
class DomainProfile:
    name: str
    description: str
    weight: float
    base_node_power_w: float
    gpu_power_w: float
    gpu_affinity: float  # probability a job uses GPUs


DOMAIN_PROFILES = (
    DomainProfile("CFD", "Computational fluid dynamics simulations", 0.20, 620.0, 420.0, 0.80),
    DomainProfile("Physics", "High-energy and condensed matter physics", 0.16, 580.0, 390.0, 0.70),
    DomainProfile("Materials Science", "Molecular dynamics and materials modeling", 0.13, 540.0, 360.0, 0.65),
    DomainProfile("Biology", "Genomics and protein structure workloads", 0.11, 460.0, 330.0, 0.55),
    DomainProfile("Chemistry", "Quantum chemistry calculations", 0.10, 500.0, 350.0, 0.60),
    DomainProfile("Climate", "Earth system and climate modeling", 0.09, 560.0, 370.0, 0.50),
    DomainProfile("Fusion Engineering", "Plasma and fusion device simulations", 0.08, 640.0, 440.0, 0.75),
    DomainProfile("Astrophysics", "Cosmological and stellar simulations", 0.06, 600.0, 410.0, 0.72),
    DomainProfile("Nuclear Fuel", "Reactor and fuel cycle modeling", 0.04, 520.0, 340.0, 0.45),
    DomainProfile("Computer Science", "Systems, AI and workflow research", 0.03, 430.0, 380.0, 0.85),
)

NODE_COUNT_CHOICES = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048)
NODE_COUNT_WEIGHTS = (0.22, 0.16, 0.13, 0.11, 0.09, 0.08, 0.06, 0.05, 0.04, 0.03, 0.02, 0.01)

WALLTIME_CHOICES = (600.0, 1800.0, 3600.0, 7200.0, 14400.0, 28800.0, 86400.0)
WALLTIME_WEIGHTS = (0.10, 0.18, 0.28, 0.20, 0.12, 0.08, 0.04)

GPU_IDLE_POWER_W = 25.0

EPOCH = dt.datetime(2024, 1, 1, 0, 0, 0)


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _ts(seconds_from_epoch: float) -> str:
    return (EPOCH + dt.timedelta(seconds=float(seconds_from_epoch))).strftime("%Y-%m-%d %H:%M:%S")


def generate_jobs(seed: int, n_jobs: int) -> list[dict]:
    """Draw the per-job records and their sampled per-node telemetry."""
    if n_jobs < 1:
        raise ValueError("n_jobs must be >= 1")
    rng = np.random.default_rng(seed)
    weights = np.array([d.weight for d in DOMAIN_PROFILES])
    weights = weights / weights.sum()
    jobs: list[dict] = []
    for job_id in range(1, n_jobs + 1):
        domain = DOMAIN_PROFILES[int(rng.choice(len(DOMAIN_PROFILES), p=weights))]
        gpu = bool(rng.random() < domain.gpu_affinity)
        node_count = int(rng.choice(NODE_COUNT_CHOICES, p=NODE_COUNT_WEIGHTS))
        walltime = float(rng.choice(WALLTIME_CHOICES, p=WALLTIME_WEIGHTS))
        start = float(rng.uniform(0, 360 * 24 * 3600))
        submit = start - float(rng.uniform(0, 3600))

        n_sample = min(node_count, NODES_SAMPLED_PER_JOB)
        level = domain.base_node_power_w * (1.55 if gpu else 1.0)
        node_power = level + rng.normal(0, 0.08 * level, n_sample)
        node_power_max = node_power * (1 + np.abs(rng.normal(0, 0.10, n_sample)))
        if gpu:
            gpu_power = domain.gpu_power_w + rng.normal(0, 0.10 * domain.gpu_power_w, n_sample)
        else:
            gpu_power = GPU_IDLE_POWER_W + np.abs(rng.normal(0, 3.0, n_sample))
        gpu_power_max = gpu_power * (1 + np.abs(rng.normal(0, 0.08, n_sample)))
        cpu_mem_power = 40.0 + 0.05 * node_power + rng.normal(0, 2.0, n_sample)
        temp = 28.0 + 0.018 * node_power + rng.normal(0, 1.5, n_sample)
        temp_max = temp + np.abs(rng.normal(0, 2.0, n_sample))

        node_energy = node_power * walltime
        gpu_energy = gpu_power * walltime
        cpu_mem_energy = cpu_mem_power * 0.7 * walltime

        jobs.append(
            {
                "job_id": job_id,
                "domain": domain.name,
                "node_count": node_count,
                "walltime_seconds": walltime,
                "utilization": "GPU" if gpu else "CPU",
                "submit_time": _ts(submit),
                "start_time": _ts(start),
                "end_time": _ts(start + walltime),
                "node_power": node_power,
                "node_power_max_arr": node_power_max,
                "gpu_power": gpu_power,
                "gpu_power_max_arr": gpu_power_max,
                "cpu_mem_power": cpu_mem_power,
                "temp": temp,
                "temp_max": temp_max,
                "node_energy": node_energy,
                "gpu_energy": gpu_energy,
                "cpu_mem_energy": cpu_mem_energy,
            }
        )
    return jobs


def job_features(job: dict) -> dict[str, float]:
    """The 16 per-job targets, aggregated over the sampled nodes (totals
    scaled to the full node count)."""
    scale = job["node_count"]
    return {
        "node_power_max": float(job["node_power"].max()),
        "node_power_mean": float(job["node_power"].mean()),
        "node_power_stddev": float(job["node_power"].std()),
        "gpu_power_max": float(job["gpu_power"].max()),
        "gpu_power_mean": float(job["gpu_power"].mean()),
        "gpu_power_stddev": float(job["gpu_power"].std()),
        "cpu_mem_power_max": float(job["cpu_mem_power"].max()),
        "node_temp_max": float(job["temp_max"].max()),
        "node_temp_stddev": float(job["temp"].std()),
        "total_node_energy": float(job["node_energy"].mean() * scale),
        "total_gpu_energy": float(job["gpu_energy"].mean() * scale),
        "total_cpu_mem_energy": float(job["cpu_mem_energy"].mean() * scale),
        "node_energy_max": float(job["node_energy"].max()),
        "node_energy_mean": float(job["node_energy"].mean()),
        "gpu_energy_max": float(job["gpu_energy"].max()),
        "gpu_energy_mean": float(job["gpu_energy"].mean()),
    }


def catalog_manifest() -> dict:
    """Schema manifest for the generated store, consumable by the analytics
    catalog loader."""
    return {
        "format_version": SCHEMA_VERSION,
        "tables": [
            {
                "name": "jobs",
                "description": "Scheduler log of completed jobs",
                "file": "jobs.csv",
                "columns": [
                    {"name": "job_id", "type": "integer", "description": "Unique job identifier"},
                    {"name": "domain", "type": "text", "description": "Science domain of the project"},
                    {"name": "node_count", "type": "integer", "description": "Number of compute nodes allocated"},
                    {"name": "walltime_seconds", "type": "real", "description": "Job duration in seconds"},
                    {"name": "utilization", "type": "text", "description": "CPU or GPU job"},
                    {"name": "submit_time", "type": "timestamp", "description": "Submission time"},
                    {"name": "start_time", "type": "timestamp", "description": "Start time"},
                    {"name": "end_time", "type": "timestamp", "description": "End time"},
                ],
            },
            {
                "name": "node_telemetry",
                "description": "Per-node power and temperature measurements per job",
                "file": "node_telemetry.csv",
                "columns": [
                    {"name": "job_id", "type": "integer", "description": "Job the node worked on"},
                    {"name": "node_id", "type": "integer", "description": "Node index within the job"},
                    {"name": "avg_node_power_w", "type": "real", "description": "Average node power draw (W)"},
                    {"name": "max_node_power_w", "type": "real", "description": "Peak node power draw (W)"},
                    {"name": "avg_gpu_power_w", "type": "real", "description": "Average GPU power draw (W)"},
                    {"name": "max_gpu_power_w", "type": "real", "description": "Peak GPU power draw (W)"},
                    {"name": "max_cpu_mem_power_w", "type": "real", "description": "Peak CPU memory power draw (W)"},
                    {"name": "avg_node_temp_c", "type": "real", "description": "Average node temperature (C)"},
                    {"name": "max_node_temp_c", "type": "real", "description": "Peak node temperature (C)"},
                ],
            },
            {
                "name": "job_energy",
                "description": "Per-node energy totals per job",
                "file": "job_energy.csv",
                "columns": [
                    {"name": "job_id", "type": "integer", "description": "Job the node worked on"},
                    {"name": "node_id", "type": "integer", "description": "Node index within the job"},
                    {"name": "node_energy_j", "type": "real", "description": "Node energy consumed (J)"},
                    {"name": "gpu_energy_j", "type": "real", "description": "GPU energy consumed (J)"},
                    {"name": "cpu_mem_energy_j", "type": "real", "description": "CPU memory energy consumed (J)"},
                ],
            },
        ],
        "relationships": [
            {"from_table": "node_telemetry", "from_column": "job_id", "to_table": "jobs", "to_column": "job_id"},
            {"from_table": "job_energy", "from_column": "job_id", "to_table": "jobs", "to_column": "job_id"},
        ],
    }


def synth_telemetry(seed: int, n_jobs: int, out_dir: str | Path) -> dict[str, str]:
    """Write the full synthetic dataset; identical seeds yield byte-identical
    files. Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = generate_jobs(seed, n_jobs)

    jobs_path = out / "jobs.csv"
    with jobs_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("job_id,domain,node_count,walltime_seconds,utilization,submit_time,start_time,end_time\n")
        for j in jobs:
            fh.write(
                f"{j['job_id']},{j['domain']},{j['node_count']},{_fmt(j['walltime_seconds'])},"
                f"{j['utilization']},{j['submit_time']},{j['start_time']},{j['end_time']}\n"
            )

    telemetry_path = out / "node_telemetry.csv"
    with telemetry_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "job_id,node_id,avg_node_power_w,max_node_power_w,avg_gpu_power_w,"
            "max_gpu_power_w,max_cpu_mem_power_w,avg_node_temp_c,max_node_temp_c\n"
        )
        for j in jobs:
            for node_id in range(len(j["node_power"])):
                fh.write(
                    f"{j['job_id']},{node_id},{_fmt(j['node_power'][node_id])},"
                    f"{_fmt(j['node_power_max_arr'][node_id])},{_fmt(j['gpu_power'][node_id])},"
                    f"{_fmt(j['gpu_power_max_arr'][node_id])},{_fmt(j['cpu_mem_power'][node_id])},"
                    f"{_fmt(j['temp'][node_id])},{_fmt(j['temp_max'][node_id])}\n"
                )

    energy_path = out / "job_energy.csv"
    with energy_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("job_id,node_id,node_energy_j,gpu_energy_j,cpu_mem_energy_j\n")
        for j in jobs:
            for node_id in range(len(j["node_energy"])):
                fh.write(
                    f"{j['job_id']},{node_id},{_fmt(j['node_energy'][node_id])},"
                    f"{_fmt(j['gpu_energy'][node_id])},{_fmt(j['cpu_mem_energy'][node_id])}\n"
                )

    manifest_path = out / "catalog.json"
    manifest_path.write_text(json.dumps(catalog_manifest(), indent=1, sort_keys=True), encoding="utf-8")

    training_path = out / "pa_training.csv"
    feature_keys = list(FEATURE_REGISTRY)
    with training_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("domain,node_count,walltime_seconds,utilization," + ",".join(feature_keys) + "\n")
        for j in jobs:
            feats = job_features(j)
            fh.write(
                f"{j['domain']},{j['node_count']},{_fmt(j['walltime_seconds'])},{j['utilization']},"
                + ",".join(_fmt(feats[k]) for k in feature_keys)
                + "\n"
            )

    return {
        "jobs": str(jobs_path),
        "node_telemetry": str(telemetry_path),
        "job_energy": str(energy_path),
        "catalog": str(manifest_path),
        "pa_training": str(training_path),
    }


def domain_descriptions() -> dict[str, str]:
    return {d.name: d.description for d in DOMAIN_PROFILES}
