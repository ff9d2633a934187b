"""Run the three analysis regimes (and the networked variant) from a config."""
from __future__ import annotations

import json
import logging
import os
import secrets
import subprocess
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np

from ..collaboration import AnchorSet, generate_anchor
from ..errors import ConfigError, DataCollabError, LoadError, PhaseError, ProtocolError
from ..learner import LabelMatrix, accuracy
from ..pipeline import PartyDataset, run_centralized, run_collaboration, run_individual
from ..protocol.session import CoordinatorConfig
from .config import ExperimentConfig
from .data import load_dataset, split_dataset, synth_imbalanced
from .report import ModeResult, RunReport

log = logging.getLogger(__name__)

_SRC_ROOT = Path(__file__).resolve().parents[2]


def load_parties(cfg: ExperimentConfig) -> list[PartyDataset]:
    data = cfg.data
    if data["source"] == "synth":
        s = data["synth"]
        parties = synth_imbalanced(
            m=int(s["m"]),
            classes=int(s["classes"]),
            parties=int(s["parties"]),
            per_party=int(s["per_party"]),
            skew=float(s.get("skew", 0.0)),
            seed=int(s["seed"]),
            test_per_party=None if s.get("test_per_party") is None else int(s["test_per_party"]),
            separation=float(s.get("separation", 2.0)),
            latent_dim=None if s.get("latent_dim") is None else int(s["latent_dim"]),
            noise=float(s.get("noise", 0.2)),
        )
    else:
        label = data.get("label", "label")
        parties = []
        for i, entry in enumerate(data["parties"]):
            name = entry.get("name", f"party{i}")
            if "train" in entry:
                xtr, ytr = load_dataset(entry["train"], label)
                xte, yte = load_dataset(entry["test"], label)
                parties.append(PartyDataset(xtr, ytr, xte, yte, name))
            else:
                x, y = load_dataset(entry["path"], label)
                parties.append(split_dataset(x, y, float(entry["test_fraction"]), int(entry["split_seed"]), name))
    ms = {p.m for p in parties}
    if len(ms) != 1:
        raise ConfigError(f"parties disagree on the feature count: {sorted(ms)}")
    return parties


def build_anchor(cfg: ExperimentConfig, m: int) -> AnchorSet:
    a = cfg.anchor
    if a.generation == "user-supplied":
        try:
            data = np.load(a.path)
        except (OSError, ValueError) as exc:
            raise LoadError(f"cannot read anchor file {a.path}: {exc}") from exc
        return generate_anchor(m, data.shape[1], a.seed, "user-supplied", data=data)
    return generate_anchor(m, a.r, a.seed, a.generation, low=a.low, high=a.high)


def coordinator_config(cfg: ExperimentConfig, m: int, session: Optional[int] = None) -> CoordinatorConfig:
    if session is None:
        session = secrets.randbits(64)
    return CoordinatorConfig(
        parties=cfg.parties, anchor=build_anchor(cfg, m), session=session, ell=cfg.ell, learner=cfg.learner,
    )


def _pooled_accuracy(preds, parties) -> float:
    names = [n for p in preds for n in p.names]
    truth = [n for p in parties for n in p.y_test.names]
    return accuracy(names, truth)


def _result(mode, preds, parties, t0, macro=False, collab=None) -> ModeResult:
    per_party = [accuracy(p, d.y_test) for p, d in zip(preds, parties)]
    acc = float(np.mean(per_party)) if macro else _pooled_accuracy(preds, parties)
    res = ModeResult(
        mode=mode,
        accuracy=acc,
        per_party_accuracy=per_party,
        n_train=[int(d.x_train.shape[1]) for d in parties],
        n_test=[int(d.x_test.shape[1]) for d in parties],
        timing_s=time.perf_counter() - t0,
    )
    if collab is not None:
        res.alignment_residual = float(collab.alignment_residual)
        res.singular_values = [float(s) for s in collab.sigma]
    return res


def _check_dims(cfg: ExperimentConfig, m: int) -> None:
    for i, s in enumerate(cfg.mappers):
        if s.out_dim > m:
            raise ConfigError(f"party {i}: dim={s.out_dim} exceeds the feature count m={m}")


def run_experiment(cfg: ExperimentConfig, workdir=None) -> RunReport:
    """Run every configured mode and collect a :class:`RunReport`."""
    parties = load_parties(cfg)
    m = parties[0].m
    _check_dims(cfg, m)
    report = RunReport(config=cfg.echo())
    anchor = None
    for mode in cfg.modes:
        t0 = time.perf_counter()
        log.info("running %s", mode)
        if mode == "centralized":
            r = run_centralized(parties, cfg.ell, cfg.learner)
            report.modes.append(_result(mode, r.predictions, parties, t0))
        elif mode == "individual":
            r = run_individual(parties, cfg.mappers, cfg.learner)
            report.modes.append(_result(mode, r.predictions, parties, t0, macro=True))
        elif mode == "collaboration":
            if anchor is None:
                try:
                    anchor = build_anchor(cfg, m)
                except DataCollabError as exc:
                    raise PhaseError("0 (preparation)", exc) from exc
            r = run_collaboration(parties, cfg.mappers, anchor, cfg.ell, cfg.learner)
            report.modes.append(_result(mode, r.predictions, parties, t0, collab=r.collaboration.transform))
        elif mode == "collaboration-networked":
            preds, summary, _ = run_networked(cfg, m, workdir=workdir)
            res = _result(mode, preds, parties, t0)
            res.alignment_residual = summary["alignment_residual"]
            res.singular_values = summary["singular_values"]
            report.modes.append(res)
    return report


def _child_env() -> dict:
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [str(_SRC_ROOT), env.get("PYTHONPATH")]))
    return env


def run_networked(cfg: ExperimentConfig, m: int, workdir=None):
    """Spawn one coordinator and one process per party over loopback TCP.

    Returns ``(predictions per party, coordinator summary, x_hat)``.
    """
    timeout = float(cfg.network.get("timeout", 60.0))
    host = cfg.network.get("host", "127.0.0.1")
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        cfg_path = tmp / "config.json"
        cfg_path.write_text(json.dumps(cfg.tree), encoding="utf-8")
        port_file, summary = tmp / "port", tmp / "summary.json"
        env = _child_env()
        base = [sys.executable, "-m", "datacollab"]
        coord = subprocess.Popen(
            base + ["coordinator", "--config", str(cfg_path), "--m", str(m), "--host", host, "--port", "0",
                    "--port-file", str(port_file), "--summary", str(summary)],
            env=env, stderr=subprocess.PIPE, text=True,
        )
        children = []
        try:
            deadline = time.monotonic() + timeout
            while not port_file.exists() or not port_file.read_text().strip():
                if coord.poll() is not None:
                    raise ProtocolError(f"coordinator exited early: {coord.stderr.read()}")
                if time.monotonic() > deadline:
                    raise ProtocolError("coordinator did not publish its port")
                time.sleep(0.02)
            port = port_file.read_text().strip()
            for i in range(cfg.parties):
                out = tmp / f"party{i}.json"
                p = subprocess.Popen(
                    base + ["party", "--config", str(cfg_path), "--index", str(i), "--host", host,
                            "--port", port, "--output", str(out)],
                    env=env, stderr=subprocess.PIPE, text=True,
                )
                children.append((p, out))
            failures = []
            for i, (p, _) in enumerate(children):
                _, err = p.communicate(timeout=timeout)
                if p.returncode != 0:
                    failures.append(f"party {i} exited with {p.returncode}: {err.strip()}")
            _, err = coord.communicate(timeout=timeout)
            if coord.returncode != 0:
                failures.append(f"coordinator exited with {coord.returncode}: {err.strip()}")
            if failures:
                raise ProtocolError("; ".join(failures))
            preds = []
            for _, out in children:
                rec = json.loads(out.read_text(encoding="utf-8"))
                preds.append(LabelMatrix(tuple(rec["classes"]), np.array(rec["indices"], dtype=np.int64)))
            info = json.loads(summary.read_text(encoding="utf-8"))
            x_hat = np.load(tmp / info["x_hat"])
        finally:
            for p in [coord] + [c for c, _ in children]:
                if p.poll() is None:
                    p.kill()
                    p.wait()
    return preds, info, x_hat
