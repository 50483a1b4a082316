from __future__ import annotations

import json

import pytest

from gazestats.dataio import write_dataset
from gazestats.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def small_config() -> SynthConfig:
    return SynthConfig(seed=3, n_subjects=8, samples_per_subject=1000)


@pytest.fixture(scope="session")
def small_dataset(small_config):
    return generate(small_config)


@pytest.fixture()
def dataset_files(tmp_path, small_dataset):
    samples, meta = tmp_path / "d.jsonl", tmp_path / "m.jsonl"
    write_dataset(small_dataset, samples, meta)
    return samples, meta


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path
