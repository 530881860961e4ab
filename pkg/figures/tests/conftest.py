from __future__ import annotations

import pytest

# the renderer consumes CSV bundles; tests produce them with the simulation
# package at a tiny scale (a dev-only dependency, not a runtime one)
mfscl_core = pytest.importorskip("mfscl.core")
mfscl_experiments = pytest.importorskip("mfscl.experiments")


@pytest.fixture(scope="session")
def tiny_config():
    return mfscl_core.ExperimentConfig.desk_scale(
        n_points=151, n_paths=151, n_time_steps=120, n_mc=6, n_stored_times=7)


@pytest.fixture(scope="session")
def bundles(tiny_config, tmp_path_factory):
    root = tmp_path_factory.mktemp("bundles")
    cache = mfscl_experiments.FieldCache()
    out = {}
    for figure_id in (1, 2, 3, 4, 5):
        directory = root / f"fig{figure_id}"
        mfscl_experiments.run_figure(figure_id, tiny_config, directory, cache=cache)
        out[figure_id] = directory / f"figure{figure_id}_manifest.txt"
    return out
