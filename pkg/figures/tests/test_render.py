from __future__ import annotations

import shutil

import numpy as np
import pytest

from mfscl_figures.bundle import FigureBundle, RoleMissingError, read_columns
from mfscl_figures.cli import main
from mfscl_figures.render import build_figure, render


@pytest.mark.parametrize("figure_id", [1, 2, 3, 4, 5])
def test_render_produces_nonempty_image(bundles, tmp_path, figure_id):
    bundle = FigureBundle.load(bundles[figure_id])
    out = render(bundle, figure_id, tmp_path / f"figure{figure_id}.png")
    assert out.exists() and out.stat().st_size > 1000
    assert out.read_bytes()[:4] == b"\x89PNG"


def test_incomplete_bundle_names_missing_role(bundles, tmp_path):
    src = bundles[1].parent
    broken = tmp_path / "broken"
    shutil.copytree(src, broken)
    (broken / FigureBundle.load(bundles[1]).roles["flow_left"].name).unlink()
    bundle = FigureBundle.load(broken / bundles[1].name)
    with pytest.raises(RoleMissingError, match="flow_left"):
        build_figure(bundle, 1)


def test_manifest_without_role_entry(bundles, tmp_path):
    text = bundles[4].read_text(encoding="utf-8")
    pruned = "\n".join(line for line in text.splitlines()
                       if not line.startswith("output.solution_right"))
    broken = tmp_path / "pruned"
    shutil.copytree(bundles[4].parent, broken)
    (broken / bundles[4].name).write_text(pruned, encoding="utf-8")
    bundle = FigureBundle.load(broken / bundles[4].name)
    with pytest.raises(RoleMissingError, match="solution_right"):
        build_figure(bundle, 4)


def test_band_polygon_matches_csv_columns(bundles):
    # the drawn one-standard-deviation band must contain exactly the
    # mean +- std rows of the stats CSV, row for row
    bundle = FigureBundle.load(bundles[3])
    fig, artists = build_figure(bundle, 3)
    try:
        for case in ("compressive", "expansive"):
            stats = read_columns(bundle.path(f"stats_{case}"))
            lo = stats["mc_mean"] - stats["mc_std"]
            hi = stats["mc_mean"] + stats["mc_std"]
            verts = artists[f"band_{case}"].get_paths()[0].vertices
            vert_set = {(round(a, 12), round(b, 12)) for a, b in verts}
            for x, y_lo, y_hi in zip(stats["x"], lo, hi):
                assert (round(x, 12), round(y_lo, 12)) in vert_set
                assert (round(x, 12), round(y_hi, 12)) in vert_set
    finally:
        import matplotlib.pyplot as plt

        plt.close(fig)


def test_rendering_is_deterministic(bundles, tmp_path):
    bundle = FigureBundle.load(bundles[5])
    a = render(bundle, 5, tmp_path / "a.png")
    b = render(bundle, 5, tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()


def test_cli_roundtrip(bundles, tmp_path):
    out = tmp_path / "cli_fig3.png"
    code = main(["--manifest", str(bundles[3]), "--figure", "3", "--out", str(out)])
    assert code == 0
    assert out.stat().st_size > 1000


def test_cli_reports_missing_role(bundles, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(bundles[2].parent, broken)
    bundle = FigureBundle.load(broken / bundles[2].name)
    (broken / bundle.roles["drift_right"].name).unlink()
    code = main(["--manifest", str(broken / bundles[2].name),
                 "--figure", "2", "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "drift_right" in capsys.readouterr().err


def test_wrong_figure_for_bundle_rejected(bundles, tmp_path):
    bundle = FigureBundle.load(bundles[4])  # has no flow roles
    with pytest.raises(RoleMissingError):
        build_figure(bundle, 1)
