import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qabind.logo import (WeightLogo, average_weights, emit_weight_logo, read_logo_tsv, render_svg,
                         weights_to_matrix)

SVG = "{http://www.w3.org/2000/svg}"


def letters(svg_text):
    """Per position: list of (base, weight, bottom, height) in document order."""
    root = ET.fromstring(svg_text)
    out = {}
    for g in root.iter(SVG + "g"):
        if g.get("class") != "position":
            continue
        out[int(g.get("data-pos"))] = [
            (t.get("data-base"), float(t.get("data-weight")), float(t.get("data-bottom")),
             float(t.get("data-height"))) for t in g.iter(SVG + "text")]
    return out


def test_average_single_vector():
    w = np.arange(8, dtype=float)
    logo = average_weights([w], 2)
    assert logo.matrix.tolist() == [[0, 4], [1, 5], [2, 6], [3, 7]]
    assert logo.instance_count == 1


def test_average_symmetric_pair():
    w = np.random.default_rng(0).uniform(0, 2, 12)
    assert np.all(average_weights([w, 2 - w], 3).matrix == 1.0)


def test_average_matches_scripted_mean():
    rng = np.random.default_rng(1)
    ws = [rng.normal(size=40) for _ in range(50)]
    oracle = np.zeros((4, 10))
    for w in ws:
        for j in range(10):
            for b in range(4):
                oracle[b, j] += w[4 * j + b] / 50
    assert np.max(np.abs(average_weights(ws, 10).matrix - oracle)) < 1e-12


def test_average_errors():
    with pytest.raises(ValueError):
        average_weights([], 2)
    with pytest.raises(ValueError):
        average_weights([np.zeros(8), np.zeros(7)], 2)
    with pytest.raises(ValueError):
        weights_to_matrix(np.zeros(3), 1)
    with pytest.raises(ValueError):
        WeightLogo(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        WeightLogo(np.full((4, 1), np.inf))


def test_consensus():
    assert WeightLogo(weights_to_matrix([0, 1, 0, 0, 0, 0, 0, 2], 2)).consensus() == "CT"


def test_all_zero_logo_is_valid_and_empty(tmp_path):
    svg, tsv = emit_weight_logo(WeightLogo(np.zeros((4, 3))), tmp_path / "z.svg")
    stacks = letters(svg.read_text())
    assert sorted(stacks) == [1, 2, 3]
    assert all(items == [] for items in stacks.values())


def test_single_letter_full_height(tmp_path):
    logo = WeightLogo(np.array([[1.0], [0.0], [0.0], [0.0]]))
    stacks = letters(render_svg(logo))
    assert len(stacks[1]) == 1
    base, weight, bottom, height = stacks[1][0]
    assert (base, weight) == ("A", 1.0)
    # full column height is the distance from the baseline to the top margin
    root = ET.fromstring(render_svg(logo))
    baseline = float(root.find(SVG + "line").get("y1"))
    assert bottom == baseline
    assert height == pytest.approx(baseline - 20.0)


def test_negative_weights_below_baseline():
    logo = WeightLogo(np.array([[0.5], [-1.0], [-0.25], [2.0]]))
    items = letters(render_svg(logo))[1]
    root = ET.fromstring(render_svg(logo))
    baseline = float(root.find(SVG + "line").get("y1"))
    fills = {t.get("data-base"): t.get("fill") for t in root.iter(SVG + "text") if t.get("data-base")}
    for base, weight, bottom, height in items:
        top = bottom - height
        if weight < 0:
            assert top >= baseline - 1e-9
            assert fills[base] == "#9A9A9A"
        else:
            assert bottom <= baseline + 1e-9
            assert fills[base] != "#9A9A9A"
    assert fills["A"] != fills["T"]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10**6), st.booleans())
def test_vertical_order_matches_weights(length, seed, signed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(4, length)) if signed else rng.uniform(0, 1, (4, length))
    m[rng.random((4, length)) < 0.15] = 0.0
    logo = WeightLogo(m)
    stacks = letters(render_svg(logo))
    peak = max(max(m[m[:, j] > 0, j].sum(), -m[m[:, j] < 0, j].sum()) for j in range(length))
    for pos, items in stacks.items():
        col = m[:, pos - 1]
        # lowest letter on the page first (largest bottom coordinate)
        by_height = sorted(items, key=lambda it: -it[2])
        assert [it[1] for it in by_height] == sorted(it[1] for it in items)
        assert len(items) == np.count_nonzero(col)
        for base, weight, bottom, height in items:
            assert height == pytest.approx(abs(weight) * 120.0 / peak, abs=1e-3)
        # stacked letters do not overlap
        for lower, upper in zip(by_height, by_height[1:]):
            assert upper[2] <= lower[2] - lower[3] + 1e-3


def test_svg_deterministic_and_well_formed(tmp_path):
    m = np.random.default_rng(3).normal(size=(4, 6))
    a, _ = emit_weight_logo(WeightLogo(m, 50), tmp_path / "a.svg")
    b, _ = emit_weight_logo(WeightLogo(m, 50), tmp_path / "b")
    assert b.suffix == ".svg"
    assert a.read_bytes() == b.read_bytes()
    root = ET.fromstring(a.read_bytes())
    assert root.tag == SVG + "svg" and root.get("version") == "1.1"


def test_tsv_round_trip(tmp_path):
    m = np.round(np.random.default_rng(4).normal(size=(4, 5)), 6)
    _, tsv = emit_weight_logo(WeightLogo(m, 7), tmp_path / "logo.svg")
    lines = tsv.read_text().splitlines()
    assert lines[1] == "pos\tA\tC\tG\tT"
    assert len(lines[2].split("\t")[1].split(".")[1]) == 6
    back = read_logo_tsv(tsv)
    assert back.instance_count == 7
    assert np.array_equal(back.matrix, m)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_weight_logo(WeightLogo(np.ones((4, 1))), tmp_path / "missing" / "x.svg")
