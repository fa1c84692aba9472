import pytest

from plots.figspec import SpecError, load_figure_spec

from conftest import spec_file


def test_full_spec_parses(tmp_path, sample_run):
    p = spec_file(tmp_path, f"""
[figure]
kind = trajectory-overlay
out = {tmp_path}/figs/orbit.png

[inputs]
vortices = {sample_run}/vortices.csv
ode = {sample_run}/ode.csv

[density]
kind = harmonic
lambda0 = 1.0
radius = 0.6366

[style]
dpi = 100
title = orbit
""")
    spec = load_figure_spec(p)
    assert spec.kind == "trajectory-overlay"
    assert spec.out.name == "orbit.png"
    assert spec.inputs["vortices"].is_file()
    assert spec.density["power"] == 2
    assert spec.density["extent"] == pytest.approx(1.5 * 0.6366)
    assert spec.style["dpi"] == "100"


def test_unknown_kind(tmp_path):
    p = spec_file(tmp_path, "[figure]\nkind = pie-chart\nout = x.png\n")
    with pytest.raises(SpecError, match="unknown figure kind"):
        load_figure_spec(p)


def test_missing_required_input(tmp_path, sample_run):
    p = spec_file(tmp_path, f"""
[figure]
kind = trajectory-overlay
out = x.png

[inputs]
vortices = {sample_run}/vortices.csv
""")
    with pytest.raises(SpecError, match="needs \\[inputs\\] ode"):
        load_figure_spec(p)


def test_nonexistent_input_file(tmp_path):
    p = spec_file(tmp_path, f"""
[figure]
kind = envelope
out = x.png

[inputs]
diagnostics = {tmp_path}/ghost.csv
""")
    with pytest.raises(SpecError, match="does not exist"):
        load_figure_spec(p)


def test_missing_spec_file(tmp_path):
    with pytest.raises(SpecError, match="cannot read"):
        load_figure_spec(tmp_path / "ghost.ini")


def test_density_requires_radius(tmp_path, sample_run):
    p = spec_file(tmp_path, f"""
[figure]
kind = trajectory-overlay
out = x.png

[inputs]
vortices = {sample_run}/vortices.csv
ode = {sample_run}/ode.csv

[density]
kind = harmonic
""")
    with pytest.raises(SpecError, match="radius"):
        load_figure_spec(p)


def test_quartic_density_power(tmp_path, sample_run):
    p = spec_file(tmp_path, f"""
[figure]
kind = trajectory-overlay
out = x.png

[inputs]
vortices = {sample_run}/vortices.csv
ode = {sample_run}/ode.csv

[density]
kind = quartic
radius = 0.8
extent = 1.0
""")
    spec = load_figure_spec(p)
    assert spec.density["power"] == 4
    assert spec.density["extent"] == 1.0
