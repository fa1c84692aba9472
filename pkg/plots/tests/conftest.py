import math

import pytest

DIAG_HEADER = "tau,mass,E_gpv,E_weighted,sigma,r_a,matched,n_vortices"
VORTEX_HEADER = "tau,i,x,y,d,confidence"
ODE_HEADER = "tau,i,x,y,rho_at_b"
TF_HEADER = "eps,l2_error"


def write_rows(path, schema, header, rows):
    lines = [f"# schema: {schema} v1", header]
    lines += [",".join(format(c, ".17g") if isinstance(c, float) else str(c)
                       for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def sample_run(tmp_path):
    """A small synthetic run: one vortex precessing on a circle, with a
    slightly offset predicted path, plausible diagnostics, and a
    two-point limit-profile error table."""
    taus = [0.05 * k for k in range(21)]
    vrows, orows = [], []
    for t in taus:
        ang = 2.5 * t
        vrows.append((t, 0, 0.5 * math.cos(ang), 0.5 * math.sin(ang),
                      1, 0.97))
        ang2 = 8.0 / 3.0 * t
        orows.append((t, 0, 0.5 * math.cos(ang2), 0.5 * math.sin(ang2),
                      0.38))
    drows = [(t, 2.0, 7.5 + 1e-6 * math.sin(40 * t), 0.55,
              0.31, 0.05 + 0.01 * math.expm1(t), 1, 1) for t in taus]
    tf = [(0.08, 0.053), (0.04, 0.028)]

    d = tmp_path / "run"
    d.mkdir()
    write_rows(d / "vortices.csv", "vortices", VORTEX_HEADER, vrows)
    write_rows(d / "ode.csv", "ode", ODE_HEADER, orows)
    write_rows(d / "diagnostics.csv", "diagnostics", DIAG_HEADER, drows)
    write_rows(d / "tf_convergence.csv", "tf_convergence", TF_HEADER, tf)
    return d


def spec_file(tmp_path, body, name="fig.ini"):
    p = tmp_path / name
    p.write_text(body)
    return p
