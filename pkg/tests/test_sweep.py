import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracground.constants import Params, blowup_constants
from fracground.field import Field, Grid, Potential, read_field
from fracground.solver import InitSpec, SolverOptions
from fracground.sweep import (
    FitError, SweepConfig, SweepRecord, concentration_check, csv_header, fit_blowup_limit, fit_energy_slope,
    fit_sobolev_limit, observable, parse_records, predicted_energy_slope, run_sweep, uniqueness_test,
    warm_start, write_records,
)

P = Params(1, 0.25)
WELL = Potential.gaussian_well(2.0, 1.0, 1.0, (0.3137,))
GRID = Grid(1, 20.0, 8192)
SCHEDULE = (1.5, 1.4, 1.3, 1.2)


def _cfg(**kw) -> SweepConfig:
    base = dict(params=P, grid=GRID, potential=WELL, eps_schedule=SCHEDULE)
    base.update(kw)
    return SweepConfig(**base)


def _rec(eps, mu, obs=1.0, s_v=2.0, ok=True, x=(0.0,)) -> SweepRecord:
    return SweepRecord(eps=eps, s_v=s_v, u_max=1.0, mu=mu, mu_pow_eps=mu**eps, x_max=x, pohozaev_rel=1e-3,
                       tail_mass=0.0, comp_ratio=1.0, moser_ratio=1.0, blowup_observable=obs, iters=1,
                       converged=ok, resolved=ok)


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    return out, run_sweep(_cfg(out_dir=str(out)))


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(eps_schedule=(0.5,))
    with pytest.raises(ValueError):
        _cfg(eps_schedule=(1.0, 1.2, 0.8, 0.5))
    with pytest.raises(ValueError):
        _cfg(eps_schedule=(9.0, 1.2, 0.8, 0.5))
    with pytest.raises(ValueError):
        _cfg(grid=Grid(2, 1.0, 16))
    assert _cfg(eps_schedule=(0.5,), min_points=1).eps_schedule == (0.5,)


def test_digest_tracks_configuration():
    a, b = _cfg(), _cfg(seed=1)
    assert a.digest() == _cfg().digest() and a.digest() != b.digest()
    assert "potential.kind=gaussian_well" in a.canonical()


def test_sweep_records(sweep_dir):
    out, recs = sweep_dir
    assert [r.eps for r in recs] == list(SCHEDULE)
    for r in recs:
        assert r.accepted
        assert r.blowup_observable == observable(r.eps, r.u_max, P)
        assert r.mu_pow_eps == r.mu**r.eps
        assert r.x_max[0] == pytest.approx(0.3137, abs=2 * GRID.h)
        assert r.pohozaev_rel < 0.05 and r.tail_mass < 1e-3
    s_v = [r.s_v for r in recs]
    assert all(b < a for a, b in zip(s_v, s_v[1:]))


def test_sweep_persistence(sweep_dir):
    out, recs = sweep_dir
    assert parse_records((out / "sweep.csv").read_text()) == recs
    man = (out / "manifest.txt").read_text()
    assert f"config_hash={_cfg(out_dir=str(out)).digest()}" in man
    assert "numpy=" in man and "finished=" in man
    for i in range(len(recs)):
        f, s = read_field(out / f"w_{i:03d}.bin")
        assert s == P.s and f.grid == GRID


def test_resume_reproduces_remaining_rows(sweep_dir, tmp_path):
    out, full = sweep_dir
    part = tmp_path / "part"
    part.mkdir()
    lines = (out / "sweep.csv").read_text().splitlines(keepends=True)
    (part / "sweep.csv").write_text("".join(lines[:3]))
    (part / "manifest.txt").write_text((out / "manifest.txt").read_text())
    for i in range(2):
        (part / f"w_{i:03d}.bin").write_bytes((out / f"w_{i:03d}.bin").read_bytes())
        (part / f"w_{i:03d}.bin.meta").write_bytes((out / f"w_{i:03d}.bin.meta").read_bytes())
    resumed = run_sweep(_cfg(out_dir=str(part)))
    assert resumed == full
    assert (part / "sweep.csv").read_text() == (out / "sweep.csv").read_text()


def test_changed_config_starts_over(sweep_dir, tmp_path):
    out, _ = sweep_dir
    d = tmp_path / "other"
    d.mkdir()
    (d / "manifest.txt").write_text("config_hash=0000\n")
    (d / "sweep.csv").write_text("garbage\n")
    recs = run_sweep(_cfg(out_dir=str(d), eps_schedule=(1.5,), min_points=1))
    assert len(recs) == 1
    assert parse_records((d / "sweep.csv").read_text()) == recs


def test_stops_once_unresolved():
    recs = run_sweep(_cfg(grid=Grid(1, 20.0, 2048), eps_schedule=(1.5, 1.3, 1.1, 0.9, 0.7)))
    assert [r.resolved for r in recs] == [True, True, False]


def test_first_failure_gives_empty_result():
    bad = InitSpec.provided(Field.constant(Grid(1, 20.0, 64), 1.0))
    cfg = _cfg(solver=dataclasses.replace(_cfg().solver, init=bad))
    assert run_sweep(cfg) == []


def test_warm_start_zooms_about_peak():
    g = Grid(1, 10.0, 1024)
    w = Field(g, np.exp(-((g.axis - 1.0) ** 2)))
    init = warm_start(w, 0.4, (1.0,), 0.2, Params(1, 0.25))  # contraction by (0.4/0.2)^2 = 4
    y = 1.0 + 4 * (g.axis - 1.0)
    expected = np.where(np.abs(y) < 10.0, np.exp(-((y - 1.0) ** 2)), 0.0)
    assert np.abs(init.field.values - expected).max() < 1e-8
    assert init.field.values[0] == 0.0  # maps outside the box, not wrapped


@given(st.lists(st.tuples(st.floats(1e-3, 1.0), st.floats(1e-6, 10.0), st.floats(-5, 5), st.booleans()),
                min_size=0, max_size=6))
@settings(max_examples=30)
def test_csv_round_trip(rows):
    recs = [_rec(e, m, obs=m * 3.1, s_v=1 + m, ok=ok, x=(x,)) for e, m, x, ok in rows]
    assert parse_records(write_records(recs, 1)) == recs


def test_csv_header_shape():
    assert csv_header(3)[5:8] == ["x_max_1", "x_max_2", "x_max_3"]
    with pytest.raises(ValueError):
        parse_records("eps,nonsense\n1,2\n")
    assert parse_records("") == []


def test_blowup_fit_recovers_linear_model():
    mus = [0.5, 0.4, 0.3, 0.2, 0.1]
    recs = [_rec(0.1, m, obs=7.0 + 2.5 * m**0.4) for m in mus]
    fit = fit_blowup_limit(recs, 0.2)
    assert fit.limit == pytest.approx(7.0, rel=1e-10)
    assert fit.slope == pytest.approx(2.5, rel=1e-10)
    assert fit.ci < 1e-8 and fit.n == 5
    sfit = fit_sobolev_limit([_rec(0.1, m, s_v=0.9 + m**0.4) for m in mus], 0.2)
    assert sfit.limit == pytest.approx(0.9, rel=1e-10)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_blowup_limit([_rec(0.1, 0.2), _rec(0.1, 0.1)], 0.2)
    with pytest.raises(FitError):
        fit_blowup_limit([_rec(0.1, 0.2)] * 4, 0.2)
    with pytest.raises(FitError):
        fit_blowup_limit([_rec(0.1, m, ok=False) for m in (0.1, 0.2, 0.3)], 0.2)


def test_energy_slope_fit():
    p = Params(1, 0.15)
    consts = blowup_constants(p)
    S = consts.sobolev_S
    recs = [_rec(0.1, m, s_v=S) for m in (0.1, 0.2, 0.3)]
    slope, pred = fit_energy_slope(recs, consts, 1.0)
    assert slope == 0.0
    assert pred == predicted_energy_slope(consts, 1.0)
    recs = [_rec(0.1, m, s_v=S + 0.7 * m**0.3) for m in (0.1, 0.2, 0.3)]
    assert fit_energy_slope(recs, consts, 1.0)[0] == pytest.approx(0.7)
    with pytest.raises(ValueError):
        fit_energy_slope(recs, blowup_constants(Params(1, 0.2)), 1.0)


def test_concentration_check():
    g = Grid(1, 10.0, 64)
    assert not concentration_check([_rec(0.1, 0.1)], Potential.uniform(1.0), g).applicable
    assert concentration_check([], Potential.uniform(1.0), g).ok
    V = Potential.gaussian_well(2.0, 1.0, 1.0, (3.0,))
    rep = concentration_check([_rec(0.2, 0.2, x=(3.5,)), _rec(0.1, 0.1, x=(3.1,))], V, g)
    assert rep.distances == pytest.approx([0.5, 0.1])
    assert rep.final_distance < 2 * g.h and rep.ok
    assert rep.v_gaps[0] > rep.v_gaps[1] > 0
    assert not concentration_check([_rec(0.1, 0.1, x=(4.0,))], V, g).ok
    assert math.isnan(concentration_check([], V, g).final_distance)


def test_uniqueness_identical_starts_give_zero_distance():
    rep = uniqueness_test(_cfg(), 2, eps=1.3, starts=[InitSpec.bubble((0.3137,))] * 2)
    assert rep.n_converged == 2 and rep.max_distance == 0.0 and not rep.failures


def test_uniqueness_over_distinct_starts():
    rep = uniqueness_test(_cfg(potential=Potential.uniform(1.0)), 5, eps=1.3)
    assert rep.n_converged == 5 and not rep.failures
    assert rep.max_distance < 1e-6
    assert rep.asymmetry < 1e-4
    assert max(rep.s_values) - min(rep.s_values) < 1e-12


def test_uniqueness_reports_stuck_starts():
    # a bump parked on the flat shoulder of a narrow well drifts too slowly to converge
    cfg = _cfg(solver=dataclasses.replace(_cfg().solver, max_iters=300))
    rep = uniqueness_test(cfg, 2, eps=1.3, starts=[InitSpec.bubble((0.3137,)), InitSpec.bubble((-2.6,))])
    assert rep.n_converged == 1 and len(rep.failures) == 1
    assert math.isnan(rep.max_distance)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="fitted slope 2.3 vs predicted 1.2: the eps log(mu) term is not separated from mu^(2s)")
def test_energy_slope_matches_expansion_at_s015():
    p = Params(1, 0.15)
    consts = blowup_constants(p)
    cfg = SweepConfig(p, Grid(1, 160.0, 2**18), Potential.uniform(1.0), (0.6, 0.5, 0.45, 0.4),
                      SolverOptions(step=3.0, init=InitSpec.bubble((), 0.1)), min_points=1)
    slope, pred = fit_energy_slope(run_sweep(cfg), consts, 1.0)
    assert slope == pytest.approx(pred, rel=0.25)
