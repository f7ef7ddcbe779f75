"""Command line entry point."""

from __future__ import annotations

import io
import json
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import pytest
from scipy.special import i0

from homodrift.estimate import ou_closed_form_tilde
from homodrift.exceptions import EstimatorUndefinedError
from homodrift.harness.output import read_observations
from homodrift.main import EXIT_ERROR, EXIT_FLAGGED, main

if TYPE_CHECKING:
    from pathlib import Path


def test_homogenize_prints_the_coefficients(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(['homogenize', '--alpha', '2', '--sigma', '1']) == 0

    payload = json.loads(capsys.readouterr().out)
    assert payload['K'] == pytest.approx(1 / i0(1.0) ** 2, abs=1e-8)
    assert payload['A'] == pytest.approx([2 * payload['K']])


def _csv(text: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(text))


def test_spectrum_prints_eigenvalues_and_nodal_values(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
) -> None:
    args = ['spectrum', '--analytic', '--a', '2', '--Sigma', '0.5', '--J', '3']
    assert main(args) == 0
    frame = _csv(capsys.readouterr().out)
    assert list(frame.columns) == ['j', 'lambda', 'x', 'phi']
    assert list(frame.groupby('j')['lambda'].first()) == [2.0, 4.0, 6.0]
    # default mesh: R = 1.7, h = 0.05
    assert (frame['j'] == 1).sum() == 69
    first = frame[frame['j'] == 1]
    np.testing.assert_allclose(first['phi'], 2 * first['x'], rtol=1e-12)

    out = tmp_path / 'spectrum.csv'
    args = ['spectrum', '--J', '2', '--R-floor', '6', '--h', '0.05', '--out', str(out)]
    assert main(args) == 0
    frame = pd.read_csv(out)
    lambdas = frame.groupby('j')['lambda'].first()
    assert list(lambdas) == pytest.approx([1.0, 2.0], rel=0.03)
    assert (frame['j'] == 2).sum() == 241
    assert frame['x'].min() == pytest.approx(-6.0)


def test_spectrum_reads_the_homogenized_model_from_a_config(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
) -> None:
    config = tmp_path / 'ou.cfg'
    config.write_text(
        'model.kind = homogenized\nmodel.alpha = 2\nmodel.sigma = 0.5\n'
        'mesh.R_floor = 4\n',
        encoding='utf-8',
    )

    assert main(['spectrum', '--config', str(config), '--J', '2']) == 0

    frame = _csv(capsys.readouterr().out)
    lambdas = frame.groupby('j')['lambda'].first()
    assert list(lambdas) == pytest.approx([2.0, 4.0], rel=0.03)
    assert frame['x'].max() == pytest.approx(4.0)


def test_simulate_filter_and_estimate(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
) -> None:
    raw, filtered = tmp_path / 'obs.csv', tmp_path / 'filtered.csv'

    assert (
        main(
            [
                '--seed',
                '3',
                'simulate',
                '--model',
                'homogenized',
                '--T',
                '200',
                '--delta',
                '0.5',
                '--h',
                '0.01',
                '--out',
                str(raw),
            ],
        )
        == 0
    )
    args = ['filter', '--in', str(raw), '--delta', '0.5', '--out', str(filtered)]
    assert main(args) == 0
    assert read_observations(raw).n == 400
    assert read_observations(filtered).seed == 3
    mismatched = ['filter', '--in', str(raw), '--delta', '0.3', '--out', str(filtered)]
    assert main(mismatched) == EXIT_ERROR

    code = main(
        [
            'estimate',
            '--obs',
            str(filtered),
            '--filtered',
            '--sigma-known',
            '1',
            '--basis',
            'analytic',
        ],
    )

    payload = json.loads(capsys.readouterr().out)
    assert code == 0
    assert payload['converged']
    assert payload['n_observations'] == 400
    assert payload['seeds'] == {'observations': 3}
    assert payload['a_hat'][0] == pytest.approx(
        ou_closed_form_tilde(read_observations(filtered)),
        rel=1e-8,
    )


def test_simulate_from_a_config_with_a_spacing_exponent(tmp_path: Path) -> None:
    config = tmp_path / 'sim.cfg'
    config.write_text(
        'model.kind = homogenized\nmodel.epsilon = 0.25\n'
        'simulate.T = 50\nsimulate.h = 0.01\n',
        encoding='utf-8',
    )
    first, second, other = (tmp_path / f'{name}.csv' for name in 'abc')

    for seed, out in (('5', first), ('5', second), ('6', other)):
        args = ['simulate', '--config', str(config), '--delta-exp', '1', '--seed']
        assert main([*args, seed, '--out', str(out)]) == 0

    obs = read_observations(first)
    assert obs.delta == pytest.approx(0.25)
    assert obs.n == 200
    assert obs.seed == 5
    lines = first.read_text(encoding='utf-8').splitlines()
    assert lines[:2] == ['# seed=5', 'n,t,x']
    assert first.read_text(encoding='utf-8') == second.read_text(encoding='utf-8')
    assert not np.array_equal(read_observations(other).x, obs.x)


def test_simulate_particles_writes_one_column_per_coordinate(tmp_path: Path) -> None:
    out = tmp_path / 'particles.csv'

    args = ['simulate', '--model', 'particles', '--d', '3', '--fast', 'zero']
    args += ['--T', '10', '--delta', '0.5', '--h', '0.01', '--out', str(out)]
    assert main(args) == 0

    assert out.read_text(encoding='utf-8').splitlines()[1] == 'n,t,x,x2,x3'
    assert read_observations(out).x.shape == (21, 3)


def test_simulate_needs_exactly_one_spacing(tmp_path: Path) -> None:
    args = ['simulate', '--T', '1', '--out', str(tmp_path / 'obs.csv')]

    with pytest.raises(SystemExit):
        main(args)
    with pytest.raises(SystemExit):
        main([*args, '--delta', '0.5', '--delta-exp', '1'])


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / 'quick.cfg'
    path.write_text(
        'experiment.name = cli\n'
        'experiment.n_rep = 2\n'
        'model.kind = homogenized\n'
        'simulate.T = 32\n'
        'simulate.h = 0.01\n'
        'delta.absolute = 0.5\n'
        'estimate.N = 64\n'
        'estimate.estimators = closed_form\n',
        encoding='utf-8',
    )
    return path


def test_experiment_writes_results(config_file: Path, tmp_path: Path) -> None:
    out_dir = tmp_path / 'results'

    code = main(
        [
            '--threads',
            '2',
            '--out-dir',
            str(out_dir),
            'experiment',
            '--config',
            str(config_file),
        ],
    )

    assert code == 0
    assert sorted(path.suffix for path in out_dir.iterdir()) == ['.csv', '.json']


def test_flagged_experiment_exit_code(
    config_file: Path,
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    def undefined(*_: object) -> None:
        msg = 'estimator undefined for this sample'
        raise EstimatorUndefinedError(msg)

    monkeypatch.setattr('homodrift.harness.runner.estimate_once', undefined)

    code = main(
        ['--out-dir', str(tmp_path), 'experiment', '--config', str(config_file)],
    )

    assert code == EXIT_FLAGGED


def test_domain_errors_exit_with_a_message(
    capsys: pytest.CaptureFixture[str],
    tmp_path: Path,
) -> None:
    code = main(['experiment', '--config', str(tmp_path / 'missing.cfg')])

    assert code == EXIT_ERROR
    assert 'does not exist' in capsys.readouterr().err
    assert main(['homogenize', '--sigma', '0']) == EXIT_ERROR
