import hashlib
import json
from datetime import datetime

import numpy as np
import pytest
from rich.console import Console

from fluxlab.ComparisonManager import ComparisonManager
from fluxlab.Errors import InputError
from fluxlab.FokkerPlanckSolver import FluxEstimate
from fluxlab.OutputManager import MANIFEST_NAME, OutputManager, load_manifest


@pytest.fixture
def output(tmp_path, logger):
    return OutputManager(str(tmp_path / 'out'), logger)


def test_csv_cells_and_inferred_header(output):
    rows = [{'c': 0.1, 'eps': np.float64(0.3), 'flag': None},
            {'c': 0.2, 'eps': 0.25, 'count': np.int64(4), 'winding': [1, -1]}]
    path = output.write_csv('rows.csv', rows)
    with open(path, newline='') as f:
        text = f.read()
    lines = text.split('\r\n')
    assert lines[0] == 'c,eps,flag,count,winding'
    assert lines[1] == '0.1,0.3,,,'
    assert lines[2] == '0.2,0.25,,4,1 -1'
    assert text.endswith('\r\n')


def test_csv_respects_given_columns(output):
    path = output.write_csv('narrow.csv', [{'a': 1, 'b': 2, 'extra': 3}], ['b', 'a'])
    assert path.read_text().splitlines() == ['b,a', '2,1']


def test_json_converts_numpy_and_non_finite_values(output):
    path = output.write_json('report.json', {'value': np.float32(0.5), 'rows': np.arange(3),
                                             'death': float('inf'), 1: 'key'})
    payload = json.loads(path.read_text())
    assert payload == {'value': 0.5, 'rows': [0, 1, 2], 'death': 'inf', '1': 'key'}


def test_manifest_lists_files_with_checksums(output):
    written = output.write_csv('a.csv', [{'x': 1}])
    extra = output.path('blob.bin')
    extra.write_bytes(b'\x00\x01\x02')
    output.register(extra, output.path('never_written.bin'))
    started = datetime(2024, 6, 1, 12, 0, 0)
    path = output.write_manifest({'subcommand': 'hstar', 'c': np.float64(0.0)}, started, {'seed': 7})
    assert path.name == MANIFEST_NAME

    manifest = load_manifest(str(path))
    assert manifest['format_version'] == 1
    assert manifest['inputs'] == {'subcommand': 'hstar', 'c': 0.0}
    assert manifest['seeds'] == {'seed': 7}
    assert manifest['started'] == '2024-06-01T12:00:00'
    assert manifest['wall_time_seconds'] > 0
    assert set(manifest['versions']) == {'python', 'numpy', 'scipy', 'networkx', 'rich'}
    files = {f['name']: f['sha256'] for f in manifest['files']}
    assert set(files) == {'a.csv', 'blob.bin'}
    assert files['a.csv'] == hashlib.sha256(written.read_bytes()).hexdigest()
    assert files['blob.bin'] == hashlib.sha256(b'\x00\x01\x02').hexdigest()


def test_unreadable_manifests(tmp_path):
    with pytest.raises(InputError):
        load_manifest(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{')
    with pytest.raises(InputError):
        load_manifest(str(broken))
    bare = tmp_path / 'bare.json'
    bare.write_text('{"files": []}')
    with pytest.raises(InputError):
        load_manifest(str(bare))


def test_flux_comparison_z_score(logger):
    comparator = ComparisonManager(logger, Console(record=True))
    grid = FluxEstimate(value=0.100, eps=0.5, method='fokker-planck', uncertainty=0.0003)
    paths = FluxEstimate(value=0.102, eps=0.5, method='sde', uncertainty=0.0004)
    report = comparator.compare_flux_estimates(grid, paths)
    assert report['uncertainty'] == pytest.approx(0.0005)
    assert report['z_score'] == pytest.approx(4.0)
    assert not report['passed']
    assert comparator.compare_flux_estimates(grid, paths, sigmas=5.0)['passed']


def test_flux_comparison_without_uncertainty(logger):
    comparator = ComparisonManager(logger)
    exact = FluxEstimate(value=0.2, eps=0.5, method='closed-form')
    assert comparator.compare_flux_estimates(exact, exact)['z_score'] == 0.0
    other = FluxEstimate(value=0.3, eps=0.5, method='closed-form')
    report = comparator.compare_flux_estimates(exact, other)
    assert report['z_score'] == float('inf')
    assert not report['passed']


def test_hstar_and_graph_comparisons(logger):
    comparator = ComparisonManager(logger)
    assert comparator.compare_hstar(2.0, 2.01, 0.02)['passed']
    assert not comparator.compare_hstar(2.0, 2.05, 0.02)['passed']

    heights = {'h_star': 5.0, 'witness': 'e4', 'vertex_heights': {'v1': 0.0, 'v2': 5.0}}
    report = comparator.compare_graph_exponents(heights, {'exponent': 5.0, 'assumption_holds': True},
                                                {'v1': 0.0, 'v2': 3.0})
    assert report['exponents_agree']
    assert [row['agrees'] for row in report['vertices']] == [True, False]


def test_comparison_report_renders(logger):
    console = Console(record=True, width=120)
    comparator = ComparisonManager(logger, console)
    reports = [comparator.compare_hstar(2.0, 2.01, 0.02),
               comparator.compare_graph_exponents({'h_star': 2.0, 'witness': 'e0',
                                                   'vertex_heights': {'v0': 0.0}})]
    comparator.print_comparison_report(reports)
    text = console.export_text()
    assert 'merge-tree vs graph' in text
    assert 'pass' in text
    assert 'witness edge e0' in text
