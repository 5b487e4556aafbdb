import json

import pytest

import flux_lab
from fluxlab.Errors import InputError


@pytest.fixture
def run(config_file, tmp_path, capsys):
    def _run(*argv, output='results'):
        code = flux_lab.main(['--config', str(config_file), '--output', str(tmp_path / output),
                              '--no-progress', *argv])
        return code, capsys.readouterr().out
    return _run


def test_theorem5_on_counterexample(run, data_dir, tmp_path):
    code, out = run('theorem5', '--edges', str(data_dir / 'crst_counterexample.csv'),
                    '--root', 'v2', '--sign', '-')
    assert code == 0
    assert '\n2\n' in out
    report = json.loads((tmp_path / 'results' / 'theorem5.json').read_text())
    assert report['exponent'] == 2.0
    assert report['rooted_rst']['total_weight'] == 7.0
    assert report['signed_crst']['total_weight'] == 9.0
    assert (tmp_path / 'results' / 'manifest.json').exists()


def test_empty_graph_exits_with_input_error(run, data_dir):
    code, out = run('theorem5', '--edges', str(data_dir / 'empty.csv'))
    assert code == 2
    assert 'NoArborescence' in out


def test_hstar_for_the_negative_resistance_field(run, tmp_path):
    code, out = run('hstar', '--preset', 'nr2006', '--c', '0')
    assert code == 0
    assert '\n2.0\n' in out
    rows = (tmp_path / 'results' / 'vertex_heights.csv').read_text().splitlines()
    assert rows == ['vertex,height', 'v0,0.0']


def test_tree_stationary_law(run, data_dir):
    code, out = run('tree-stationary', '--chain', str(data_dir / 'three_state_chain.csv'))
    assert code == 0
    assert 'a=0.533333' in out
    assert 'c=0.2' in out


def test_sde_flux_records_its_seed(run, tmp_path):
    code, _ = run('sde-flux', '--preset', 'cos1d', '--c', '0.5', '--eps', '0.5', '--dt', '0.01',
                  '--T', '2', '--batch', '4', '--seed', '17')
    assert code == 0
    manifest = json.loads((tmp_path / 'results' / 'manifest.json').read_text())
    assert manifest['seeds'] == {'seed': 17}
    assert manifest['inputs']['potential'] == {'preset': 'cos1d'}
    assert {f['name'] for f in manifest['files']} == {'sde_flux.csv'}


def test_manifest_replay_reproduces_the_run(run, data_dir, tmp_path):
    run('theorem5', '--edges', str(data_dir / 'crst_counterexample.csv'))
    first = json.loads((tmp_path / 'results' / 'theorem5.json').read_text())
    code, out = run('--manifest', str(tmp_path / 'results' / 'manifest.json'), output='replay')
    assert code == 0
    assert '\n2\n' in out
    assert json.loads((tmp_path / 'replay' / 'theorem5.json').read_text()) == first


def test_bad_configuration_file(tmp_path, capsys):
    config = tmp_path / 'bad.json'
    config.write_text(json.dumps({'plotting': {'dpi': 300}}))
    code = flux_lab.main(['--config', str(config), 'theorem5', '--edges', 'x.csv'])
    assert code == 2
    assert 'ConfigurationError' in capsys.readouterr().out


def test_missing_required_argument(run):
    code, out = run('measure-heights', '--preset', 'cos1d', '--eps', '0.2')
    assert code == 2
    assert 'needs eps and r' in out


def test_subcommand_or_manifest_required(capsys):
    with pytest.raises(SystemExit):
        flux_lab.parse_arguments([])


def test_build_run_config_keeps_given_options():
    args = flux_lab.parse_arguments(['--jobs', '2', 'action-min', '--preset', 'cos1d', '--T', '5',
                                     '--T-list', '10,20', '--start', '3.14', '--end', '5.9'])
    run_config = flux_lab.build_run_config(args)
    assert run_config == {'subcommand': 'action-min', 'potential': {'preset': 'cos1d'},
                          'T_list': [5.0, 10.0, 20.0], 'start': [3.14], 'end': [5.9], 'jobs': 2}


def test_build_run_config_parses_custom_forms():
    args = flux_lab.parse_arguments(['fp-flux', '--preset', 'nr2006', '--c', '0', '--form', '1,0.5',
                                     '--eps-list', '0.5 0.4'])
    run_config = flux_lab.build_run_config(args)
    assert run_config['form'] == [1.0, 0.5]
    assert run_config['eps_list'] == [0.5, 0.4]
    assert run_config['c'] == 0.0
    assert 'dump' not in run_config


def test_potential_file_must_exist(tmp_path):
    args = flux_lab.parse_arguments(['hstar', '--potential', str(tmp_path / 'absent.json')])
    with pytest.raises(InputError):
        flux_lab.build_run_config(args)
