import json
import math

import boto3
import pandas as pd
import pytest
from moto import mock_aws

from src.functions.reports.writers import (FORMAT_VERSION, format_report_key, parse_target,
                                           reset_s3_client, summary_bytes, table_bytes,
                                           write_summary, write_table)
from src.lib.errors import ValidationError


@pytest.fixture
def frame():
    return pd.DataFrame({'t': [0.5, 1.0], 'mean': [1.0 / 3.0, -0.25], 'pass': [True, False]})


@pytest.fixture
def s3(monkeypatch):
    monkeypatch.setenv('AWS_ACCESS_KEY_ID', 'testing')
    monkeypatch.setenv('AWS_SECRET_ACCESS_KEY', 'testing')
    monkeypatch.setenv('AWS_DEFAULT_REGION', 'us-east-1')
    with mock_aws():
        reset_s3_client()
        client = boto3.client('s3', region_name='us-east-1')
        client.create_bucket(Bucket='reports')
        yield client
    reset_s3_client()


def test_parse_target():
    assert parse_target('s3://reports/runs/2024') == ('reports', 'runs/2024')
    assert parse_target('s3://reports') == ('reports', '')
    assert parse_target('results') == (None, 'results')
    with pytest.raises(ValidationError):
        parse_target('s3:///prefix')


def test_format_report_key():
    assert format_report_key('runs', 'plain_gbm', 'residual', 'csv') == 'runs/plain_gbm/residual.csv'
    assert format_report_key('', 'plain_gbm', 'residual', 'csv') == 'plain_gbm/residual.csv'


def test_summary_is_canonical():
    a = summary_bytes({'b': 1.0 / 3.0, 'a': math.inf, 'nested': {'z': 2, 'y': float('nan')}})
    b = summary_bytes({'nested': {'y': float('nan'), 'z': 2}, 'a': math.inf, 'b': 1.0 / 3.0})
    assert a == b
    payload = json.loads(a)
    assert payload['format_version'] == FORMAT_VERSION
    assert payload['a'] == 'inf'
    assert payload['b'] == 0.333333333333
    assert list(payload) == sorted(payload)


def test_csv_float_format(frame):
    text = table_bytes(frame, 'csv').decode('utf-8')
    assert text.splitlines() == ['t,mean,pass', '0.5,0.333333333333,True', '1,-0.25,False']


def test_json_table(frame):
    payload = json.loads(table_bytes(frame, 'json'))
    assert payload['format_version'] == FORMAT_VERSION
    assert payload['rows'][1] == {'t': 1.0, 'mean': -0.25, 'pass': False}


def test_unknown_format(frame):
    with pytest.raises(ValidationError):
        table_bytes(frame, 'xlsx')


def test_write_local(tmp_path, frame):
    csv_path = write_table(frame, str(tmp_path), 'run', 'residual', 'csv')
    parquet_path = write_table(frame, str(tmp_path), 'run', 'residual', 'parquet')
    summary_path = write_summary({'passed': True}, str(tmp_path), 'run', 'verify_summary')

    assert csv_path == str(tmp_path / 'run' / 'residual.csv')
    pd.testing.assert_frame_equal(pd.read_parquet(parquet_path), frame)
    assert json.loads((tmp_path / 'run' / 'verify_summary.json').read_text()) == {
        'format_version': FORMAT_VERSION, 'passed': True}
    assert summary_path.endswith('verify_summary.json')


def test_write_s3(s3, frame):
    location = write_table(frame, 's3://reports/nightly', 'plain_gbm', 'residual', 'csv')
    assert location == 's3://reports/nightly/plain_gbm/residual.csv'
    body = s3.get_object(Bucket='reports', Key='nightly/plain_gbm/residual.csv')['Body'].read()
    assert body == table_bytes(frame, 'csv')

    write_summary({'passed': False}, 's3://reports', 'plain_gbm', 'verify_summary')
    obj = s3.get_object(Bucket='reports', Key='plain_gbm/verify_summary.json')
    assert json.loads(obj['Body'].read())['passed'] is False
    assert obj['ContentType'] == 'application/json'


def test_write_s3_missing_bucket(s3, frame):
    with pytest.raises(Exception):
        write_table(frame, 's3://absent', 'run', 'residual', 'csv')
