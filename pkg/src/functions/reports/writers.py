"""Write report tables and JSON summaries to a local directory or to S3.

Targets are either a directory path or s3://bucket/prefix. Equal inputs give
equal bytes: JSON keys are sorted and floats are written with a fixed format.
"""
import io
import json
import math
import os
from typing import Any, Dict, Optional, Tuple

import boto3
import pandas as pd

from ...lib.common_utils import setup_logging
from ...lib.errors import ValidationError

logger = setup_logging(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = '%.12g'
FORMATS = ('csv', 'json', 'parquet')

CONTENT_TYPES = {
    'csv': 'text/csv',
    'json': 'application/json',
    'parquet': 'application/octet-stream',
}

_s3 = None


def s3_client():
    global _s3
    if _s3 is None:
        _s3 = boto3.client('s3')
    return _s3


def reset_s3_client() -> None:
    global _s3
    _s3 = None


def parse_target(out: str) -> Tuple[Optional[str], str]:
    """(bucket, prefix) for s3://bucket/prefix targets, (None, directory) otherwise."""
    if out.startswith('s3://'):
        bucket, _, prefix = out[len('s3://'):].partition('/')
        if not bucket:
            raise ValidationError(f"S3 target '{out}' has no bucket")
        return bucket, prefix.strip('/')
    return None, out


def format_report_key(prefix: str, run_name: str, artifact: str, ext: str) -> str:
    """Format the object key of one report artifact."""
    key = f"{run_name}/{artifact}.{ext}"
    return f"{prefix}/{key}" if prefix else key


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, 'item') and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return float(FLOAT_FORMAT % value)
    return value


def summary_bytes(summary: Dict[str, Any]) -> bytes:
    """Canonical JSON encoding of a summary, tagged with format_version."""
    payload = dict(_clean(summary))
    payload['format_version'] = FORMAT_VERSION
    return (json.dumps(payload, sort_keys=True, indent=2) + '\n').encode('utf-8')


def table_bytes(frame: pd.DataFrame, fmt: str) -> bytes:
    if fmt == 'csv':
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n').encode('utf-8')
    if fmt == 'json':
        records = {'format_version': FORMAT_VERSION, 'rows': frame.to_dict(orient='records')}
        return (json.dumps(_clean(records), sort_keys=True, indent=2) + '\n').encode('utf-8')
    if fmt == 'parquet':
        buffer = io.BytesIO()
        frame.to_parquet(buffer, engine='pyarrow', index=False)
        return buffer.getvalue()
    raise ValidationError(f"unknown output format '{fmt}', expected one of {', '.join(FORMATS)}")


def _put(body: bytes, out: str, run_name: str, artifact: str, ext: str) -> str:
    bucket, prefix = parse_target(out)
    if bucket is None:
        directory = os.path.join(prefix, run_name)
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"{artifact}.{ext}")
        with open(path, 'wb') as f:
            f.write(body)
        logger.info(f"Wrote {path}")
        return path

    key = format_report_key(prefix, run_name, artifact, ext)
    try:
        s3_client().put_object(Bucket=bucket, Key=key, Body=body, ContentType=CONTENT_TYPES[ext])
    except Exception as e:
        logger.error(f"Error writing to S3: {str(e)}", exc_info=True)
        raise
    location = f"s3://{bucket}/{key}"
    logger.info(f"Wrote {location}")
    return location


def write_table(frame: pd.DataFrame, out: str, run_name: str, artifact: str, fmt: str = 'csv') -> str:
    """Write a table and return where it went."""
    return _put(table_bytes(frame, fmt), out, run_name, artifact, fmt)


def write_summary(summary: Dict[str, Any], out: str, run_name: str, artifact: str = 'summary') -> str:
    return _put(summary_bytes(summary), out, run_name, artifact, 'json')
