import json
import math

import numpy as np
from hypothesis import given, strategies as st

from orthofield.io import CSV_HEADER, csv_text, fmt_csv, json_text, read_csv, write_atomic


def test_golden_csv():
    rows = [{"frozen_past_id": 0, "n": 64, "v": 64, "replicate_count": 20000, "sigma2": 1.0,
             "ks": 0.012345678901234567, "dkw": np.float64(1.3581 / math.sqrt(20000)), "verdict": True},
            {"frozen_past_id": -1, "n": 24, "v": "24x24", "replicate_count": 10, "sigma2": 2.25,
             "ks": 0.5, "dkw": 0.4, "verdict": np.bool_(False)}]
    assert csv_text(rows) == (
        "frozen_past_id,n,v,replicate_count,sigma2,ks,dkw,verdict\n"
        "0,64,64,20000,1,0.0123456789012,0.00960321719529,pass\n"
        "-1,24,24x24,10,2.25,0.5,0.4,fail\n")
    assert CSV_HEADER[-1] == "verdict"


def test_fmt_csv_scalars():
    assert fmt_csv(None) == "" and fmt_csv(np.int64(3)) == "3" and fmt_csv(1 / 3) == "0.333333333333"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_round_trip(x):
    assert json.loads(json_text({"x": x}))["x"] == x


def test_json_special_values():
    d = json.loads(json_text({"a": math.nan, "b": math.inf, "c": np.arange(2), "d": (np.float32(0.5),),
                              "e": "@f:0@", 3: True}))
    assert d == {"a": None, "b": "inf", "c": [0, 1], "d": [0.5], "e": "@f:0@", "3": True}
    assert "0.10000000000000001" in json_text([0.1])


def test_write_atomic(tmp_path):
    p = write_atomic(tmp_path / "sub" / "f.csv", csv_text([{"n": 1}], ("n",)))
    assert read_csv(p) == [{"n": "1"}]
    assert [f.name for f in p.parent.iterdir()] == ["f.csv"]
