import json

import numpy as np
import pandas as pd
import pytest

from serialization import json_default


def test_json_default():
    assert json_default(np.int64(3)) == 3
    assert json_default(np.array([1.0, 2.0])) == [1.0, 2.0]
    assert json_default(pd.DataFrame({"a": [1]})) == [{"a": 1}]
    with pytest.raises(TypeError):
        json_default(object())


def test_nested_report_round_trips():
    doc = {"margin": np.float64(0.25), "passed": np.bool_(True), "grid": np.zeros((2, 1))}
    assert json.loads(json.dumps(doc, default=json_default)) == {"margin": 0.25, "passed": True,
                                                                  "grid": [[0.0], [0.0]]}
