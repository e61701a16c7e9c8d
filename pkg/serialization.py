# serialization.py - JSON encoding of numpy and pandas values in reports and ledger rows
import numpy as np
import pandas as pd


def json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, pd.DataFrame):
        return obj.to_dict(orient="records")
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
