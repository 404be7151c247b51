import numpy as np
import pytest

from asdmeta import forest, synth
from asdmeta.tabular import FeatureTable

# ABIDE-style multi-site scan-parameter fixture: 20 sites, 7 scanner models,
# TR/TI missing at a handful of sites, TE/FA always present.
SCAN_ROWS = [
    ("Caltech", "Siemens Magnetom TrioTim", "1.59", "2.73e-3", "0.80", "10"),
    ("CMU", "Siemens Magnetom Verio", "1.87", "2.48e-3", "1.10", "8"),
    ("KKI", "Philips Achieva 3T", "8.00e-3", "3.70e-3", "0.80", "8"),
    ("MAX_MUN", "Siemens Magnetom Verio", "1.80", "3.06e-3", "0.90", "9"),
    ("NYU", "Siemens Magnetom Allegra", "2.53", "3.25e-3", "1.10", "7"),
    ("OLIN", "Siemens Magnetom Allegra", "2.50", "2.74e-3", "0.90", "8"),
    ("OHSU", "Siemens Magnetom TrioTim", "2.30", "3.58e-3", "0.90", "10"),
    ("SDSU", "General Electric Discovery MR750 3T", "11.10e-3", "4.30e-3", "0.60", "8"),
    ("SBL", "Philips Intera 3T", "9.00e-3", "3.50e-3", "NA", "7"),
    ("STANFORD", "General Electric Signa 3T", "8.40e-3", "1.80e-3", "NA", "15"),
    ("TRINITY", "Philips Achieva 3T", "8.50e-3", "3.90e-3", "1.00", "8"),
    ("UCLA1", "Siemens Magnetom TrioTim", "2.30", "2.84e-3", "0.85", "9"),
    ("UCLA2", "Siemens Magnetom TrioTim", "2.30", "2.84e-3", "0.85", "9"),
    ("LEUVEN1", "Philips Intera 3T", "9.60e-3", "4.60e-3", "0.90", "8"),
    ("LEUVEN2", "Philips Intera 3T", "9.60e-3", "4.60e-3", "0.90", "8"),
    ("UM1", "General Electric Signa 3T", "NA", "1.80e-3", "NA", "15"),
    ("UM2", "General Electric Signa 3T", "NA", "1.80e-3", "NA", "15"),
    ("PITT", "Siemens Magnetom Allegra", "2.10", "3.93e-3", "1.00", "7"),
    ("USM", "Siemens Magnetom Allegra", "2.10", "3.93e-3", "1.00", "7"),
    ("YALE", "Siemens Magnetom TrioTim", "1.23", "1.73e-3", "0.60", "9"),
]


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    forest.warmup()


@pytest.fixture
def scan_csv(tmp_path):
    path = tmp_path / "scan_params.csv"
    lines = ["SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG"]
    lines += [",".join(row) for row in SCAN_ROWS]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def tiny_table():
    return FeatureTable(
        subject_ids=("a", "b", "c", "d"),
        site_ids=("X", "Y", "X", "Y"),
        features=np.array([[0.0, 1.0, 2.0, 3.0],
                           [4.0, 5.0, 6.0, 7.0],
                           [8.0, 9.0, 10.0, 11.0],
                           [12.0, 13.0, 14.0, 15.0]]),
        labels=np.array([1, 0, 1, 0]),
        feature_names=("f_1", "f_2", "f_3", "f_4"),
    )


def make_planted_table(seed, n=100, d=8, k=2, effect=3.0, sizes=None):
    cfg = synth.SynthConfig(
        sizes=sizes or (n,), d=d, k_informative=k, effect_size=effect, seed=seed)
    return synth.generate(cfg)
