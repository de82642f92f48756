"""Adult census ingestion, encoding, device partitioning, synthetic data.

The Adult file is plain CSV (header optional, fields may carry the dataset's
usual stray spaces, "?" marks a missing value). Missing values are kept as a
dedicated "missing" category so row counts stay intact. Numeric columns are
z-scored and categoricals one-hot encoded; encoding statistics and
vocabularies come from the pooled training rows of all devices only, then get
applied to every split.

Rows are dealt to devices by a seeded shuffle: the first
n_devices * per_device rows are assigned in equal consecutive blocks and the
remainder dropped (48,842 real rows -> 16 x 3,052 with 10 dropped). Inside a
device the block splits train/test/val by the configured fractions with
floor rounding for train and test, remainder to val
(3,052 -> 2,441 / 305 / 306).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParseError
from .models import Example

__all__ = [
    "NUMERIC_COLUMNS",
    "CATEGORICAL_COLUMNS",
    "ADULT_COLUMNS",
    "MISSING",
    "DatasetSpec",
    "AdultTable",
    "AdultEncoder",
    "DeviceSplits",
    "EncodedDataset",
    "load_adult",
    "partition",
    "synthetic",
    "synthetic_adult_csv",
]

NUMERIC_COLUMNS = (
    "age",
    "fnlwgt",
    "education-num",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
)
CATEGORICAL_COLUMNS = (
    "workclass",
    "education",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "native-country",
)
ADULT_COLUMNS = (
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
)
LABEL_COLUMN = "income"
MISSING = "missing"


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from and how it is dealt to devices."""

    source: str  # file path, or "synthetic[:...]" for generated data
    n_devices: int = 16
    per_device: int = 3052
    train_frac: float = 0.8
    test_frac: float = 0.1
    val_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_devices < 1 or self.per_device < 1:
            raise ValueError("n_devices and per_device must be >= 1")
        total = self.train_frac + self.test_frac + self.val_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")


@dataclass
class AdultTable:
    """Columnar raw table: numeric arrays, categorical string lists, labels."""

    numeric: dict[str, np.ndarray]
    categorical: dict[str, list[str]]
    labels: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.labels)


def load_adult(path) -> AdultTable:
    """Parse an Adult CSV; "?" becomes the "missing" category, label is
    1 iff the income field denotes >50K."""
    numeric = {c: [] for c in NUMERIC_COLUMNS}
    categorical = {c: [] for c in CATEGORICAL_COLUMNS}
    labels: list[int] = []
    expected_fields = len(ADULT_COLUMNS) + 1
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            fields = [f.strip() for f in row]
            if fields[0].startswith("|"):  # cross-validator banner line
                continue
            if lineno == 1 and fields[0] == "age":  # optional header
                if fields != list(ADULT_COLUMNS) + [LABEL_COLUMN]:
                    raise ParseError(f"line 1: header does not match the Adult schema")
                continue
            if len(fields) != expected_fields:
                raise ParseError(
                    f"line {lineno}: expected {expected_fields} fields, got {len(fields)}"
                )
            record = dict(zip(ADULT_COLUMNS, fields[:-1]))
            for col in NUMERIC_COLUMNS:
                try:
                    numeric[col].append(float(record[col]))
                except ValueError:
                    raise ParseError(
                        f"line {lineno}: non-numeric value {record[col]!r} in column {col}"
                    ) from None
            for col in CATEGORICAL_COLUMNS:
                value = record[col]
                categorical[col].append(MISSING if value == "?" else value)
            income = fields[-1].rstrip(".")
            if income not in (">50K", "<=50K"):
                raise ParseError(f"line {lineno}: unrecognized income label {fields[-1]!r}")
            labels.append(1 if income == ">50K" else 0)
    return AdultTable(
        numeric={c: np.array(v, dtype=np.float64) for c, v in numeric.items()},
        categorical=categorical,
        labels=np.array(labels, dtype=np.int64),
    )


@dataclass
class AdultEncoder:
    """Z-score + one-hot encoder; statistics from the rows it was fitted on."""

    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    vocabularies: dict[str, list[str]] = field(default_factory=dict)
    constant_columns: list[str] = field(default_factory=list)

    def fit(self, table: AdultTable, rows: np.ndarray) -> "AdultEncoder":
        import logging

        for col in NUMERIC_COLUMNS:
            values = table.numeric[col][rows]
            mean = float(values.mean())
            std = float(values.std())
            if std == 0.0:
                logging.getLogger(__name__).warning(
                    "numeric column %s has zero variance on the training pool; "
                    "encoding it as constant 0",
                    col,
                )
                self.constant_columns.append(col)
            self.means[col] = mean
            self.stds[col] = std
        for col in CATEGORICAL_COLUMNS:
            seen = {table.categorical[col][i] for i in rows}
            self.vocabularies[col] = sorted(seen)
        return self

    @property
    def feature_dim(self) -> int:
        return len(NUMERIC_COLUMNS) + sum(len(v) for v in self.vocabularies.values())

    def transform(self, table: AdultTable, rows: np.ndarray) -> np.ndarray:
        out = np.zeros((len(rows), self.feature_dim))
        col_offset = 0
        for col in NUMERIC_COLUMNS:
            if col not in self.constant_columns:
                out[:, col_offset] = (table.numeric[col][rows] - self.means[col]) / self.stds[col]
            col_offset += 1
        for col in CATEGORICAL_COLUMNS:
            index = {cat: k for k, cat in enumerate(self.vocabularies[col])}
            values = table.categorical[col]
            for r, row in enumerate(rows):
                k = index.get(values[row])
                if k is not None:  # categories unseen at fit time stay all-zero
                    out[r, col_offset + k] = 1.0
            col_offset += len(index)
        return out


@dataclass
class DeviceSplits:
    """One device's encoded data."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    def examples(self, split: str) -> list[Example]:
        x = getattr(self, f"x_{split}")
        y = getattr(self, f"y_{split}")
        return [Example(x[i], int(y[i])) for i in range(len(y))]


@dataclass
class EncodedDataset:
    devices: list[DeviceSplits]
    feature_dim: int
    encoder: AdultEncoder | None = None

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def pooled(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        xs = [getattr(d, f"x_{split}") for d in self.devices]
        ys = [getattr(d, f"y_{split}") for d in self.devices]
        return np.concatenate(xs), np.concatenate(ys)


def _split_sizes(per_device: int, spec: DatasetSpec) -> tuple[int, int, int]:
    n_train = int(np.floor(spec.train_frac * per_device))
    n_test = int(np.floor(spec.test_frac * per_device))
    n_val = per_device - n_train - n_test
    return n_train, n_test, n_val


def partition(table: AdultTable, spec: DatasetSpec) -> EncodedDataset:
    """Shuffle, deal to devices, split, fit the encoder on pooled train rows,
    and encode every split."""
    needed = spec.n_devices * spec.per_device
    if needed > table.n_rows:
        raise ValueError(
            f"insufficient rows: need {needed}, file has {table.n_rows}"
        )
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(table.n_rows)[:needed]
    n_train, n_test, n_val = _split_sizes(spec.per_device, spec)

    device_rows = []
    train_pool = []
    for dev in range(spec.n_devices):
        block = order[dev * spec.per_device : (dev + 1) * spec.per_device]
        rows = {
            "train": block[:n_train],
            "test": block[n_train : n_train + n_test],
            "val": block[n_train + n_test :],
        }
        device_rows.append(rows)
        train_pool.append(rows["train"])

    encoder = AdultEncoder().fit(table, np.concatenate(train_pool))
    devices = []
    for rows in device_rows:
        devices.append(
            DeviceSplits(
                x_train=encoder.transform(table, rows["train"]),
                y_train=table.labels[rows["train"]],
                x_test=encoder.transform(table, rows["test"]),
                y_test=table.labels[rows["test"]],
                x_val=encoder.transform(table, rows["val"]),
                y_val=table.labels[rows["val"]],
            )
        )
    return EncodedDataset(devices, encoder.feature_dim, encoder)


def synthetic(
    n_devices: int,
    per_device: int,
    feature_dim: int,
    separability: float,
    seed: int = 0,
    train_frac: float = 0.8,
    test_frac: float = 0.1,
) -> EncodedDataset:
    """Gaussian class-conditional data with a controllable margin.

    Class means sit at +/- separability/2 along a fixed direction; unit
    covariance. separability 0 is pure noise, large values are separable.
    """
    if min(n_devices, per_device, feature_dim) < 1:
        raise ValueError("n_devices, per_device, feature_dim must be >= 1")
    if separability < 0:
        raise ValueError("separability must be >= 0")
    rng = np.random.default_rng(seed)
    direction = np.zeros(feature_dim)
    direction[0] = 1.0
    spec = DatasetSpec(
        source="synthetic",
        n_devices=n_devices,
        per_device=per_device,
        train_frac=train_frac,
        test_frac=test_frac,
        val_frac=1.0 - train_frac - test_frac,
    )
    n_train, n_test, n_val = _split_sizes(per_device, spec)

    def draw(count: int) -> tuple[np.ndarray, np.ndarray]:
        y = rng.integers(0, 2, size=count)
        x = rng.standard_normal((count, feature_dim))
        x += np.outer(np.where(y == 1, 0.5, -0.5) * separability, direction)
        return x, y

    devices = []
    for _ in range(n_devices):
        x_train, y_train = draw(n_train)
        x_test, y_test = draw(n_test)
        x_val, y_val = draw(n_val)
        devices.append(DeviceSplits(x_train, y_train, x_test, y_test, x_val, y_val))
    return EncodedDataset(devices, feature_dim, encoder=None)


# ---------------------------------------------------------------------------
# Adult-schema synthetic file, for running the pipeline where the real census
# file is not available. Same columns, realistic vocabularies and marginals,
# label drawn from a logistic ground truth over a few of the fields.
# ---------------------------------------------------------------------------

_EDUCATION_LEVELS = [
    ("Preschool", 1), ("1st-4th", 2), ("5th-6th", 3), ("7th-8th", 4),
    ("9th", 5), ("10th", 6), ("11th", 7), ("12th", 8), ("HS-grad", 9),
    ("Some-college", 10), ("Assoc-voc", 11), ("Assoc-acdm", 12),
    ("Bachelors", 13), ("Masters", 14), ("Prof-school", 15), ("Doctorate", 16),
]
_EDUCATION_WEIGHTS = [
    0.002, 0.005, 0.010, 0.020, 0.016, 0.028, 0.037, 0.013, 0.322,
    0.223, 0.042, 0.033, 0.164, 0.054, 0.018, 0.013,
]
_WORKCLASSES = [
    "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
    "Local-gov", "State-gov", "Without-pay", "Never-worked",
]
_WORKCLASS_WEIGHTS = [0.694, 0.079, 0.034, 0.029, 0.064, 0.040, 0.001, 0.001]
_MARITAL = [
    "Married-civ-spouse", "Divorced", "Never-married", "Separated",
    "Widowed", "Married-spouse-absent", "Married-AF-spouse",
]
_MARITAL_WEIGHTS = [0.458, 0.136, 0.329, 0.031, 0.031, 0.013, 0.002]
_OCCUPATIONS = [
    "Tech-support", "Craft-repair", "Other-service", "Sales",
    "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
    "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
    "Transport-moving", "Priv-house-serv", "Protective-serv", "Armed-Forces",
]
_OCCUPATION_WEIGHTS = [
    0.030, 0.131, 0.106, 0.117, 0.130, 0.132, 0.044,
    0.064, 0.120, 0.032, 0.050, 0.005, 0.021, 0.018,
]
_RELATIONSHIPS = [
    "Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried",
]
_RELATIONSHIP_WEIGHTS = [0.048, 0.155, 0.404, 0.255, 0.031, 0.107]
_RACES = ["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"]
_RACE_WEIGHTS = [0.855, 0.031, 0.010, 0.008, 0.096]
_COUNTRIES = [
    "United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany",
    "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece", "South", "China",
    "Cuba", "Iran", "Honduras", "Philippines", "Italy", "Poland", "Jamaica",
    "Vietnam", "Mexico", "Portugal", "Ireland", "France", "Dominican-Republic",
    "Laos", "Ecuador", "Taiwan", "Haiti", "Columbia", "Hungary", "Guatemala",
    "Nicaragua", "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
    "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands",
]


def synthetic_adult_csv(path, n_rows: int = 48842, seed: int = 7) -> None:
    """Write an Adult-schema CSV of ``n_rows`` synthetic people."""
    rng = np.random.default_rng(seed)

    age = np.clip(np.rint(rng.normal(38.6, 13.7, n_rows)), 17, 90).astype(int)
    fnlwgt = np.clip(np.rint(np.exp(rng.normal(11.9, 0.55, n_rows))), 12285, 1490400).astype(int)
    edu_idx = rng.choice(len(_EDUCATION_LEVELS), n_rows, p=_normalized(_EDUCATION_WEIGHTS))
    education = [_EDUCATION_LEVELS[k][0] for k in edu_idx]
    education_num = np.array([_EDUCATION_LEVELS[k][1] for k in edu_idx])
    workclass = rng.choice(_WORKCLASSES, n_rows, p=_normalized(_WORKCLASS_WEIGHTS))
    marital = rng.choice(_MARITAL, n_rows, p=_normalized(_MARITAL_WEIGHTS))
    occupation = rng.choice(_OCCUPATIONS, n_rows, p=_normalized(_OCCUPATION_WEIGHTS))
    relationship = rng.choice(_RELATIONSHIPS, n_rows, p=_normalized(_RELATIONSHIP_WEIGHTS))
    race = rng.choice(_RACES, n_rows, p=_normalized(_RACE_WEIGHTS))
    sex = rng.choice(["Male", "Female"], n_rows, p=[0.668, 0.332])
    country_idx = rng.choice(len(_COUNTRIES), n_rows, p=_country_weights())
    country = [_COUNTRIES[k] for k in country_idx]
    hours = np.clip(np.rint(rng.normal(40.4, 12.3, n_rows)), 1, 99).astype(int)
    has_gain = rng.random(n_rows) < 0.084
    capital_gain = np.where(
        has_gain, np.rint(np.exp(rng.normal(8.6, 0.9, n_rows))).astype(int), 0
    )
    capital_gain = np.clip(capital_gain, 0, 99999)
    has_loss = rng.random(n_rows) < 0.047
    capital_loss = np.where(
        has_loss, np.clip(np.rint(rng.normal(1880, 320, n_rows)), 100, 4356).astype(int), 0
    )

    score = (
        -3.1
        + 0.030 * (age - 38.6)
        - 0.00035 * (age - 38.6) ** 2
        + 0.38 * (education_num - 10)
        + 1.9 * (marital == "Married-civ-spouse")
        + 0.035 * (hours - 40)
        + 0.9 * np.isin(occupation, ["Exec-managerial", "Prof-specialty"])
        + 0.25 * (sex == "Male")
        + 2.4 * (capital_gain > 5000)
        + 0.6 * (capital_loss > 1500)
    )
    prob = 1.0 / (1.0 + np.exp(-score))
    income = np.where(rng.random(n_rows) < prob, ">50K", "<=50K")

    def maybe_missing(values, p):
        mask = rng.random(n_rows) < p
        return ["?" if m else v for v, m in zip(values, mask)]

    workclass = maybe_missing(workclass, 0.057)
    occupation = maybe_missing(occupation, 0.057)
    country = maybe_missing(country, 0.018)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ADULT_COLUMNS) + [LABEL_COLUMN])
        for i in range(n_rows):
            writer.writerow([
                age[i], workclass[i], fnlwgt[i], education[i], education_num[i],
                marital[i], occupation[i], relationship[i], race[i], sex[i],
                capital_gain[i], capital_loss[i], hours[i], country[i], income[i],
            ])


def _normalized(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return w / w.sum()


def _country_weights() -> np.ndarray:
    w = np.full(len(_COUNTRIES), 0.1 / (len(_COUNTRIES) - 1))
    w[0] = 0.9
    return w / w.sum()
