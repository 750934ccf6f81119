"""Two-arm trial data: loading, validation, and the shared dataset type."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError

OUTCOME_KINDS = ("continuous", "binary")

RARE_OUTCOME_THRESHOLD = 0.05


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns to dataset roles.

    ``outcome_kind`` may be "continuous", "binary", or "auto" (infer binary
    when every outcome value is 0 or 1).
    """

    outcome: str
    treatment: str
    covariates: tuple = ()
    outcome_kind: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.outcome_kind not in OUTCOME_KINDS + ("auto",):
            raise DatasetError(f"unknown outcome_kind {self.outcome_kind!r}")


@dataclass(frozen=True)
class TrialDataset:
    """Outcomes, binary treatment indicator, and baseline covariates.

    Immutable after construction (arrays are set read-only), so instances
    are safe to share across concurrent readers. Construction checks shape
    consistency only; substantive invariants are reported by ``validate``
    and enforced by ``load_csv``.
    """

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    covariate_names: tuple = ()
    outcome_kind: str = "continuous"

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        z = np.ascontiguousarray(self.z, dtype=np.int64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(y), 0)
        if x.ndim != 2:
            raise DatasetError("covariate matrix must be two-dimensional")
        if len(y) != len(z) or len(y) != x.shape[0]:
            raise DatasetError(
                f"length mismatch: y={len(y)}, z={len(z)}, x rows={x.shape[0]}"
            )
        names = tuple(self.covariate_names)
        if not names:
            names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DatasetError(
                f"{len(names)} covariate names for {x.shape[1]} columns"
            )
        if self.outcome_kind not in OUTCOME_KINDS:
            raise DatasetError(f"unknown outcome_kind {self.outcome_kind!r}")
        for arr in (y, z, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self):
        return len(self.y)

    @property
    def n_treated(self):
        return int(np.sum(self.z))

    @property
    def n_control(self):
        return self.n - self.n_treated

    @property
    def p(self):
        return self.x.shape[1]

    def column(self, name):
        """Covariate column by name."""
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise DatasetError(f"no covariate named {name!r}") from None
        return self.x[:, j]


@dataclass
class ValidationReport:
    """Invariant violations (fatal) and warnings (informational)."""

    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def validate(ds):
    """Check TrialDataset invariants without mutating the dataset."""
    report = ValidationReport()
    if ds.n < 2:
        report.violations.append(f"at least 2 units required, got {ds.n}")
    if not np.all((ds.z == 0) | (ds.z == 1)):
        report.violations.append("treatment not binary")
    elif ds.n_treated == 0 or ds.n_control == 0:
        report.violations.append("both arms required")
    if not np.all(np.isfinite(ds.y)):
        report.violations.append("non-finite outcome values")
    if ds.p and not np.all(np.isfinite(ds.x)):
        report.violations.append("non-finite covariate values")
    if ds.outcome_kind == "binary":
        finite = ds.y[np.isfinite(ds.y)]
        if not np.all((finite == 0.0) | (finite == 1.0)):
            report.violations.append("binary outcome with values outside {0, 1}")
        elif finite.size:
            prevalence = float(np.mean(finite))
            if 0.0 < min(prevalence, 1.0 - prevalence) < RARE_OUTCOME_THRESHOLD:
                report.warnings.append(
                    f"rare outcome: prevalence {prevalence:.3f}"
                )
    for j, name in enumerate(ds.covariate_names):
        col = ds.x[:, j]
        if np.all(np.isfinite(col)) and np.min(col) == np.max(col):
            report.warnings.append(f"constant covariate: {name}")
    return report


def _parse_cell(text, column, row):
    text = text.strip() if text is not None else ""
    if not text:
        raise DatasetError(f"missing {column} at row {row}")
    try:
        return float(text)
    except ValueError:
        raise DatasetError(
            f"non-numeric value {text!r} in column {column} at row {row}"
        ) from None


def load_csv(path, schema):
    """Parse a header-rowed CSV into a validated TrialDataset.

    UTF-8, '.' decimal separator; categorical covariates must arrive
    pre-encoded as numeric indicator columns.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        wanted = [schema.outcome, schema.treatment, *schema.covariates]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DatasetError(f"missing column(s): {', '.join(missing)}")
        index = {name: header.index(name) for name in wanted}

        y, z, rows = [], [], []
        for row_number, row in enumerate(reader, start=1):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"row {row_number} has {len(row)} fields, expected {len(header)}"
                )
            y.append(_parse_cell(row[index[schema.outcome]], "outcome", row_number))
            z_val = _parse_cell(row[index[schema.treatment]], "treatment", row_number)
            if z_val not in (0.0, 1.0):
                raise DatasetError(
                    f"treatment not binary: value {z_val!r} at row {row_number}"
                )
            z.append(int(z_val))
            rows.append(
                [_parse_cell(row[index[c]], c, row_number) for c in schema.covariates]
            )

    if not y:
        raise DatasetError(f"no data rows in {path}")

    outcome_kind = schema.outcome_kind
    if outcome_kind == "auto":
        outcome_kind = (
            "binary" if all(v in (0.0, 1.0) for v in y) else "continuous"
        )
    ds = TrialDataset(
        y=np.asarray(y),
        z=np.asarray(z),
        x=np.asarray(rows, dtype=np.float64).reshape(len(y), len(schema.covariates)),
        covariate_names=tuple(schema.covariates),
        outcome_kind=outcome_kind,
    )
    report = validate(ds)
    if not report.ok:
        raise DatasetError("; ".join(report.violations))
    return ds


def write_csv(ds, path, outcome="y", treatment="z"):
    """Write a dataset back to CSV; round-trips bit-exactly through load_csv."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([outcome, treatment, *ds.covariate_names])
        for i in range(ds.n):
            writer.writerow(
                [repr(float(ds.y[i])), int(ds.z[i])]
                + [repr(float(v)) for v in ds.x[i]]
            )
