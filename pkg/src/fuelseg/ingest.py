"""Survey ingestion: raw household CSVs to a treatment-by-fuel abundance table.

Two input files are inner-joined on a household key: a demographics file
carrying the four categorical factors (ethnicity, income, education, geo)
and a resources file carrying the cooking-fuel label. Raw factor labels are
recoded through user-supplied mappings, households with any missing required
field are dropped (and counted in a load report), and the retained
households are tallied into one row per observed factor combination.

The regroup mappings live in a JSON config file since they are survey
specific; see :class:`RegroupConfig` for the schema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

FACTOR_NAMES = ("ethnicity", "income", "education", "geo")

DEFAULT_COLUMNS = {
    "household_id": "household_id",
    "ethnicity": "ethnicity",
    "income": "income",
    "education": "education",
    "geo": "geo",
    "fuel": "fuel",
}

DEMOGRAPHICS_FIELDS = ("ethnicity", "income", "education", "geo")
RESOURCES_FIELDS = ("fuel",)


@dataclass(frozen=True)
class RegroupConfig:
    """Recoding rules that turn raw survey labels into analysis levels.

    JSON schema (all label lists are ordered; the declared order defines
    the canonical treatment sort order downstream)::

        {
          "ethnicity_levels": ["GroupA", ...],
          "ethnicity_map":    {"raw social group": "GroupA", ...},
          "education_levels": ["Illiterate", ...],
          "education_map":    {"raw attainment": "Illiterate", ...},
          "geo_levels":       ["Himalayan", "Hilly"],
          "geo_map":          {"municipality id": "Himalayan", ...},
          "income_levels":    ["<10k", ...],      # raw values used directly
          "fuel_labels":      ["firewood", ...],  # raw values used directly
          "columns": {"household_id": "...", "ethnicity": "...", ...},
          "expected_level_counts": {"ethnicity": 10, "education": 5,
                                    "geo": 2, "income": 5, "fuel": 6}
        }

    ``columns`` and ``expected_level_counts`` are optional. Income and fuel
    carry no map: their raw values must already be members of the declared
    label lists. When ``expected_level_counts`` is present, the declared
    level lists must have exactly those cardinalities.
    """

    ethnicity_map: dict[str, str]
    education_map: dict[str, str]
    geo_map: dict[str, str]
    ethnicity_levels: tuple[str, ...]
    education_levels: tuple[str, ...]
    geo_levels: tuple[str, ...]
    income_levels: tuple[str, ...]
    fuel_labels: tuple[str, ...]
    columns: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))

    def __post_init__(self) -> None:
        for name, levels in self.level_lists().items():
            if not levels:
                raise ConfigError(f"level list for {name!r} is empty")
            if len(set(levels)) != len(levels):
                raise ConfigError(f"level list for {name!r} has duplicates")
        for name, mapping in (
            ("ethnicity", self.ethnicity_map),
            ("education", self.education_map),
            ("geo", self.geo_map),
        ):
            targets = set(self.level_lists()[name])
            bad = sorted({v for v in mapping.values() if v not in targets})
            if bad:
                raise ConfigError(
                    f"{name}_map targets not in declared {name} levels: {bad}"
                )
        missing = [k for k in DEFAULT_COLUMNS if k not in self.columns]
        if missing:
            raise ConfigError(f"columns config is missing keys: {missing}")

    def level_lists(self) -> dict[str, tuple[str, ...]]:
        return {
            "ethnicity": self.ethnicity_levels,
            "income": self.income_levels,
            "education": self.education_levels,
            "geo": self.geo_levels,
            "fuel": self.fuel_labels,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RegroupConfig":
        def need(key):
            if key not in raw:
                raise ConfigError(f"regroup config is missing {key!r}")
            return raw[key]

        columns = dict(DEFAULT_COLUMNS)
        columns.update(raw.get("columns", {}))
        cfg = cls(
            ethnicity_map={str(k): str(v) for k, v in need("ethnicity_map").items()},
            education_map={str(k): str(v) for k, v in need("education_map").items()},
            geo_map={str(k): str(v) for k, v in need("geo_map").items()},
            ethnicity_levels=tuple(str(x) for x in need("ethnicity_levels")),
            education_levels=tuple(str(x) for x in need("education_levels")),
            geo_levels=tuple(str(x) for x in need("geo_levels")),
            income_levels=tuple(str(x) for x in need("income_levels")),
            fuel_labels=tuple(str(x) for x in need("fuel_labels")),
            columns=columns,
        )
        expected = raw.get("expected_level_counts")
        if expected:
            lists = cfg.level_lists()
            for name, count in expected.items():
                if name not in lists:
                    raise ConfigError(f"expected_level_counts has unknown factor {name!r}")
                if len(lists[name]) != int(count):
                    raise ConfigError(
                        f"declared {name} levels have cardinality {len(lists[name])}, "
                        f"expected {count}"
                    )
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "RegroupConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"regroup config not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"regroup config is not valid JSON: {path}: {exc}") from exc
        return cls.from_dict(raw)


@dataclass
class LoadReport:
    """Bookkeeping from :func:`load_households`.

    ``raw_households`` counts distinct household keys across both files
    (rows with an empty key each count once). ``missing_by_field`` counts
    households whose field was empty or whose source record was absent.
    """

    raw_households: int
    retained: int
    dropped: int
    missing_by_field: dict[str, int]
    missing_records: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "raw_households": self.raw_households,
            "retained": self.retained,
            "dropped": self.dropped,
            "missing_by_field": dict(self.missing_by_field),
            "missing_records": dict(self.missing_records),
        }


@dataclass
class HouseholdTable:
    """Cleaned per-household records with level codes into the config lists."""

    ids: list[str]
    ethnicity: np.ndarray
    income: np.ndarray
    education: np.ndarray
    geo: np.ndarray
    fuel: np.ndarray
    levels: dict[str, tuple[str, ...]]
    load_report: LoadReport | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def factor_codes(self, name: str) -> np.ndarray:
        return {
            "ethnicity": self.ethnicity,
            "income": self.income,
            "education": self.education,
            "geo": self.geo,
            "fuel": self.fuel,
        }[name]


def _read_records(
    path: Path, key_col: str, value_cols: tuple[str, ...]
) -> tuple[dict[str, dict[str, str]], int]:
    """Read one CSV into {key: {col: value}}.

    Returns the record dict plus the count of rows with an empty key.
    Raises on malformed rows (wrong field count) and duplicate keys.
    """
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    records: dict[str, dict[str, str]] = {}
    empty_key_rows = 0
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return {}, 0
        header = [h.strip() for h in header]
        positions = {}
        for col in (key_col, *value_cols):
            if col not in header:
                raise DataError(f"{path}: required column {col!r} not in header")
            positions[col] = header.index(col)
        width = len(header)
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}:{reader.line_num}: expected {width} fields, got {len(row)}"
                )
            key = row[positions[key_col]].strip()
            if not key:
                empty_key_rows += 1
                continue
            if key in records:
                raise DataError(
                    f"{path}:{reader.line_num}: duplicate household key {key!r}"
                )
            records[key] = {c: row[positions[c]].strip() for c in value_cols}
    return records, empty_key_rows


def load_households(
    demographics_path: str | Path,
    resources_path: str | Path,
    config: RegroupConfig,
) -> HouseholdTable:
    """Join the two survey files, recode labels, and drop incomplete rows.

    A household is retained only when it appears in both files and all six
    required fields are nonempty. Labels that are present but not covered
    by the config mappings abort the load with a listing of the offenders;
    missing values are dropped and counted instead.
    """
    demographics_path = Path(demographics_path)
    resources_path = Path(resources_path)
    cols = config.columns

    demo, demo_empty = _read_records(
        demographics_path,
        cols["household_id"],
        tuple(cols[f] for f in DEMOGRAPHICS_FIELDS),
    )
    res, res_empty = _read_records(
        resources_path,
        cols["household_id"],
        tuple(cols[f] for f in RESOURCES_FIELDS),
    )

    all_keys = sorted(set(demo) | set(res))
    missing_by_field = {f: 0 for f in (*DEMOGRAPHICS_FIELDS, *RESOURCES_FIELDS)}
    missing_by_field["household_id"] = demo_empty + res_empty
    missing_records = {
        "demographics": sum(1 for k in all_keys if k not in demo),
        "resources": sum(1 for k in all_keys if k not in res),
    }

    complete: list[tuple[str, str, str, str, str, str]] = []
    for key in all_keys:
        drec = demo.get(key)
        rrec = res.get(key)
        ok = True
        if drec is None:
            for f in DEMOGRAPHICS_FIELDS:
                missing_by_field[f] += 1
            ok = False
        else:
            for f in DEMOGRAPHICS_FIELDS:
                if not drec[cols[f]]:
                    missing_by_field[f] += 1
                    ok = False
        if rrec is None:
            for f in RESOURCES_FIELDS:
                missing_by_field[f] += 1
            ok = False
        else:
            for f in RESOURCES_FIELDS:
                if not rrec[cols[f]]:
                    missing_by_field[f] += 1
                    ok = False
        if ok:
            complete.append(
                (
                    key,
                    drec[cols["ethnicity"]],
                    drec[cols["income"]],
                    drec[cols["education"]],
                    drec[cols["geo"]],
                    rrec[cols["fuel"]],
                )
            )

    levels = config.level_lists()
    index = {name: {lab: i for i, lab in enumerate(labs)} for name, labs in levels.items()}

    def code_via_map(raw: str, mapping: dict[str, str], name: str, unmapped: dict):
        target = mapping.get(raw)
        if target is None:
            unmapped.setdefault(name, set()).add(raw)
            return -1
        return index[name][target]

    def code_direct(raw: str, name: str, unmapped: dict):
        i = index[name].get(raw)
        if i is None:
            unmapped.setdefault(name, set()).add(raw)
            return -1
        return i

    unmapped: dict[str, set[str]] = {}
    n = len(complete)
    ids = [row[0] for row in complete]
    eth = np.empty(n, dtype=np.int32)
    inc = np.empty(n, dtype=np.int32)
    edu = np.empty(n, dtype=np.int32)
    geo = np.empty(n, dtype=np.int32)
    fuel = np.empty(n, dtype=np.int32)
    for i, (_, e, inc_raw, ed, g, f) in enumerate(complete):
        eth[i] = code_via_map(e, config.ethnicity_map, "ethnicity", unmapped)
        inc[i] = code_direct(inc_raw, "income", unmapped)
        edu[i] = code_via_map(ed, config.education_map, "education", unmapped)
        geo[i] = code_via_map(g, config.geo_map, "geo", unmapped)
        fuel[i] = code_direct(f, "fuel", unmapped)

    if unmapped:
        parts = []
        for name in sorted(unmapped):
            labels = sorted(unmapped[name])
            shown = ", ".join(repr(x) for x in labels[:20])
            more = f" (+{len(labels) - 20} more)" if len(labels) > 20 else ""
            parts.append(f"{name}: {shown}{more}")
        raise DataError("unmapped labels in input: " + "; ".join(parts))

    raw_households = len(all_keys) + demo_empty + res_empty
    report = LoadReport(
        raw_households=raw_households,
        retained=n,
        dropped=raw_households - n,
        missing_by_field=missing_by_field,
        missing_records=missing_records,
    )
    return HouseholdTable(
        ids=ids,
        ethnicity=eth,
        income=inc,
        education=edu,
        geo=geo,
        fuel=fuel,
        levels={k: tuple(v) for k, v in levels.items()},
        load_report=report,
    )


@dataclass
class AbundanceTable:
    """Households tallied per factor combination (treatment) and fuel type.

    ``treatment_codes`` holds level indices into ``levels`` in the factor
    order (ethnicity, income, education, geo); rows are sorted
    lexicographically by those indices so output is byte-stable.
    """

    treatment_codes: np.ndarray  # (n_treatments, 4) int
    counts: np.ndarray  # (n_treatments, n_fuels) int64
    levels: dict[str, tuple[str, ...]]
    fuel_labels: tuple[str, ...]

    @property
    def n_treatments(self) -> int:
        return self.counts.shape[0]

    def treatment_labels(self) -> list[tuple[str, str, str, str]]:
        out = []
        for row in self.treatment_codes:
            out.append(
                tuple(
                    self.levels[f][row[j]] for j, f in enumerate(FACTOR_NAMES)
                )
            )
        return out

    def treatment_names(self) -> list[str]:
        return ["|".join(t) for t in self.treatment_labels()]

    def factor_codes(self, name: str) -> np.ndarray:
        j = FACTOR_NAMES.index(name)
        return self.treatment_codes[:, j]

    def factor_labels(self, name: str) -> list[str]:
        labs = self.levels[name]
        return [labs[c] for c in self.factor_codes(name)]

    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*FACTOR_NAMES, *self.fuel_labels])
            for labels, row in zip(self.treatment_labels(), self.counts):
                writer.writerow([*labels, *(int(x) for x in row)])

    def to_json_dict(self) -> dict:
        return {
            "factors": list(FACTOR_NAMES),
            "levels": {k: list(v) for k, v in self.levels.items()},
            "fuel_labels": list(self.fuel_labels),
            "treatments": [list(t) for t in self.treatment_labels()],
            "counts": self.counts.tolist(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def from_json_dict(cls, raw: dict) -> "AbundanceTable":
        levels = {k: tuple(v) for k, v in raw["levels"].items()}
        index = {name: {lab: i for i, lab in enumerate(labs)} for name, labs in levels.items()}
        codes = np.array(
            [
                [index[f][t[j]] for j, f in enumerate(FACTOR_NAMES)]
                for t in raw["treatments"]
            ],
            dtype=np.int32,
        ).reshape(len(raw["treatments"]), len(FACTOR_NAMES))
        return cls(
            treatment_codes=codes,
            counts=np.asarray(raw["counts"], dtype=np.int64),
            levels=levels,
            fuel_labels=tuple(raw["fuel_labels"]),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "AbundanceTable":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"abundance table not found: {path}")
        return cls.from_json_dict(json.loads(path.read_text(encoding="utf-8")))


def build_abundance_table(households: HouseholdTable) -> AbundanceTable:
    """Tally households into one row per observed factor combination."""
    if len(households) == 0:
        raise DataError("household table is empty")
    n_fuels = len(households.levels["fuel"])
    combos: dict[tuple[int, int, int, int], np.ndarray] = {}
    eth, inc, edu, geo, fuel = (
        households.ethnicity,
        households.income,
        households.education,
        households.geo,
        households.fuel,
    )
    for i in range(len(households)):
        key = (int(eth[i]), int(inc[i]), int(edu[i]), int(geo[i]))
        row = combos.get(key)
        if row is None:
            row = np.zeros(n_fuels, dtype=np.int64)
            combos[key] = row
        row[fuel[i]] += 1
    keys = sorted(combos)
    codes = np.array(keys, dtype=np.int32)
    counts = np.stack([combos[k] for k in keys])
    return AbundanceTable(
        treatment_codes=codes,
        counts=counts,
        levels=dict(households.levels),
        fuel_labels=tuple(households.levels["fuel"]),
    )


def log_transform(data, variant: str = "ln1p") -> np.ndarray:
    """Dampen dominant counts: elementwise log of an abundance matrix.

    ``ln1p`` maps x to ln(1+x), defined at zero and monotone. ``vegan``
    mirrors the log transformation common in community-ecology toolkits:
    ln(x)+1 for x > 0 and 0 for x = 0 (natural log).
    """
    if isinstance(data, AbundanceTable):
        data = data.counts
    x = np.asarray(data, dtype=np.float64)
    if np.any(x < 0):
        raise DataError("log transform requires nonnegative counts")
    if variant == "ln1p":
        return np.log1p(x)
    if variant == "vegan":
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.log(x[pos]) + 1.0
        return out
    raise ValueError(f"unknown log variant: {variant!r}")
