"""Corpus ingestion: the five-column rating files and label derivation.

A data row is (English, Hindi, Hinglish, Average rating, Disagreement) or,
with raw_ratings, (English, Hindi, Hinglish, Rating-A, Rating-B). Two
annotators score each Hinglish sentence 1-10; the published labels are the
half-up rounded mean of the two ratings (1-10) and their absolute
difference (0-9).
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DataError

log = logging.getLogger(__name__)

RATING_MIN, RATING_MAX = 1, 10
N_CLASSES = 10


@dataclass
class RawRecord:
    english: str
    hindi: str
    hinglish: str
    rating_a: Optional[int] = None
    rating_b: Optional[int] = None
    average_rating: Optional[int] = None
    disagreement: Optional[int] = None


@dataclass(frozen=True)
class Example:
    """A corpus row with both task labels as 0-based class indices."""
    english: str
    hindi: str
    hinglish: str
    avg_rating_label: int    # rating 1-10 stored as index 0-9
    disagreement_label: int  # disagreement 0-9 stored as-is


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)


def _check_rating(value: int, low: int, high: int, what: str) -> int:
    if not low <= value <= high:
        raise DataError(f"{what} {value} outside [{low}, {high}]")
    return value


def derive_average_rating(rating_a: int, rating_b: int) -> int:
    """Half-up rounded mean of two 1-10 ratings (7.5 rounds to 8)."""
    _check_rating(rating_a, RATING_MIN, RATING_MAX, "rating_a")
    _check_rating(rating_b, RATING_MIN, RATING_MAX, "rating_b")
    # the mean of two ints is x.0 or x.5, so floor(mean + 0.5) is exact
    return (rating_a + rating_b + 1) // 2


def derive_disagreement(rating_a: int, rating_b: int) -> int:
    """Absolute difference of two 1-10 ratings, range 0-9."""
    _check_rating(rating_a, RATING_MIN, RATING_MAX, "rating_a")
    _check_rating(rating_b, RATING_MIN, RATING_MAX, "rating_b")
    return abs(rating_a - rating_b)


def _parse_int(raw: str, what: str, where: str) -> int:
    text = raw.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: {what} {raw!r} is not an integer") from None
    if value != int(value):
        raise DataError(f"{where}: {what} {raw!r} is not an integer")
    return int(value)


def parse_dataset(path, has_header: bool = True, raw_ratings: bool = False) -> list:
    """Read a five-column CSV into RawRecords, in file order.

    Malformed rows (wrong column count, empty text, out-of-range rating)
    raise DataError naming the file and physical line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = not has_header
        for row in reader:
            if not first:
                first = True
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            where = f"{path}:{reader.line_num}"
            if len(row) != 5:
                raise DataError(f"{where}: column count {len(row)}, expected 5")
            english, hindi, hinglish = (cell.strip() for cell in row[:3])
            for name, text in (("English", english), ("Hindi", hindi), ("Hinglish", hinglish)):
                if not text:
                    raise DataError(f"{where}: empty {name} field")
            if raw_ratings:
                a = _parse_int(row[3], "Rating-A", where)
                b = _parse_int(row[4], "Rating-B", where)
                try:
                    record = RawRecord(english, hindi, hinglish, rating_a=a, rating_b=b)
                    _check_rating(a, RATING_MIN, RATING_MAX, "Rating-A")
                    _check_rating(b, RATING_MIN, RATING_MAX, "Rating-B")
                except DataError as exc:
                    raise DataError(f"{where}: {exc}") from None
            else:
                avg = _parse_int(row[3], "Average rating", where)
                dis = _parse_int(row[4], "Disagreement", where)
                try:
                    _check_rating(avg, RATING_MIN, RATING_MAX, "Average rating")
                    _check_rating(dis, 0, RATING_MAX - 1, "Disagreement")
                except DataError as exc:
                    raise DataError(f"{where}: {exc}") from None
                record = RawRecord(english, hindi, hinglish,
                                   average_rating=avg, disagreement=dis)
            records.append(record)
    return records


def parse_text_rows(path, has_header: bool = True) -> list:
    """Read an unlabeled three-column file of (English, Hindi, Hinglish)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    rows = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = not has_header
        for row in reader:
            if not first:
                first = True
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            where = f"{path}:{reader.line_num}"
            if len(row) < 3:
                raise DataError(f"{where}: column count {len(row)}, expected at least 3")
            english, hindi, hinglish = (cell.strip() for cell in row[:3])
            for name, text in (("English", english), ("Hindi", hindi), ("Hinglish", hinglish)):
                if not text:
                    raise DataError(f"{where}: empty {name} field")
            rows.append((english, hindi, hinglish))
    return rows


def write_dataset(records, path, has_header: bool = True, raw_ratings: bool = False) -> None:
    """Serialize RawRecords back to the five-column CSV layout."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if has_header:
            last_two = ["Rating-A", "Rating-B"] if raw_ratings else ["Average rating", "Disagreement"]
            writer.writerow(["English", "Hindi", "Hinglish"] + last_two)
        for r in records:
            last_two = [r.rating_a, r.rating_b] if raw_ratings else [r.average_rating, r.disagreement]
            writer.writerow([r.english, r.hindi, r.hinglish] + last_two)


def to_example(record: RawRecord) -> Example:
    """Resolve labels: file-provided when present, otherwise derived."""
    if record.average_rating is not None and record.disagreement is not None:
        avg = _check_rating(record.average_rating, RATING_MIN, RATING_MAX, "Average rating")
        dis = _check_rating(record.disagreement, 0, RATING_MAX - 1, "Disagreement")
    elif record.rating_a is not None and record.rating_b is not None:
        avg = derive_average_rating(record.rating_a, record.rating_b)
        dis = derive_disagreement(record.rating_a, record.rating_b)
    else:
        raise DataError("record carries neither (average, disagreement) nor both raw ratings")
    return Example(record.english, record.hindi, record.hinglish,
                   avg_rating_label=avg - 1, disagreement_label=dis)


def load_examples(path, has_header: bool = True, raw_ratings: bool = False) -> list:
    return [to_example(r) for r in parse_dataset(path, has_header, raw_ratings)]


def load_splits(train_path, validation_path, test_path,
                has_header: bool = True, raw_ratings: bool = False) -> DatasetSplit:
    """Load the three split files; empty validation/test only draw a warning."""
    split = DatasetSplit(
        train=load_examples(train_path, has_header, raw_ratings),
        validation=load_examples(validation_path, has_header, raw_ratings),
        test=load_examples(test_path, has_header, raw_ratings),
    )
    for name, rows, path in (("train", split.train, train_path),
                             ("validation", split.validation, validation_path),
                             ("test", split.test, test_path)):
        if not rows:
            log.warning("%s split is empty (%s)", name, path)
    return split
