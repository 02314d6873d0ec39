"""Synthetic chest-film stand-in corpus.

Each of the 14 findings owns two fixed grid patches. A case with the finding
gets a blob there: half a finding-specific colour pattern, half a severity
texture (mild / moderate / severe). The report names every present finding
with its severity, one templated sentence per finding in ascending finding
order.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .roi import read_raster, write_raster

DISEASES = (
    "enlarged cardiomediastinum",
    "cardiomegaly",
    "lung opacity",
    "lung lesion",
    "edema",
    "consolidation",
    "pneumonia",
    "atelectasis",
    "pneumothorax",
    "pleural effusion",
    "pleural other",
    "fracture",
    "support devices",
    "hernia",
)
N_DISEASES = len(DISEASES)

SEVERITIES = ("mild", "moderate", "severe")

TEMPLATES = (
    "{sev} enlargement of the cardiomediastinal silhouette",
    "{sev} cardiomegaly is present",
    "there is {sev} lung opacity",
    "a {sev} lung lesion is seen",
    "{sev} pulmonary edema is noted",
    "{sev} focal consolidation is seen",
    "{sev} pneumonia cannot be excluded",
    "{sev} bibasilar atelectasis is present",
    "there is a {sev} pneumothorax",
    "a {sev} pleural effusion is present",
    "{sev} pleural thickening is noted",
    "a {sev} rib fracture is identified",
    "{sev} displacement of support devices",
    "a {sev} hiatal hernia is present",
)

NO_FINDINGS = "no acute cardiopulmonary findings"


def finding_sentence(disease, severity):
    return TEMPLATES[disease].format(sev=SEVERITIES[severity])


def generic_sentence(disease):
    """Severity-free phrasing, used when no report memory is available."""
    return " ".join(TEMPLATES[disease].format(sev="").split())


def join_report(sentences):
    return ". ".join(sentences) + "."


def split_report(report):
    return [s.strip() for s in report.split(".") if s.strip()]


def designated_patches(disease, grid=14):
    """Two vertically stacked patches; findings 0-6 on rows 2-3, 7-13 on rows 8-9."""
    row = 2 + 6 * (disease // 7)
    col = 1 + 2 * (disease % 7)
    return (row * grid + col, (row + 1) * grid + col)


@dataclass(frozen=True, eq=False)
class SyntheticCase:
    id: str
    image: np.ndarray
    labels: np.ndarray  # bool (14,)
    severities: np.ndarray  # int (14,), -1 where absent
    report: str

    @property
    def sentences(self):
        return split_report(self.report)

    def sentence_for(self, disease):
        if not self.labels[disease]:
            raise KeyError(disease)
        return finding_sentence(disease, int(self.severities[disease]))


def severity_textures(patch_size=16):
    r, c = np.indices((patch_size, patch_size))
    return (
        (r % 2 == 0).astype(float),
        (c % 2 == 0).astype(float),
        ((r + c) % 2 == 0).astype(float),
    )


def generate_corpus(n_cases, seed=0, image_size=224, patch_size=16, channels=3,
                    disease_prob=0.2, noise_level=0.1):
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    if image_size % patch_size:
        raise ValueError("image_size must be a multiple of patch_size")
    grid = image_size // patch_size
    rng = np.random.default_rng(seed)
    signatures = rng.uniform(0.0, 1.0, (N_DISEASES, patch_size, patch_size, channels))
    textures = severity_textures(patch_size)
    cases = []
    for i in range(n_cases):
        labels = rng.random(N_DISEASES) < disease_prob
        severities = np.where(labels, rng.integers(0, len(SEVERITIES), N_DISEASES), -1)
        image = rng.uniform(0.0, noise_level, (image_size, image_size, channels))
        for d in np.flatnonzero(labels):
            blob = 0.5 * signatures[d] + 0.5 * textures[severities[d]][:, :, None]
            for p in designated_patches(d, grid):
                r, c = divmod(p, grid)
                image[r * patch_size:(r + 1) * patch_size, c * patch_size:(c + 1) * patch_size] = blob
        sentences = [finding_sentence(d, severities[d]) for d in np.flatnonzero(labels)] or [NO_FINDINGS]
        cases.append(SyntheticCase(f"case{i:05d}", image, labels, severities.astype(np.int64),
                                   join_report(sentences)))
    return cases


# ------------------------------------------------------------------ corpus IO
#
# A corpus directory holds ids.txt, reports.txt (one report per line),
# labels.csv (comma-separated 0/1 rows) and one <id>.img raster per case.


def write_labels(path, rows):
    Path(path).write_text("".join(",".join(str(int(v)) for v in row) + "\n" for row in rows))


def read_labels(path):
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        values = [v.strip() for v in line.split(",")]
        if any(v not in ("0", "1") for v in values):
            raise ValueError(f"{path}:{n}: labels must be 0/1")
        rows.append([v == "1" for v in values])
    return np.array(rows, dtype=bool)


def read_lines(path):
    return Path(path).read_text(encoding="utf-8").splitlines()


def save_corpus(cases, directory):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ids.txt").write_text("".join(c.id + "\n" for c in cases))
    (out / "reports.txt").write_text("".join(c.report + "\n" for c in cases), encoding="utf-8")
    write_labels(out / "labels.csv", [c.labels for c in cases])
    for c in cases:
        write_raster(out / f"{c.id}.img", c.image)


def _severities_from_report(report, labels):
    sev = np.full(N_DISEASES, -1, dtype=np.int64)
    sentences = split_report(report)
    for d in np.flatnonzero(labels):
        for k in range(len(SEVERITIES)):
            if finding_sentence(d, k) in sentences:
                sev[d] = k
    return sev


def load_corpus(directory):
    src = Path(directory)
    ids = read_lines(src / "ids.txt")
    reports = read_lines(src / "reports.txt")
    labels = read_labels(src / "labels.csv")
    if not (len(ids) == len(reports) == len(labels)):
        raise ValueError(f"corpus files disagree on case count: {len(ids)}, {len(reports)}, {len(labels)}")
    return [
        SyntheticCase(cid, read_raster(src / f"{cid}.img"), lab, _severities_from_report(rep, lab), rep)
        for cid, rep, lab in zip(ids, reports, labels)
    ]
