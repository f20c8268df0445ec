"""Regenerate the committed toy fixture and its golden report.

Run from the repository root:

    python3 tests/make_fixture.py

The fixture is deterministic; regeneration must be byte-identical unless the
pipeline itself changed. Every number in the golden is validated by
tests/test_cli.py against independent oracles before the byte comparison.
"""

import csv
import io
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

FIXTURE = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

SUBSETS = ["zerospeech", "worldvowels"]
CONTRASTS = [
    ("fr", "a", "i"), ("fr", "e", "o"), ("en", "b", "p"), ("en", "d", "t"),
]


def build_stimuli(rng):
    ids = []
    for t in range(12):
        ids.extend([f"tgt{t}", f"oth{t}", f"x{t}"])
    return {sid: rng.normal(size=(3, 4)).astype(np.float32) for sid in sorted(set(ids))}


def write_archives(stimuli, rng):
    from perceptimetric import FeatureMatrix, write_archive

    order = sorted(stimuli)
    fr_entries = [FeatureMatrix(sid, stimuli[sid], 0.01) for sid in order]
    write_archive(fr_entries, FIXTURE / "model_fr.pma")
    # the English model sees a perturbed version of the same space
    en_entries = [
        FeatureMatrix(sid, stimuli[sid] + rng.normal(scale=0.6, size=stimuli[sid].shape)
                      .astype(np.float32), 0.01)
        for sid in order
    ]
    write_archive(en_entries, FIXTURE / "model_en.pma")


def write_items():
    rows = []
    for t in range(12):
        lang, p1, p2 = CONTRASTS[t % 4]
        subset = SUBSETS[t % 2]
        rows.append([f"t{t}", f"tgt{t}", f"oth{t}", f"x{t}", p1, p2, lang, subset,
                     "true" if t % 3 else "false"])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["triplet_id", "target_id", "other_id", "x_id", "phone_target",
                     "phone_other", "language", "subset", "target_is_A"])
    writer.writerows(rows)
    (FIXTURE / "items.csv").write_text(buf.getvalue())


def write_responses(rng):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["participant_id", "triplet_id", "target_is_A", "trial_index",
                     "correct", "gradient", "subset", "language_group"])
    for group, prefix in (("french", "fp"), ("english", "ep")):
        for p in range(3):
            pid = f"{prefix}{p}"
            trial = 1
            for t in range(12):
                lang, p1, p2 = CONTRASTS[t % 4]
                subset = SUBSETS[t % 2]
                for order in ("true", "false"):
                    # native-language trials come out a bit easier
                    p_correct = 0.8 if lang == ("fr" if group == "french" else "en") else 0.6
                    correct = rng.uniform() < p_correct
                    gradient = ""
                    if rng.uniform() < 0.25:
                        gradient = format(float(np.round(rng.uniform(), 3)), ".3f")
                    writer.writerow([pid, f"t{t}", order, trial,
                                     "true" if correct else "false", gradient,
                                     subset, group])
                    trial += 1
    (FIXTURE / "responses.csv").write_text(buf.getvalue())


def run_pipeline(workdir: Path):
    """Drive the CLI over the fixture; returns the report directory."""
    def cli(*argv):
        result = subprocess.run(
            [sys.executable, "-m", "perceptimetric.cli", *argv],
            capture_output=True, text=True, cwd=workdir,
        )
        if result.returncode != 0:
            raise RuntimeError(f"{argv}: {result.stderr}")

    fx = FIXTURE.resolve()
    cli("delta", "--features", str(fx / "model_fr.pma"), "--items",
        str(fx / "items.csv"), "--out", "deltas_fr.csv")
    cli("delta", "--features", str(fx / "model_en.pma"), "--items",
        str(fx / "items.csv"), "--out", "deltas_en.csv")
    cli("abx", "--deltas", "deltas_fr.csv", "--items", str(fx / "items.csv"),
        "--group-by", "subset-language", "--label", "toy_fr", "--out", "scores_fr.csv")
    cli("probit", "--deltas", "deltas_fr.csv", "--responses",
        str(fx / "responses.csv"), "--lambda", "0.01", "--label", "toy_fr",
        "--out", "ll_fr.json")
    cli("spearman", "--deltas", "deltas_fr.csv", "--responses",
        str(fx / "responses.csv"), "--items", str(fx / "items.csv"),
        "--level", "contrast", "--label", "toy_fr", "--out", "sp_contrast_fr.json")
    cli("spearman", "--deltas", "deltas_fr.csv", "--responses",
        str(fx / "responses.csv"), "--items", str(fx / "items.csv"),
        "--level", "stimulus", "--label", "toy_fr", "--out", "sp_stimulus_fr.json")
    cli("native-effect", "--deltas-fr", "deltas_fr.csv", "--deltas-en",
        "deltas_en.csv", "--responses", str(fx / "responses.csv"),
        "--items", str(fx / "items.csv"), "--level", "contrast",
        "--label", "toy", "--out", "native.json")
    cli("bootstrap", "--metric", "spearman", "--deltas", "deltas_fr.csv",
        "--responses", str(fx / "responses.csv"), "--items", str(fx / "items.csv"),
        "--level", "contrast", "--n", "50", "--seed", "7", "--label", "toy_fr",
        "--out", "boot_sp.json")
    cli("pairwise", "--metric", "spearman", "--deltas-a", "deltas_fr.csv",
        "--deltas-b", "deltas_en.csv", "--responses", str(fx / "responses.csv"),
        "--items", str(fx / "items.csv"), "--level", "contrast",
        "--n", "50", "--seed", "7", "--label-a", "toy_fr", "--label-b", "toy_en",
        "--out", "pairwise_sp.json")
    cli("report", "--metrics", "ll_fr.json", "sp_stimulus_fr.json", "native.json",
        "boot_sp.json", "--pairwise", "pairwise_sp.json", "--abx", "scores_fr.csv",
        "--charts", "--out-dir", "report")
    return workdir / "report"


def main():
    FIXTURE.mkdir(exist_ok=True)
    GOLDEN.mkdir(exist_ok=True)
    rng = np.random.default_rng(20270501)
    stimuli = build_stimuli(rng)
    write_archives(stimuli, rng)
    write_items()
    write_responses(rng)

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        report_dir = run_pipeline(Path(tmp))
        for name in sorted(p.name for p in report_dir.iterdir()):
            if name.endswith(".manifest.json"):
                continue
            shutil.copy(report_dir / name, GOLDEN / name)
            print(f"golden: {name}")


if __name__ == "__main__":
    main()
