"""
Write the golden permutation vectors used by the access-stream tests.

Each line is ``seed epoch num_samples: i_0 i_1 ...``. Regenerate only when the
shuffle is changed on purpose; the test suite compares against the frozen file.
"""
from pathlib import Path

import typer

from termcolor import colored

from clairvoyant_io.core.access import epoch_permutation

app = typer.Typer()

CASES = [
    (0, 0, 10),
    (0, 1, 10),
    (1, 0, 10),
    (42, 0, 8),
    (42, 0, 16),
    (42, 3, 16),
    (2**63 + 5, 2, 12),
    (7, 0, 1),
]

DEFAULT_PATH = Path(__file__).parent.parent / "tests" / "test_data" / "golden_permutations.txt"


@app.command()
def main(path: str = typer.Argument(str(DEFAULT_PATH), help="Output file.")):
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for seed, epoch, num_samples in CASES:
        permutation = epoch_permutation(seed, epoch, num_samples)
        lines.append(f"{seed} {epoch} {num_samples}: " + " ".join(map(str, permutation.tolist())))
    out.write_text("\n".join(lines) + "\n")
    print(colored("Wrote", "green"), len(lines), "permutations to", out)


if __name__ == "__main__":
    app()
