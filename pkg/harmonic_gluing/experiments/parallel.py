from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from tqdm.auto import tqdm

Cell = TypeVar("Cell")
Output = TypeVar("Output")


def run_cells(
    function: Callable[[Cell], Output],
    cells: Sequence[Cell],
    jobs: int = 1,
    desc: str = "Sweep cells",
    quiet: bool = True,
) -> List[Output]:
    """Evaluate `function` on every sweep cell, in a process pool when `jobs > 1`.

    Results come back in the order of `cells` whatever the completion order, so sweep
    tables do not depend on `jobs`. `function` and the cells must be picklable.

    Args:
        function (Callable): Module-level function of one cell.
        cells (Sequence): The cells.
        jobs (int): Number of worker processes.
        desc (str): Progress bar label.
        quiet (bool): Hide the progress bar.

    Returns:
        (list): One output per cell.
    """
    assert jobs >= 1, f"jobs must be at least 1, got {jobs}"
    if jobs == 1 or len(cells) <= 1:
        return [function(cell) for cell in tqdm(cells, desc=desc, leave=False, disable=quiet)]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
        futures = [pool.submit(function, cell) for cell in cells]
        return [future.result() for future in tqdm(futures, desc=desc, leave=False, disable=quiet)]
