import json
import sqlite3
from typing import Any, Dict, Iterable, List, Optional

from .simulate import SimOutcome


class ResultStore:
    """
    SQLite file holding simulation outcomes and task reports of experiments.

    Each experiment is identified by a free-form name (the CLI uses the
    config hash). Trials keep their stop reason, final generation, largest
    population and total visit counts per target set; reports keep the JSON
    produced by each task.

    Attributes:
        database_file (str): Path to the SQLite database file.

    Example:
        >>> store = ResultStore("results.db")
        >>> store.record_outcomes("gw", estimate.outcomes)
        >>> store.stop_reason_counts("gw")
        {'extinct': 331, 'population-cap': 669}
    """

    def __init__(self, database_file: str) -> None:
        """
        Args:
            database_file (str): Path to the database file. Created on first use.
        """
        self.database_file = database_file
        self._conn: Optional[sqlite3.Connection] = None
        self._is_open = False

    def _open(self) -> None:
        """
        Opens or creates the database and ensures the schema exists. Unrelated
        tables in the file are left alone.
        """
        if self._is_open:
            return

        self._conn = sqlite3.connect(self.database_file)
        self._conn.row_factory = sqlite3.Row

        cursor = self._conn.cursor()
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS trials (
                experiment TEXT NOT NULL,
                trial INTEGER NOT NULL,
                stop_reason TEXT NOT NULL,
                final_gen INTEGER NOT NULL,
                max_pop INTEGER NOT NULL,
                visits TEXT NOT NULL DEFAULT '{}',
                PRIMARY KEY (experiment, trial)
            )
        """)
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS reports (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                experiment TEXT NOT NULL,
                task TEXT NOT NULL,
                json TEXT NOT NULL
            )
        """)
        self._conn.commit()
        self._is_open = True

    def _close(self) -> None:
        """Close the database connection."""
        if self._conn:
            self._conn.close()
            self._conn = None
            self._is_open = False

    def close(self) -> None:
        self._close()

    def record_outcomes(self, experiment: str, outcomes: Iterable[SimOutcome], first_trial: int = 0) -> int:
        """
        Store trial outcomes, numbered from ``first_trial``. Re-recording a
        trial replaces it.

        Returns:
            int: Number of rows written.
        """
        self._open()
        assert self._conn is not None  # _open() ensures connection exists

        rows = [
            (experiment, first_trial + i, o.stop_reason, o.final_generation, o.max_population,
             json.dumps(o.total_visits, sort_keys=True))
            for i, o in enumerate(outcomes)
        ]
        self._conn.executemany("""
            INSERT OR REPLACE INTO trials (experiment, trial, stop_reason, final_gen, max_pop, visits)
            VALUES (?, ?, ?, ?, ?, ?)
        """, rows)
        self._conn.commit()
        return len(rows)

    def outcomes(self, experiment: str) -> List[Dict[str, Any]]:
        """Stored trials of ``experiment`` ordered by trial number."""
        self._open()
        assert self._conn is not None  # _open() ensures connection exists

        cursor = self._conn.cursor()
        cursor.execute("""
            SELECT trial, stop_reason, final_gen, max_pop, visits
            FROM trials
            WHERE experiment = ?
            ORDER BY trial ASC
        """, (experiment,))
        return [
            {
                "trial": row["trial"],
                "stop_reason": row["stop_reason"],
                "final_gen": row["final_gen"],
                "max_pop": row["max_pop"],
                "visits": json.loads(row["visits"]),
            }
            for row in cursor.fetchall()
        ]

    def stop_reason_counts(self, experiment: str) -> Dict[str, int]:
        """How many trials of ``experiment`` ended for each stop reason."""
        self._open()
        assert self._conn is not None  # _open() ensures connection exists

        cursor = self._conn.cursor()
        cursor.execute("""
            SELECT stop_reason, COUNT(*) AS n
            FROM trials
            WHERE experiment = ?
            GROUP BY stop_reason
            ORDER BY stop_reason ASC
        """, (experiment,))
        return {row["stop_reason"]: row["n"] for row in cursor.fetchall()}

    def record_report(self, experiment: str, task: str, report: Dict[str, Any]) -> None:
        """Append the JSON report of one task."""
        self._open()
        assert self._conn is not None  # _open() ensures connection exists

        self._conn.execute("""
            INSERT INTO reports (experiment, task, json) VALUES (?, ?, ?)
        """, (experiment, task, json.dumps(report, sort_keys=True)))
        self._conn.commit()

    def reports(self, experiment: str, task: Optional[str] = None) -> List[Dict[str, Any]]:
        """Reports of ``experiment`` in insertion order, optionally for one task."""
        self._open()
        assert self._conn is not None  # _open() ensures connection exists

        cursor = self._conn.cursor()
        if task is None:
            cursor.execute("""
                SELECT task, json FROM reports WHERE experiment = ? ORDER BY id ASC
            """, (experiment,))
        else:
            cursor.execute("""
                SELECT task, json FROM reports WHERE experiment = ? AND task = ? ORDER BY id ASC
            """, (experiment, task))
        return [{"task": row["task"], "report": json.loads(row["json"])} for row in cursor.fetchall()]

    def __del__(self) -> None:
        """Cleanup: close database connection when object is destroyed."""
        self._close()
