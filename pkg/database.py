# database.py - SQLite run ledger
import sqlite3
from sqlite3 import Row
import os
import json
import uuid
from datetime import datetime
import pandas as pd
import logging

from serialization import json_default

logger = logging.getLogger(__name__)


class Database:
    def __init__(self, db_path="opstable_runs.db"):
        self.db_path = db_path
        self.init_db()

    def connect(self):
        try:
            conn = sqlite3.connect(self.db_path)
            conn.row_factory = Row
            return conn
        except sqlite3.Error as e:
            logger.error(f"Ledger connection failed: {str(e)}")
            raise OSError(f"Ledger connection failed: {str(e)}")

    def init_db(self):
        folder = os.path.dirname(os.path.abspath(self.db_path))
        os.makedirs(folder, exist_ok=True)
        conn = self.connect()
        c = conn.cursor()
        try:
            c.execute("""
            CREATE TABLE IF NOT EXISTS Runs (
                run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                reference_number TEXT UNIQUE,
                command TEXT,
                config_path TEXT,
                seed TEXT,
                exit_code INTEGER,
                report TEXT,
                started_at DATETIME DEFAULT CURRENT_TIMESTAMP
            );
            """)

            # one row per named verdict in the report
            c.execute("""
            CREATE TABLE IF NOT EXISTS Verdicts (
                verdict_id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER,
                name TEXT,
                passed INTEGER CHECK(passed IN (0, 1)),
                margin REAL,
                FOREIGN KEY(run_id) REFERENCES Runs(run_id)
            );
            """)
            conn.commit()
        except sqlite3.Error as e:
            logger.error(f"Failed to initialise the ledger: {str(e)}")
            raise OSError(f"Failed to initialise the ledger: {str(e)}")
        finally:
            conn.close()

    def record_run(self, command, config_path, seed, exit_code, report):
        """Store a run and its verdicts; returns the run id."""
        conn = self.connect()
        c = conn.cursor()

        # e.g. RUN202610170A3F
        reference_number = f"RUN{datetime.now().strftime('%Y%m%d')}{str(uuid.uuid4())[:4].upper()}"
        verdicts = (report or {}).get("verdicts", {})
        try:
            c.execute("""
                INSERT INTO Runs (reference_number, command, config_path, seed, exit_code, report)
                VALUES (?,?,?,?,?,?)
            """, (
                reference_number,
                command,
                None if config_path is None else str(config_path),
                None if seed is None else str(seed),
                int(exit_code),
                json.dumps(report or {}, default=json_default),
            ))
            run_id = c.lastrowid
            c.executemany("""
                INSERT INTO Verdicts (run_id, name, passed, margin) VALUES (?,?,?,?)
            """, [(run_id, name, int(bool(v["passed"])), float(v.get("margin", 0.0)))
                  for name, v in verdicts.items()])
            conn.commit()
            logger.info(f"recorded {command} run {reference_number} with {len(verdicts)} verdicts")
            return run_id
        except sqlite3.Error as e:
            logger.error(f"Failed to record run: {str(e)}")
            raise OSError(f"Failed to record run: {str(e)}")
        finally:
            conn.close()

    def get_runs(self, command=None):
        """All runs, or those of one command, newest first."""
        conn = self.connect()
        try:
            if command:
                return pd.read_sql_query(
                    "SELECT run_id, reference_number, command, config_path, seed, exit_code, started_at "
                    "FROM Runs WHERE command = ? ORDER BY run_id DESC", conn, params=(command,))
            return pd.read_sql_query(
                "SELECT run_id, reference_number, command, config_path, seed, exit_code, started_at "
                "FROM Runs ORDER BY run_id DESC", conn)
        finally:
            conn.close()

    def get_run(self, run_id):
        conn = self.connect()
        c = conn.cursor()
        c.execute("SELECT * FROM Runs WHERE run_id = ?", (run_id,))
        row = c.fetchone()
        conn.close()
        if not row:
            return None
        run = dict(row)
        run["report"] = json.loads(run["report"])
        return run

    def get_verdicts(self, run_id):
        conn = self.connect()
        try:
            df = pd.read_sql_query("SELECT name, passed, margin FROM Verdicts WHERE run_id = ? ORDER BY verdict_id",
                                   conn, params=(run_id,))
        finally:
            conn.close()
        df["passed"] = df["passed"].astype(bool)
        return df

    def get_run_statistics(self):
        """Run counts per command and exit code, and failure counts per verdict name."""
        conn = self.connect()
        c = conn.cursor()

        c.execute("SELECT command, COUNT(*) FROM Runs GROUP BY command")
        command_counts = dict(c.fetchall())

        c.execute("SELECT exit_code, COUNT(*) FROM Runs GROUP BY exit_code")
        exit_counts = dict(c.fetchall())

        c.execute("""
            SELECT name, COUNT(*) FROM Verdicts
            WHERE passed = 0
            GROUP BY name
        """)
        failure_counts = dict(c.fetchall())

        conn.close()

        return {
            'command_counts': command_counts,
            'exit_counts': exit_counts,
            'failure_counts': failure_counts
        }
