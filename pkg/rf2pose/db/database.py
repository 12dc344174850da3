"""
Regularization target store backed by SQLite.

One row per training sample holds its K per-part difference signals as a
little-endian float32 blob. A metadata table records the configuration
hash, generator hash and seed policy the targets were built with.
"""
import os
import sqlite3
from sqlite3 import Error
from typing import Dict, List, Optional

import numpy as np

from ..core.errors import DependencyError, ValidationError
from ..utils.helpers import log_debug, log_error, log_warning


class TargetStore:
    """Store of per-sample counterfactual difference stacks."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        self.conn = None

    def connect(self):
        """Open the database, creating its directory and tables if needed."""
        try:
            if self.db_path != ":memory:":
                directory = os.path.dirname(self.db_path)
                if directory:
                    os.makedirs(directory, exist_ok=True)
                if not os.path.exists(self.db_path):
                    log_debug(f"Target store does not exist, will be created: {self.db_path}")
            self.conn = sqlite3.connect(self.db_path)
            self.create_tables()
            return self.conn
        except Error as e:
            log_error(f"Error opening target store {self.db_path}: {e}")
            raise DependencyError(f"Cannot open target store {self.db_path}: {e}") from e

    def close(self):
        if self.conn:
            self.conn.close()
            self.conn = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def _cursor(self):
        if not self.conn:
            self.connect()
        return self.conn.cursor()

    def create_tables(self):
        cursor = self.conn.cursor()
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS metadata (
                key TEXT PRIMARY KEY,
                value TEXT NOT NULL
            );
        ''')
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS targets (
                sample_id TEXT PRIMARY KEY,
                parts INTEGER NOT NULL,
                channels INTEGER NOT NULL,
                length INTEGER NOT NULL,
                data BLOB NOT NULL
            );
        ''')
        self.conn.commit()

    def reset(self):
        """Drop all targets and metadata."""
        cursor = self._cursor()
        cursor.execute("DELETE FROM targets")
        cursor.execute("DELETE FROM metadata")
        self.conn.commit()

    def set_metadata(self, values: Dict[str, str], commit: bool = True):
        cursor = self._cursor()
        cursor.executemany("INSERT OR REPLACE INTO metadata (key, value) VALUES (?, ?)",
                           [(k, str(v)) for k, v in values.items()])
        if commit:
            self.conn.commit()

    def get_metadata(self) -> Dict[str, str]:
        cursor = self._cursor()
        cursor.execute("SELECT key, value FROM metadata")
        return {row[0]: row[1] for row in cursor.fetchall()}

    def put_target(self, sample_id: str, diffs: np.ndarray):
        """Insert or replace the (K, C, L) difference stack of one sample."""
        diffs = np.asarray(diffs)
        if diffs.ndim != 3:
            raise ValidationError(f"Target for {sample_id} must be (K, C, L), got shape {diffs.shape}")
        blob = np.ascontiguousarray(diffs, dtype="<f4").tobytes()
        self._cursor().execute(
            "INSERT OR REPLACE INTO targets (sample_id, parts, channels, length, data) VALUES (?, ?, ?, ?, ?)",
            (sample_id, *diffs.shape, blob))

    def commit(self):
        if self.conn:
            self.conn.commit()

    def get_target(self, sample_id: str) -> Optional[np.ndarray]:
        cursor = self._cursor()
        cursor.execute("SELECT parts, channels, length, data FROM targets WHERE sample_id = ?", (sample_id,))
        row = cursor.fetchone()
        if row is None:
            return None
        parts, channels, length, data = row
        return np.frombuffer(data, dtype="<f4").reshape(parts, channels, length).astype(np.float32)

    def require_target(self, sample_id: str) -> np.ndarray:
        target = self.get_target(sample_id)
        if target is None:
            raise DependencyError(f"No regularization target for sample {sample_id} in {self.db_path}")
        return target

    def sample_ids(self) -> List[str]:
        cursor = self._cursor()
        cursor.execute("SELECT sample_id FROM targets ORDER BY sample_id")
        return [row[0] for row in cursor.fetchall()]

    def count(self) -> int:
        cursor = self._cursor()
        cursor.execute("SELECT COUNT(*) FROM targets")
        return cursor.fetchone()[0]

    def check_hash(self, expected: str, force: bool = False):
        """Raise DependencyError when the store was built under another configuration."""
        stored = self.get_metadata().get("config_hash")
        if stored == expected:
            return
        message = f"Target store {self.db_path} was built with config hash {stored}, expected {expected}"
        if force:
            log_warning(f"{message}; continuing because force is set")
            return
        raise DependencyError(message)
