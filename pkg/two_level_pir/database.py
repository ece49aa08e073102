"""
Transcript history
==================

Stores retrieval transcripts in a local SQLite database so runs can be
compared later with the `history` command.
"""

import json
import sqlite3
import uuid
from datetime import datetime
from typing import Any, Dict, Optional

import pandas as pd

from .config import DATABASE_NAME
from .net_harness import RetrievalTranscript


def get_db_connection(db_path: Optional[str] = None) -> sqlite3.Connection:
    """Create a standard SQLite database connection"""
    return sqlite3.connect(db_path or DATABASE_NAME)


def init_database(db_path: Optional[str] = None) -> None:
    """Initialize the database with required tables"""
    conn = get_db_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("""
        CREATE TABLE IF NOT EXISTS retrieval (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            retrieval_id TEXT UNIQUE NOT NULL,
            params TEXT NOT NULL,
            scheme TEXT NOT NULL,
            k_star INTEGER NOT NULL,
            seed INTEGER NOT NULL,
            transport TEXT NOT NULL,
            message_length INTEGER NOT NULL,
            modulus INTEGER NOT NULL,
            downloaded INTEGER NOT NULL,
            rate TEXT NOT NULL,
            rate_value REAL NOT NULL,
            cost_matches BOOLEAN NOT NULL,
            recovered BOOLEAN NOT NULL,
            recovered_sha256 TEXT NOT NULL,
            wall_seconds REAL,
            servers TEXT,
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
        )
    """)

    cursor.execute("CREATE INDEX IF NOT EXISTS idx_retrieval_params ON retrieval (params, scheme)")

    conn.commit()
    conn.close()


def record_transcript(db_path: Optional[str], transcript: RetrievalTranscript) -> str:
    """Store one transcript and return its retrieval id"""
    retrieval_id = str(uuid.uuid4())
    init_database(db_path)

    conn = get_db_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        INSERT INTO retrieval (retrieval_id, params, scheme, k_star, seed, transport, message_length,
                               modulus, downloaded, rate, rate_value, cost_matches, recovered,
                               recovered_sha256, wall_seconds, servers, created_at)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
    """, (
        retrieval_id,
        transcript.params.label,
        transcript.scheme,
        transcript.k_star,
        transcript.seed,
        transcript.transport,
        transcript.L,
        transcript.q,
        transcript.downloaded_symbols,
        f"{transcript.rate.numerator}/{transcript.rate.denominator}",
        float(transcript.rate),
        transcript.cost_matches,
        transcript.recovered,
        transcript.message_digest,
        transcript.wall_seconds,
        json.dumps([s.to_dict() for s in transcript.servers]),
        datetime.now().isoformat(sep=" ", timespec="seconds"),
    ))
    conn.commit()
    conn.close()

    return retrieval_id


def get_recent_retrievals(db_path: Optional[str] = None, limit: int = 10) -> pd.DataFrame:
    """Get the most recent retrievals, newest first"""
    init_database(db_path)
    conn = get_db_connection(db_path)
    query = """
        SELECT retrieval_id, params, scheme, k_star, seed, transport, message_length, downloaded,
               rate, recovered, created_at
        FROM retrieval
        ORDER BY id DESC
        LIMIT ?
    """
    df = pd.read_sql_query(query, conn, params=(limit,))
    conn.close()
    return df


def get_retrieval_stats(db_path: Optional[str] = None) -> Dict[str, Any]:
    """Counts, success rate and mean rate per scheme"""
    init_database(db_path)
    conn = get_db_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("SELECT COUNT(*) FROM retrieval")
    total = cursor.fetchone()[0]

    cursor.execute("SELECT COUNT(CASE WHEN recovered = 1 AND cost_matches = 1 THEN 1 END) FROM retrieval")
    verified = cursor.fetchone()[0]

    per_scheme = pd.read_sql_query("""
        SELECT scheme, COUNT(*) AS retrievals, AVG(rate_value) AS mean_rate
        FROM retrieval
        GROUP BY scheme
        ORDER BY scheme
    """, conn)
    conn.close()

    return {
        'total_retrievals': total,
        'verified_retrievals': verified,
        'success_rate': (verified / total * 100) if total > 0 else 0,
        'per_scheme': per_scheme.to_dict(orient='records'),
    }
