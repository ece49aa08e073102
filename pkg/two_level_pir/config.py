# --- Application Configuration ---
APP_VERSION = "1.0.0"
APP_TITLE = "Two-Level PIR Toolkit"

# --- Randomness ---
DEFAULT_SEED = 42
SEED_ENV_VAR = "PIR_SEED"

# --- Field Configuration ---
MIN_MODULUS = 3
MAX_MODULUS = 2 ** 61

# --- Wire Format ---
WIRE_MAGIC = b"PIR2LVL\0"
WIRE_VERSION = 1
SYMBOL_BYTES = 8

# --- Transport Configuration ---
LOOPBACK_HOST = "127.0.0.1"
DEFAULT_PORT_BASE = 0  # 0 lets the OS pick free ports
SOCKET_TIMEOUT = 30.0
TRANSPORTS = ("inproc", "tcp")

# --- Output Configuration ---
DECIMAL_DIGITS = 12
LOG_FILE = "pir_harness.log"

# --- Database Configuration ---
DATABASE_NAME = "pir_transcripts.db"

# --- Sweep Presets ---
SWEEP_PRESETS = {
    "k1-gap": {
        "title": "Gap to the upper bound as K1 grows",
        "vary": "K1",
        "values": list(range(1, 9)),
        "base": {"N": 10, "T1": 6, "T2": 2},
        "k2_offset": 4
    },
    "t1-crossover": {
        "title": "NS versus NB as T1 approaches N",
        "vary": "T1",
        "values": list(range(2, 11)),
        "base": {"N": 10, "K1": 2, "T2": 2, "K2": 6},
        "k2_offset": None
    }
}
