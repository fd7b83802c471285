import os

# Base project directory
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# ---------- Configuration ----------
CONFIG_DIR = os.path.join(BASE_DIR, "config")
BASE_PROPERTIES = os.path.join(CONFIG_DIR, "msfa.properties")
# Local overlay (gitignored), overrides base if present
LOCAL_PROPERTIES = os.path.join(CONFIG_DIR, "msfa.local.properties")
# Environment overrides: MSFA_FORGE_<KEY>, dots become underscores
ENV_PREFIX = "MSFA_FORGE_"

# ---------- Reports root ----------
REPORTS_DIR = os.path.join(BASE_DIR, "reports")
TEST_RESULTS_DIR = os.path.join(REPORTS_DIR, "test-results")
LOGS_DIR = os.path.join(REPORTS_DIR, "logs")


def ensure_report_dirs() -> None:
    """Create the reports tree on demand (CLI runs and test sessions)."""
    for path in [REPORTS_DIR, TEST_RESULTS_DIR, LOGS_DIR]:
        os.makedirs(path, exist_ok=True)
