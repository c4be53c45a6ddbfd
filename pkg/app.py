"""
Command-line launcher for the rough-surface reconstruction toolkit.
Run with: python app.py <command> [options]   (see --help)
"""
import sys

from dotenv import load_dotenv

# Load environment variables (SURFRECON_DATABASE_URL, SURFRECON_OUT_DIR, etc.)
load_dotenv()

from app.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
