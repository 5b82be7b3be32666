from dotenv import load_dotenv
import os

load_dotenv()

ROOT_DIR = os.path.realpath(os.path.join(os.path.dirname(__file__), ".."))
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
LOGS_DIR = os.environ.get("HJCL_LOGS_DIR", os.path.join(ROOT_DIR, "logs"))
DATA_DIR = os.environ.get("HJCL_DATA_DIR", os.path.join(ROOT_DIR, "data"))

HJCL_SEED = int(os.environ.get("HJCL_SEED", "42"))
