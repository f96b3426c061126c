import argparse
import os
import sys
from dotenv import load_dotenv

# Add parent directory to path to import dsiscan modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dsiscan import config
from dsiscan.acceptance import write_demo_universe

load_dotenv()


def create_universe(out: str, count: int, seed: int):
    """Write sizes.csv, holdings.csv and returns.csv for a synthetic universe"""
    os.makedirs(out, exist_ok=True)
    try:
        paths = write_demo_universe(out, seed, count)
    except Exception as e:
        print(f"❌ Failed to generate universe: {e}")
        return 1

    for path in paths:
        print(f"✅ Wrote {path}")
    print(f"\n📊 {count} entities with log-periodic sizes (omega = 4.6)")
    print(f"🚀 Run: python main.py analyze --sizes {paths[0]} --holdings {paths[1]} --returns {paths[2]}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Generate a synthetic universe for demonstrations")
    parser.add_argument("--out", default="synthetic_universe")
    parser.add_argument("--count", type=int, default=479)
    parser.add_argument("--seed", type=int, default=config.DSI_SEED)
    args = parser.parse_args()
    sys.exit(create_universe(args.out, args.count, args.seed))
