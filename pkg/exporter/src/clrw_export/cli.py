"""Command line: clrw-export export --checkpoint ckpt.pt --manifest m.json --out dir"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export_checkpoint
from .manifest import ExportManifest


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="clrw-export")
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="convert a checkpoint to CLRW + arch JSON")
    exp.add_argument("--checkpoint", help="checkpoint file (overrides the manifest entry)")
    exp.add_argument("--manifest", required=True, help="manifest JSON file")
    exp.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    try:
        manifest = ExportManifest.load(args.manifest)
        checkpoint = args.checkpoint or manifest.checkpoint
        if not checkpoint:
            raise ExportError("no checkpoint given on the command line or in the manifest")
        clrw_path, arch_path = export_checkpoint(checkpoint, manifest, args.out)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {clrw_path} and {arch_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
