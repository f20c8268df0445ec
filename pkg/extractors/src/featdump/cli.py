"""extract_features: dump one model layer over a stimulus directory."""

import argparse
import sys

from .extract import extract
from .models import FAMILIES, ExtractorSpec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract_features",
        description="Write a model layer's representations of a WAV directory "
                    "into a PMA feature archive.",
    )
    parser.add_argument("--family", required=True, choices=list(FAMILIES))
    parser.add_argument("--checkpoint", required=True,
                        help="transformers directory/hub id, or .pt checkpoint "
                             "for cpc and asr-phone")
    parser.add_argument("--layer", required=True, type=int)
    parser.add_argument("--audio-dir", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--expect-frame-period", type=float, default=None,
                        help="fail unless the family produces this frame period")
    args = parser.parse_args(argv)

    spec = ExtractorSpec(
        model_family=args.family,
        checkpoint=args.checkpoint,
        layer=args.layer,
        expected_frame_period=args.expect_frame_period,
    )
    try:
        result = extract(spec, args.audio_dir, args.out)
    except (ValueError, RuntimeError, FileNotFoundError, OSError) as exc:
        print(f"extract_features: error: {exc}", file=sys.stderr)
        return 1

    print(f"wrote {len(result.extracted)} entries "
          f"(dims {result.dims}, frame period {result.frame_period}s) to {args.out}")
    for name, reason in result.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    return 1 if result.skipped else 0


if __name__ == "__main__":
    sys.exit(main())
