"""
Command-line options shared by several commands.

Every option defaults to None so that only flags given on the command line override the
values of the JSON config file.
"""

import argparse
from typing import Any

from momentsampler.models import BackendKind, PromptMode, Strategy
from momentsampler.utils import parse_number_list


def _without_unset(values: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        required=False,
        default=None,
        type=str,
        help="JSON config file. Command-line options override its values.",
    )
    parser.add_argument(
        "--out",
        required=False,
        default=None,
        type=str,
        help="Output directory (created if missing). Defaults to 'out'.",
    )


def add_sampling_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy",
        required=False,
        default=None,
        choices=[strategy.value for strategy in Strategy],
        help="Frame selection strategy. Defaults to 'moment'.",
    )
    parser.add_argument(
        "--n-frames", required=False, default=None, type=int, help="Frames to select (default: 8)."
    )
    parser.add_argument(
        "--sigma-s",
        required=False,
        default=None,
        type=float,
        help="Relevance smoothing width in seconds (default: 2.0).",
    )
    parser.add_argument(
        "--gamma",
        required=False,
        default=None,
        type=float,
        help="Quality exponent (default: 0.5).",
    )
    parser.add_argument(
        "--k-clusters",
        required=False,
        default=None,
        type=int,
        help="Number of frame clusters (default: 2 * n-frames, at most the frame count).",
    )
    parser.add_argument(
        "--weights",
        required=False,
        default=None,
        type=parse_number_list,
        metavar="R,Q,U",
        help="Relevance, quality and uniformity weights (default: 1,0.3,0.3).",
    )
    parser.add_argument(
        "--seed", required=False, default=None, type=int, help="Clustering seed (default: 0)."
    )
    parser.add_argument(
        "--no-enforce-clusters",
        action="store_true",
        help="Allow several frames from the same cluster.",
    )


def sampling_overrides(args: argparse.Namespace) -> dict[str, Any]:
    sampling = {
        "n_frames": args.n_frames,
        "sigma_s": args.sigma_s,
        "gamma": args.gamma,
        "k_clusters": args.k_clusters,
        "seed": args.seed,
        "enforce_clusters": False if args.no_enforce_clusters else None,
    }
    if args.weights is not None:
        if len(args.weights) != 3:
            raise ValueError("--weights expects exactly three values: R,Q,U")
        sampling["w_relevance"], sampling["w_quality"], sampling["w_uniformity"] = args.weights
    return _without_unset(sampling)


def add_backend_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        required=False,
        default=None,
        choices=[kind.value for kind in BackendKind],
        help="Answer source (default: echo).",
    )
    parser.add_argument(
        "--mode",
        required=False,
        default=None,
        choices=[mode.value for mode in PromptMode],
        help="Prompt mode (default: with_video).",
    )
    parser.add_argument(
        "--replay", required=False, default=None, type=str, help="Replay file (replay backend)."
    )
    parser.add_argument(
        "--endpoint-url",
        required=False,
        default=None,
        type=str,
        help="Chat completions URL (http_chat backend).",
    )
    parser.add_argument(
        "--model-name", required=False, default=None, type=str, help="Model name (http_chat backend)."
    )
    parser.add_argument(
        "--api-key-env-var",
        required=False,
        default=None,
        type=str,
        help="Environment variable (or .env entry) holding the API key.",
    )
    parser.add_argument(
        "--max-concurrency",
        required=False,
        default=None,
        type=int,
        help="Maximum requests in flight (default: 4).",
    )
    parser.add_argument(
        "--max-retries",
        required=False,
        default=None,
        type=int,
        help="Retries on transport errors, 429 and 5xx responses (default: 3).",
    )
    parser.add_argument(
        "--debug-http", action="store_true", help="Log request and response bodies verbatim."
    )


def backend_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return _without_unset(
        {
            "kind": args.backend,
            "replay_path": args.replay,
            "endpoint_url": args.endpoint_url,
            "model_name": args.model_name,
            "api_key_env_var": args.api_key_env_var,
            "max_concurrency": args.max_concurrency,
            "max_retries": args.max_retries,
            "debug_http": True if args.debug_http else None,
        }
    )


def run_overrides(args: argparse.Namespace, **values: Any) -> dict[str, Any]:
    """Top-level overrides; nested sections are dropped when empty."""
    overrides = _without_unset({"out": args.out, **values})
    return {key: value for key, value in overrides.items() if value != {}}
