"""logitsd entry point: load a model, serve the wire protocol."""
from __future__ import annotations

import argparse

import uvicorn

from logitsd.app import ModelHost, create_app
from logitsd.models import load_model


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="logitsd",
        description="Serve a language model's full next-token logits over HTTP.",
    )
    parser.add_argument(
        "--model", default="tiny",
        help="tiny[:seed], tiny-seq2seq[:seed], hf:<model_id> or hf-seq2seq:<model_id>",
    )
    parser.add_argument("--device", default="cpu", help="device hint for hf models")
    parser.add_argument("--max-context", type=int, default=None,
                        help="override the declared maximum context length")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8900)
    args = parser.parse_args(argv)

    host = ModelHost(load_model(args.model, device=args.device, max_context=args.max_context))
    app = create_app(host)
    print(f"logitsd serving {host.adapter.model_id} at http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
