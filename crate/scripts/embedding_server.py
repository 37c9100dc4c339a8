#!/usr/bin/env python3
"""Minimal local embeddings endpoint for offline runs.

Serves any sentence-transformers model over the de-facto embeddings wire
protocol the engine speaks:

    POST /embeddings  {"model": ..., "input": ["text", ...]}
    ->  {"data": [{"index": 0, "embedding": [...]}, ...]}

Usage:
    python3 scripts/embedding_server.py --model sentence-transformers/all-MiniLM-L6-v2
    python3 scripts/embedding_server.py --model /path/to/local/model --port 8080

Then point the engine at it:
    RAGTOPICS_EMBED_BASE_URL=http://127.0.0.1:8080 cargo test -p ragtopics --test acceptance -- --nocapture
or set "index_embedder"/"eval_embedder" to {"backend": "remote_http", "base_url": "http://127.0.0.1:8080", ...}.
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="sentence-transformers/all-MiniLM-L6-v2",
                        help="model id or local path")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    args = parser.parse_args()

    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer(args.model)

    class Handler(BaseHTTPRequestHandler):
        # HTTP/1.1 keeps connections alive between requests, which clients
        # with pooled connections expect.
        protocol_version = "HTTP/1.1"

        def do_POST(self):  # noqa: N802 (stdlib naming)
            if not self.path.endswith("/embeddings"):
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            texts = body["input"]
            vectors = model.encode(texts, normalize_embeddings=True)
            data = [
                {"index": i, "embedding": [float(x) for x in vec]}
                for i, vec in enumerate(vectors)
            ]
            payload = json.dumps({"data": data}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *log_args):
            pass  # keep the console quiet; the engine logs what matters

    server = ThreadingHTTPServer((args.host, args.port), Handler)
    print(f"serving {args.model} on http://{args.host}:{args.port}/embeddings", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
