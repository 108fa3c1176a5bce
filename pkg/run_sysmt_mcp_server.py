"""以HTTP Streamable方式启动SySMT MCP服务器

    python run_sysmt_mcp_server.py --port 3060
"""

import argparse
import logging
import sys

import uvicorn
from starlette.middleware import Middleware
from starlette.middleware.cors import CORSMiddleware

from sysmt_sim.server import mcp

logger = logging.getLogger("sysmt_sim.launcher")


def _parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="SySMT MCP服务器")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=3060)
    parser.add_argument("--log-file", default="sysmt_mcp_server.log")
    return parser.parse_args(argv)


def main(argv=None):
    args = _parse_args(argv)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stdout), logging.FileHandler(args.log_file, encoding="utf-8")],
    )

    # 浏览器端MCP客户端需要跨域
    app = mcp.http_app(middleware=[
        Middleware(
            CORSMiddleware,
            allow_origins=["*"],
            allow_credentials=True,
            allow_methods=["GET", "POST", "OPTIONS"],
            allow_headers=["*"],
        ),
    ])

    logger.info(f"SySMT MCP服务地址: http://{args.host}:{args.port}/mcp")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    finally:
        logger.info("SySMT MCP服务器已退出")


if __name__ == "__main__":
    main()
