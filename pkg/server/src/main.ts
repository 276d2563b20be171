#!/usr/bin/env node
/**
 * CLI entry: serve one denoiser model over stdio or TCP.
 *
 *   node dist/main.js --model identity
 *   node dist/main.js --model gaussian --sigma 0.8
 *   node dist/main.js --model conv --weights taps.json --transport tcp --port 0
 *
 * stdio mode speaks frames on stdin/stdout (diagnostics go to stderr) and
 * exits at end of input.  TCP mode serves one connection at a time on
 * 127.0.0.1 and prints `listening on 127.0.0.1:<port>` once bound
 * (--port 0 picks a free port).  Startup problems exit 2.
 */

import { AddressInfo, Socket, createServer } from "net";

import { Model, ModelOptions, buildModel } from "./models";
import { Session, SessionSink } from "./server";

interface Args {
  transport: "stdio" | "tcp";
  port: number;
  model: string;
  opts: ModelOptions;
}

function usage(): string {
  return [
    "usage: main.js [--transport stdio|tcp] [--port N] [--model NAME] [--sigma S] [--weights PATH]",
    "",
    "  --transport   stdio (default) or tcp",
    "  --port        tcp only; 0 picks a free port (default 0)",
    "  --model       identity (default), gaussian, or conv",
    "  --sigma       gaussian filter width (gaussian model only)",
    "  --weights     JSON file with a 2-D array of filter taps (conv model only)",
  ].join("\n");
}

function parseArgs(argv: string[]): Args {
  const args: Args = { transport: "stdio", port: 0, model: "identity", opts: {} };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = () => {
      if (i + 1 >= argv.length) throw new Error(`${flag} needs a value`);
      return argv[++i];
    };
    if (flag === "--transport") {
      const t = value();
      if (t !== "stdio" && t !== "tcp") throw new Error(`--transport must be stdio or tcp, got '${t}'`);
      args.transport = t;
    } else if (flag === "--port") {
      const p = Number(value());
      if (!Number.isInteger(p) || p < 0 || p > 65535) throw new Error(`--port must be 0..65535`);
      args.port = p;
    } else if (flag === "--model") {
      args.model = value();
    } else if (flag === "--sigma") {
      const s = Number(value());
      if (!Number.isFinite(s)) throw new Error(`--sigma must be a number`);
      args.opts.sigma = s;
    } else if (flag === "--weights") {
      args.opts.weights = value();
    } else if (flag === "--help" || flag === "-h") {
      console.log(usage());
      process.exit(0);
    } else {
      throw new Error(`unknown argument '${flag}'`);
    }
  }
  return args;
}

function serveStdio(model: Model): void {
  const sink: SessionSink = {
    write: (chunk) => process.stdout.write(chunk),
    reset: () => {
      // Stop reading and let the process exit once stdout drains; the
      // error frame must reach the peer, so no hard process.exit() here.
      process.exitCode = 1;
      process.stdin.pause();
      process.stdin.destroy();
    },
  };
  const session = new Session(model, sink);
  process.stdin.on("data", (chunk: Buffer) => session.feed(chunk));
  process.stdin.on("end", () => session.end());
  // The peer vanishing mid-write is a normal way for a run to stop.
  process.stdout.on("error", () => process.exit(1));
  process.stderr.write(`serving ${model.describe} on stdio\n`);
}

function serveTcp(model: Model, port: number): void {
  let busy: Socket | null = null;
  const server = createServer((sock) => {
    if (busy !== null) {
      // Single-connection server: latecomers are turned away.
      sock.destroy();
      return;
    }
    busy = sock;
    const session = new Session(model, {
      write: (chunk) => sock.write(chunk),
      reset: () => sock.end(),
    });
    sock.on("data", (chunk: Buffer) => session.feed(chunk));
    sock.on("end", () => session.end());
    sock.on("error", () => {});
    sock.on("close", () => {
      busy = null;
    });
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address() as AddressInfo;
    console.log(`listening on 127.0.0.1:${addr.port}`);
  });
}

function main(): void {
  let args: Args;
  let model: Model;
  try {
    args = parseArgs(process.argv.slice(2));
    model = buildModel(args.model, args.opts);
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    console.error(usage());
    process.exit(2);
  }
  if (args.transport === "stdio") serveStdio(model);
  else serveTcp(model, args.port);
}

main();
