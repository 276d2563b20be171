/**
 * Transport-agnostic request loop: one Session per client connection.
 *
 * Handshakes are echoed.  Each denoise request is answered with a
 * response frame of identical dims.  A model failure answers an error
 * frame and the session keeps serving.  Framing violations — bad magic,
 * unknown or unexpected frame types, bogus dims, or end-of-stream in the
 * middle of a frame — answer an error frame and reset the connection,
 * since the byte stream can no longer be trusted.
 */

import {
  Frame,
  FrameParser,
  MsgType,
  encodeErrorFrame,
  encodeHandshakeFrame,
  encodeImageFrame,
  floatsToPayload,
  payloadToFloats,
} from "./frame";
import { Image, Model } from "./models";

export interface SessionSink {
  write(chunk: Buffer): void;
  /** Drop the connection (after flushing pending writes). */
  reset(): void;
}

function errorMessage(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export class Session {
  private parser = new FrameParser();
  private dead = false;

  constructor(
    private readonly model: Model,
    private readonly sink: SessionSink,
  ) {}

  /** Feed inbound bytes; outbound frames go to the sink. */
  feed(chunk: Buffer): void {
    if (this.dead) return;
    let frames: Frame[];
    try {
      frames = this.parser.push(chunk);
    } catch (err) {
      this.fail(errorMessage(err));
      return;
    }
    for (const frame of frames) {
      this.handle(frame);
      if (this.dead) return;
    }
  }

  /** Signal end of input; EOF inside a frame is a protocol violation. */
  end(): void {
    if (this.dead) return;
    if (this.parser.pending > 0) this.fail("short read");
  }

  private handle(frame: Frame): void {
    switch (frame.type) {
      case MsgType.Handshake:
        this.sink.write(encodeHandshakeFrame());
        return;
      case MsgType.DenoiseRequest: {
        const img: Image = {
          height: frame.height,
          width: frame.width,
          channels: frame.channels,
          data: payloadToFloats(frame.payload),
        };
        let out: Image;
        try {
          out = this.model.denoise(img);
        } catch (err) {
          // Internal model failure is not a framing problem: report it
          // and keep serving.
          this.sink.write(encodeErrorFrame(`model failed: ${errorMessage(err)}`));
          return;
        }
        this.sink.write(
          encodeImageFrame(
            MsgType.DenoiseResponse,
            out.height,
            out.width,
            out.channels,
            floatsToPayload(out.data),
          ),
        );
        return;
      }
      case MsgType.DenoiseResponse:
        this.fail("unexpected denoise_response frame");
        return;
      case MsgType.Error:
        this.fail("unexpected error frame");
        return;
    }
  }

  private fail(message: string): void {
    this.dead = true;
    this.sink.write(encodeErrorFrame(message));
    this.sink.reset();
  }
}
