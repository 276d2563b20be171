/**
 * Binary frame codec for the denoiser bridge.
 *
 * Wire layout (17-byte header, then payload):
 *
 *     offset  size  field
 *     0       4     magic "VSTB"
 *     4       1     msg type: 0=denoise_request, 1=denoise_response,
 *                   2=error, 3=handshake
 *     5       4     height   (u32 LE)
 *     9       4     width    (u32 LE)
 *     13      4     channels (u32 LE)
 *
 * Request/response payload: height*width*channels float32 LE values,
 * row-major with interleaved channels, carried bit-for-bit (payloads are
 * moved as raw bytes, never through number round trips, so subnormals,
 * signed zeros and NaN bit patterns survive).  Error frames have zero
 * dims and a u32 LE byte length followed by a UTF-8 message.  Handshake
 * frames have zero dims and no payload.
 */

import { endianness } from "os";

// Payload floats are memcpy'd through typed arrays, which take the host
// byte order; the protocol is little-endian only.
if (endianness() !== "LE") {
  throw new Error("big-endian hosts are not supported");
}

export const MAGIC = Buffer.from("VSTB", "ascii");
export const HEADER_SIZE = 17;

/** Allocation guard on inbound dims (matches the client). */
export const MAX_ELEMS = 1 << 28;

const MAX_ERROR_BYTES = 1 << 20;

export enum MsgType {
  DenoiseRequest = 0,
  DenoiseResponse = 1,
  Error = 2,
  Handshake = 3,
}

export interface ImageFrame {
  type: MsgType.DenoiseRequest | MsgType.DenoiseResponse;
  height: number;
  width: number;
  channels: number;
  /** Raw little-endian float32 bytes, length = height*width*channels*4. */
  payload: Buffer;
}

export interface ErrorFrame {
  type: MsgType.Error;
  message: string;
}

export interface HandshakeFrame {
  type: MsgType.Handshake;
}

export type Frame = ImageFrame | ErrorFrame | HandshakeFrame;

/** Raised on malformed input: bad magic, unknown type, bogus dims. */
export class FrameFormatError extends Error {}

function header(type: MsgType, h: number, w: number, c: number): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  MAGIC.copy(buf, 0);
  buf.writeUInt8(type, 4);
  buf.writeUInt32LE(h, 5);
  buf.writeUInt32LE(w, 9);
  buf.writeUInt32LE(c, 13);
  return buf;
}

export function encodeImageFrame(
  type: MsgType.DenoiseRequest | MsgType.DenoiseResponse,
  height: number,
  width: number,
  channels: number,
  payload: Buffer,
): Buffer {
  if (payload.length !== height * width * channels * 4) {
    throw new FrameFormatError(
      `payload is ${payload.length} bytes, dims ${height}x${width}x${channels} need ` +
        `${height * width * channels * 4}`,
    );
  }
  return Buffer.concat([header(type, height, width, channels), payload]);
}

export function encodeErrorFrame(message: string): Buffer {
  const msg = Buffer.from(message, "utf8");
  const len = Buffer.alloc(4);
  len.writeUInt32LE(msg.length, 0);
  return Buffer.concat([header(MsgType.Error, 0, 0, 0), len, msg]);
}

export function encodeHandshakeFrame(): Buffer {
  return header(MsgType.Handshake, 0, 0, 0);
}

/** Copy payload bytes into an aligned Float32Array (no value round trip). */
export function payloadToFloats(payload: Buffer): Float32Array {
  const out = new Float32Array(payload.length / 4);
  new Uint8Array(out.buffer).set(payload);
  return out;
}

/** Copy a Float32Array out as raw little-endian bytes. */
export function floatsToPayload(values: Float32Array): Buffer {
  return Buffer.from(
    new Uint8Array(values.buffer, values.byteOffset, values.byteLength).slice(),
  );
}

function validImageDims(h: number, w: number, c: number): boolean {
  if (h < 1 || w < 1 || (c !== 1 && c !== 3)) return false;
  // u32 products can exceed exact Number range; compare in BigInt.
  return BigInt(h) * BigInt(w) * BigInt(c) <= BigInt(MAX_ELEMS);
}

/**
 * Incremental parser: push byte chunks in, get whole frames out.  Throws
 * FrameFormatError as soon as the stream cannot be a valid frame; after
 * that the stream is unsynced and the connection should be dropped.
 */
export class FrameParser {
  private buf: Buffer = Buffer.alloc(0);

  /** Buffered byte count; nonzero at end-of-stream means a short read. */
  get pending(): number {
    return this.buf.length;
  }

  push(chunk: Buffer): Frame[] {
    this.buf = this.buf.length ? Buffer.concat([this.buf, chunk]) : chunk;
    const frames: Frame[] = [];
    for (;;) {
      const frame = this.tryParse();
      if (frame === null) return frames;
      frames.push(frame);
    }
  }

  private tryParse(): Frame | null {
    if (this.buf.length < HEADER_SIZE) return null;
    if (!this.buf.subarray(0, 4).equals(MAGIC)) {
      throw new FrameFormatError("bad magic");
    }
    const type = this.buf.readUInt8(4);
    const h = this.buf.readUInt32LE(5);
    const w = this.buf.readUInt32LE(9);
    const c = this.buf.readUInt32LE(13);

    if (type === MsgType.Handshake) {
      this.buf = this.buf.subarray(HEADER_SIZE);
      return { type: MsgType.Handshake };
    }
    if (type === MsgType.Error) {
      if (this.buf.length < HEADER_SIZE + 4) return null;
      const len = this.buf.readUInt32LE(HEADER_SIZE);
      if (len > MAX_ERROR_BYTES) {
        throw new FrameFormatError(`oversized error message (${len} bytes)`);
      }
      const need = HEADER_SIZE + 4 + len;
      if (this.buf.length < need) return null;
      const message = this.buf.subarray(HEADER_SIZE + 4, need).toString("utf8");
      this.buf = this.buf.subarray(need);
      return { type: MsgType.Error, message };
    }
    if (type === MsgType.DenoiseRequest || type === MsgType.DenoiseResponse) {
      if (!validImageDims(h, w, c)) {
        throw new FrameFormatError(`bad dims ${h}x${w}x${c}`);
      }
      const need = HEADER_SIZE + h * w * c * 4;
      if (this.buf.length < need) return null;
      const payload = this.buf.subarray(HEADER_SIZE, need);
      this.buf = this.buf.subarray(need);
      return { type, height: h, width: w, channels: c, payload };
    }
    throw new FrameFormatError(`unknown frame type ${type}`);
  }
}
