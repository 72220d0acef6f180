/**
 * Minimal .npy v1.0 writer and reader restricted to little-endian float32
 * and int32 in C order.
 *
 * The byte layout matches the consuming toolkit's reader exactly: the ASCII
 * header dict lists descr, fortran_order, shape in that order and is padded
 * with spaces so that magic(6) + version(2) + length(2) + header is a
 * multiple of 64 bytes, ending in a newline. Anything outside that subset
 * is rejected on read.
 */

import { readFileSync, writeFileSync } from 'fs';

const MAGIC = Buffer.from([0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]); // \x93NUMPY
const HEADER_ALIGN = 64;

export type NpyData = Float32Array | Int32Array;

export interface NpyArray {
  data: NpyData;
  shape: number[];
}

function shapeRepr(shape: number[]): string {
  // python tuple repr: one-element tuples carry a trailing comma
  if (shape.length === 1) return `(${shape[0]},)`;
  return `(${shape.join(', ')})`;
}

function elementCount(shape: number[]): number {
  let count = 1;
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`shape entries must be positive ints, got [${shape.join(', ')}]`);
    }
    count *= dim;
  }
  return count;
}

export function encodeNpy(data: NpyData, shape: number[]): Buffer {
  if (shape.length === 0) {
    throw new Error('refusing to write a zero-rank tensor');
  }
  const count = elementCount(shape);
  if (count !== data.length) {
    throw new Error(`shape [${shape.join(', ')}] needs ${count} values, data has ${data.length}`);
  }
  const descr = data instanceof Float32Array ? '<f4' : '<i4';
  const head = `{'descr': '${descr}', 'fortran_order': False, 'shape': ${shapeRepr(shape)}, }`;
  const unpadded = MAGIC.length + 2 + 2 + head.length + 1;
  const pad = (HEADER_ALIGN - (unpadded % HEADER_ALIGN)) % HEADER_ALIGN;
  const header = head + ' '.repeat(pad) + '\n';
  const out = Buffer.alloc(10 + header.length + data.byteLength);
  MAGIC.copy(out, 0);
  out[6] = 1;
  out[7] = 0;
  out.writeUInt16LE(header.length, 8);
  out.write(header, 10, 'ascii');
  // typed arrays are platform-endian; every target this runs on is little-endian
  Buffer.from(data.buffer, data.byteOffset, data.byteLength).copy(out, 10 + header.length);
  return out;
}

export function writeNpy(path: string, data: NpyData, shape: number[]): void {
  writeFileSync(path, encodeNpy(data, shape));
}

const HEADER_RE = /^\{'descr': '(<f4|<i4)', 'fortran_order': (False|True), 'shape': \(([0-9, ]*)\), \} *\n$/;

export function decodeNpy(blob: Buffer, name = '<buffer>'): NpyArray {
  if (blob.length < 10) {
    throw new Error(`${name}: file too short for a .npy header`);
  }
  if (!blob.subarray(0, 6).equals(MAGIC)) {
    throw new Error(`${name}: bad magic bytes`);
  }
  if (blob[6] !== 1 || blob[7] !== 0) {
    throw new Error(`${name}: unsupported .npy version ${blob[6]}.${blob[7]}`);
  }
  const hlen = blob.readUInt16LE(8);
  if (blob.length < 10 + hlen) {
    throw new Error(`${name}: truncated header (declared ${hlen} bytes)`);
  }
  const header = blob.subarray(10, 10 + hlen).toString('ascii');
  const m = header.match(HEADER_RE);
  if (!m) {
    throw new Error(`${name}: unsupported or malformed header ${JSON.stringify(header)}`);
  }
  if (m[2] !== 'False') {
    throw new Error(`${name}: only C-order files are supported`);
  }
  const dims = m[3]
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  if (dims.length === 0) {
    throw new Error(`${name}: shape must be a nonempty tuple`);
  }
  const count = elementCount(dims);
  const payload = blob.subarray(10 + hlen);
  if (payload.length !== count * 4) {
    throw new Error(`${name}: payload is ${payload.length} bytes, expected ${count * 4} for shape (${m[3]})`);
  }
  // copy into a fresh buffer so the typed array is 4-byte aligned and owns its memory
  const aligned = Buffer.alloc(payload.length);
  payload.copy(aligned);
  const data =
    m[1] === '<f4'
      ? new Float32Array(aligned.buffer, aligned.byteOffset, count)
      : new Int32Array(aligned.buffer, aligned.byteOffset, count);
  return { data, shape: dims };
}

export function readNpy(path: string): NpyArray {
  return decodeNpy(readFileSync(path), path);
}
