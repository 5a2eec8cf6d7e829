/**
 * AMCD v1 writer.
 *
 * Layout, all little endian:
 *   bytes 0..3    magic "AMCD"
 *   bytes 4..23   u32 version (1), u32 example count, u32 sequence length,
 *                 u32 class count, u32 distinct snr count
 *   class table   per name: u16 byte length + utf8 bytes
 *   examples      per example: u16 label, i16 snr,
 *                 length f32 I samples, length f32 Q samples
 *
 * Sample bytes are copied verbatim, so the conversion is lossless for f32
 * values including any NaN payloads.
 */

import { ConversionPlan, BYTES_PER_EXAMPLE, SEQUENCE_LENGTH } from "./rml.js";

export const AMCD_MAGIC = "AMCD";
export const AMCD_VERSION = 1;
const HEADER_BYTES = 24;

export function amcdByteSize(plan: ConversionPlan): number {
  let size = HEADER_BYTES;
  for (const name of plan.classNames) {
    size += 2 + Buffer.byteLength(name, "utf-8");
  }
  return size + plan.totalExamples * (4 + BYTES_PER_EXAMPLE);
}

/** Serialize a conversion plan into one AMCD buffer. */
export function encodeAmcd(plan: ConversionPlan): Buffer {
  const out = Buffer.alloc(amcdByteSize(plan));
  let pos = 0;
  pos += out.write(AMCD_MAGIC, pos, "ascii");
  pos = out.writeUInt32LE(AMCD_VERSION, pos);
  pos = out.writeUInt32LE(plan.totalExamples, pos);
  pos = out.writeUInt32LE(SEQUENCE_LENGTH, pos);
  pos = out.writeUInt32LE(plan.classNames.length, pos);
  pos = out.writeUInt32LE(plan.distinctSnrs, pos);
  for (const name of plan.classNames) {
    const encoded = Buffer.from(name, "utf-8");
    pos = out.writeUInt16LE(encoded.length, pos);
    pos += encoded.copy(out, pos);
  }
  for (const slice of plan.slices) {
    for (let i = 0; i < slice.count; i++) {
      pos = out.writeUInt16LE(slice.label, pos);
      pos = out.writeInt16LE(slice.snr, pos);
      out.set(slice.bytes.subarray(i * BYTES_PER_EXAMPLE, (i + 1) * BYTES_PER_EXAMPLE), pos);
      pos += BYTES_PER_EXAMPLE;
    }
  }
  if (pos !== out.length) {
    throw new Error(`wrote ${pos} bytes into a ${out.length} byte buffer`);
  }
  return out;
}
